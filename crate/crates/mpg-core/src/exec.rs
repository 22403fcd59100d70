//! Execution strategy for data-parallel inner loops.
//!
//! The rotation batch of the network forward/backward pass and evaluation
//! episodes are embarrassingly parallel: every slot is an independent pure
//! computation written to its own output index, so the parallel and
//! sequential paths produce bit-identical results. The `parallel` feature
//! selects the default; both paths stay available so benchmarks can compare
//! them directly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Exec {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        Exec::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        Exec::Sequential
    }
}

/// Maps `0..n` through `f`, preserving index order in the output.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let out = map_indexed(Exec::default(), 100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_matches_sequential() {
        let a = map_indexed(Exec::Sequential, 64, |i| (i as f64).sqrt().sin());
        let b = map_indexed(Exec::Parallel, 64, |i| (i as f64).sqrt().sin());
        assert_eq!(a, b);
    }
}
