//! Workspace grid: configuration, pixel/world transforms and a dense
//! row-major 2D container used for heightmaps, masks and Q maps.

use crate::geometry::Vec2;

/// Square workspace discretized into `resolution x resolution` cells.
///
/// `extent` is always exactly `resolution * cell_size`; the struct stores
/// the two independent quantities and derives the third.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    resolution: usize,
    cell_size: f64,
}

impl GridConfig {
    pub const DEFAULT_RESOLUTION: usize = 64;
    pub const DEFAULT_CELL_SIZE: f64 = 0.007;

    pub fn new(resolution: usize, cell_size: f64) -> Self {
        assert!(resolution >= 16, "resolution must be >= 16");
        assert!(cell_size > 0.0, "cell_size must be positive");
        Self {
            resolution,
            cell_size,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Workspace side length in meters.
    pub fn extent(&self) -> f64 {
        self.resolution as f64 * self.cell_size
    }

    /// World coordinates of a cell center.
    pub fn pixel_to_world(&self, p: Pixel) -> Vec2 {
        debug_assert!(self.in_bounds(p));
        Vec2::new(
            (p.col as f64 + 0.5) * self.cell_size,
            (p.row as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cell containing a world point, clamped to the grid.
    pub fn world_to_pixel(&self, w: Vec2) -> Pixel {
        let max = self.resolution as isize - 1;
        let col = ((w.x / self.cell_size).floor() as isize).clamp(0, max);
        let row = ((w.y / self.cell_size).floor() as isize).clamp(0, max);
        Pixel {
            row: row as usize,
            col: col as usize,
        }
    }

    pub fn in_bounds(&self, p: Pixel) -> bool {
        p.row < self.resolution && p.col < self.resolution
    }

    /// World point inside the workspace (closed at 0, open at extent).
    pub fn contains_world(&self, w: Vec2) -> bool {
        w.x >= 0.0 && w.y >= 0.0 && w.x < self.extent() && w.y < self.extent()
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self::new(Self::DEFAULT_RESOLUTION, Self::DEFAULT_CELL_SIZE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Dense row-major grid of `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.cols + col]
    }

    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn iter_indexed(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let cols = self.cols;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i / cols, i % cols, v))
    }
}

impl Grid<f64> {
    /// Maximum over the 3x3 neighborhood of a cell, clipped at borders.
    pub fn max3x3(&self, p: Pixel) -> f64 {
        let r0 = p.row.saturating_sub(1);
        let c0 = p.col.saturating_sub(1);
        let r1 = (p.row + 1).min(self.rows - 1);
        let c1 = (p.col + 1).min(self.cols - 1);
        let mut best = f64::NEG_INFINITY;
        for r in r0..=r1 {
            for c in c0..=c1 {
                best = best.max(*self.get(r, c));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_extent_is_exact() {
        let cfg = GridConfig::default();
        assert_eq!(cfg.resolution(), 64);
        assert_eq!(cfg.extent(), 64.0 * 0.007);
    }

    #[test]
    fn pixel_world_round_trip_every_cell() {
        let cfg = GridConfig::new(32, 0.007);
        for row in 0..32 {
            for col in 0..32 {
                let p = Pixel::new(row, col);
                let w = cfg.pixel_to_world(p);
                assert_eq!(cfg.world_to_pixel(w), p);
            }
        }
    }

    #[test]
    fn corner_cells_follow_center_convention() {
        let cfg = GridConfig::new(64, 0.007);
        let w0 = cfg.pixel_to_world(Pixel::new(0, 0));
        assert!((w0.x - 0.0035).abs() < 1e-15);
        assert!((w0.y - 0.0035).abs() < 1e-15);
        let w1 = cfg.pixel_to_world(Pixel::new(63, 63));
        assert!((w1.x - (cfg.extent() - 0.0035)).abs() < 1e-12);
        assert!((w1.y - (cfg.extent() - 0.0035)).abs() < 1e-12);
    }

    #[test]
    fn max3x3_clips_at_borders() {
        let mut g = Grid::filled(4, 4, 0.0);
        g.set(0, 0, 2.0);
        g.set(3, 3, 5.0);
        assert_eq!(g.max3x3(Pixel::new(0, 1)), 2.0);
        assert_eq!(g.max3x3(Pixel::new(2, 2)), 5.0);
        assert_eq!(g.max3x3(Pixel::new(1, 2)), 0.0);
    }
}
