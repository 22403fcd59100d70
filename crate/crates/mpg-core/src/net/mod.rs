//! Three-branch fully convolutional Q-network with 16-way rotation
//! batching, from-scratch forward/backward, Huber loss, TD targets and an
//! Adam optimizer.
//!
//! Architecture per branch: private color and depth encoders (three 3x3
//! stride-2 conv + ReLU blocks), a goal-mask encoder shared across
//! branches, feature concatenation, then a head of two 1x1 convolutions
//! with ReLU and spatial batch normalization in between, bilinearly
//! upsampled back to input resolution.

mod adam;
mod backward;
mod checkpoint;
mod forward;
mod ops;
mod params;
mod tensor;

pub use adam::{adam_update, AdamHp};
pub use backward::{
    backward, forward_all, loss_and_grads, train_step, BranchGrads, StepStats, TrainSample,
};
pub use checkpoint::{deserialize, load, save, serialize};
pub use forward::{forward_infer, forward_train, NetInput, QMaps, TrainCache, DEPTH_INPUT_SCALE};
pub use ops::{rotate, rotate_backward, upsample, upsample_backward};
pub use params::{
    ArchConfig, BatchNorm, BranchNet, ConvLayer, Encoder, Head, NetParams, RotMode, BRANCH_GRASP,
    BRANCH_MOVE, BRANCH_NAMES, BRANCH_PUSH, DOWNSCALE, NUM_BRANCHES,
};
pub use tensor::{Image, Param};

/// Huber loss of a non-negative TD error: quadratic below 1, linear above.
///
/// Panics on negative input (caller contract).
pub fn huber(delta: f64) -> f64 {
    assert!(delta >= 0.0, "huber expects |delta|");
    if delta < 1.0 {
        0.5 * delta * delta
    } else {
        delta - 0.5
    }
}

/// TD target: the immediate reward plus the discounted best next Q over
/// the admissible action set (already reduced to a scalar by the caller).
pub fn td_target(reward: f64, max_next_q: f64, terminal: bool, gamma: f64) -> f64 {
    assert!((0.0..1.0).contains(&gamma), "gamma in [0, 1)");
    if terminal {
        reward
    } else {
        reward + gamma * max_next_q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_matches_analytic_values() {
        assert_eq!(huber(0.0), 0.0);
        assert_eq!(huber(0.5), 0.125);
        assert_eq!(huber(1.0), 0.5);
        assert_eq!(huber(2.0), 1.5);
    }

    #[test]
    fn huber_is_continuous_at_one() {
        let eps = 1e-9;
        let below = huber(1.0 - eps);
        let above = huber(1.0 + eps);
        assert!((below - 0.5).abs() < 2e-9);
        assert!((above - 0.5).abs() < 2e-9);
    }

    #[test]
    #[should_panic]
    fn huber_rejects_negative() {
        huber(-0.1);
    }

    #[test]
    fn td_target_arithmetic() {
        assert_eq!(td_target(1.0, 99.0, true, 0.5), 1.0);
        assert_eq!(td_target(0.5, 1.8, false, 0.5), 1.4);
        assert_eq!(td_target(0.0, 0.0, false, 0.5), 0.0);
    }
}
