//! Desk-scale move-push-grasp synergy for target-oriented grasping in
//! occluded tabletop scenes.
//!
//! The crate bundles everything needed to train and evaluate the policy
//! end to end, fully deterministically on a CPU:
//!
//! * [`world`] — a 2.5D tabletop simulator: seeded scene generation,
//!   orthographic heightmap rendering, an occlusion check, and kinematic
//!   execution of the three motion primitives (move / push / grasp).
//! * [`action`] — the codec between network output coordinates
//!   (branch, rotation index, pixel) and world-frame action parameters.
//! * [`reward`] — the four reward functions, improved-Q computation and
//!   the rough bounding-rectangle mask that restricts Q evaluation.
//! * [`net`] — a from-scratch three-branch fully convolutional Q-network
//!   with 16-way rotation batching, analytic backprop, Huber loss and Adam.
//! * [`train`] — the five-stage curriculum: stage schedules, ε-greedy
//!   exploration, the action coordinator, episode control rules and
//!   discriminator-threshold calibration.
//! * [`eval`] — scenario-based evaluation (task success rate, motion
//!   counts, grasp-success windows), baseline policies and SVG plots.
//!
//! All randomness flows from explicit seeds; identical inputs reproduce
//! bit-identical worlds, observations, parameters and metric files,
//! independent of the `parallel` feature and thread count.

pub mod action;
pub mod error;
pub mod exec;
pub mod eval;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod net;
pub mod reward;
pub mod train;
pub mod world;

pub use error::{Error, Result};
pub use grid::{Grid, GridConfig, Pixel};
