//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Scene generation could not place all objects within the bounded
    /// retry budget; the object count is too large for the workspace.
    #[error("scene-infeasible: could not place {requested} objects after {retries} retries")]
    SceneInfeasible { requested: usize, retries: usize },

    /// The target object has been grasped away and is no longer in the world.
    #[error("target-grasped: target object {0} is no longer in the world")]
    TargetGrasped(u32),

    /// A goal mask with no set cells was passed where a target is required.
    #[error("target-absent: goal mask has no set cells")]
    TargetAbsent,

    /// A non-finite activation or gradient was produced.
    #[error("numerical-divergence in {0}")]
    NumericalDivergence(&'static str),

    /// Stages must run in order I..V, each consuming the previous checkpoint.
    #[error("stage-order: {0}")]
    StageOrder(String),

    /// Q* calibration collected too few successful grasps.
    #[error("calibration-insufficient: only {successes} successful grasps (need >= {needed})")]
    CalibrationInsufficient { successes: usize, needed: usize },

    /// Checkpoint file is malformed or does not match the architecture.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Config file problem (unknown key, bad value, missing file).
    #[error("config: {0}")]
    Config(String),

    /// CSV / snapshot parse failure, with 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
