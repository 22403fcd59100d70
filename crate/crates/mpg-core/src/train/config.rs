//! Flat `key = value` configuration covering every stage and coordinator
//! field, with documented defaults. Unknown keys are rejected.

use crate::error::{Error, Result};
use crate::grid::GridConfig;
use crate::net::AdamHp;
use crate::world::SpawnMode;

/// Per-stage schedule and episode-control caps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConfig {
    pub n_objects: usize,
    pub mode: SpawnMode,
    /// Training-step budget for the stage.
    pub iterations: u64,
    pub max_moves: u32,
    pub max_pushes: u32,
    pub max_motions: u32,
    /// Consecutive failed/wrong grasps before the heuristic grasp fires.
    pub grasp_limit: u32,
}

/// Coordination policy and exploration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinatorConfig {
    /// Grasp-Q threshold above which the target counts as graspable.
    pub q_star: f64,
    /// Recalibrate `q_star` from the trained grasp net after Stage II.
    pub q_star_auto: bool,
    pub move_q_threshold: f64,
    pub push_q_threshold: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub gamma: f64,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            q_star: 1.85,
            q_star_auto: true,
            move_q_threshold: 0.5,
            push_q_threshold: 0.1,
            epsilon_start: 0.5,
            epsilon_end: 0.1,
            epsilon_decay_steps: 1500,
            gamma: 0.5,
        }
    }
}

/// Optimizer and replay settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub replay_capacity: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 2e-5,
            beta1: 0.9,
            beta2: 0.99,
            replay_capacity: 512,
        }
    }
}

impl TrainHyper {
    pub fn adam(&self) -> AdamHp {
        AdamHp {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub resolution: usize,
    pub cell_size: f64,
    pub coordinator: CoordinatorConfig,
    pub train: TrainHyper,
    /// Stage I..V configs, indexed 0..4.
    pub stages: [StageConfig; 5],
}

impl Default for Config {
    fn default() -> Self {
        let caps = |n, mode, iterations| StageConfig {
            n_objects: n,
            mode,
            iterations,
            max_moves: 5,
            max_pushes: 5,
            max_motions: 10,
            grasp_limit: 2,
        };
        Self {
            resolution: GridConfig::DEFAULT_RESOLUTION,
            cell_size: GridConfig::DEFAULT_CELL_SIZE,
            coordinator: CoordinatorConfig::default(),
            train: TrainHyper::default(),
            stages: [
                caps(5, SpawnMode::Scattered, 600),
                caps(5, SpawnMode::Scattered, 600),
                // Stage III grows from 2-object stacked scenes (first half
                // of the budget) to this mode/count
                caps(4, SpawnMode::Mixed, 300),
                caps(5, SpawnMode::Adjacent, 300),
                caps(6, SpawnMode::Mixed, 600),
            ],
        }
    }
}

impl Config {
    pub fn grid(&self) -> GridConfig {
        GridConfig::new(self.resolution, self.cell_size)
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown keys and
    /// malformed values are errors.
    pub fn from_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config(format!(
                "line {}: expected 'key = value', got '{line}'",
                i + 1
            )))?;
            cfg.apply(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    /// Applies a single `key = value` override.
    pub fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value '{v}'"))
        }
        fn boolean(v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                _ => Err(format!("bad boolean '{v}'")),
            }
        }
        if let Some(rest) = key.strip_prefix("stage") {
            let (idx_str, field) = rest
                .split_once('.')
                .ok_or_else(|| format!("bad stage key '{key}'"))?;
            let idx: usize = num(idx_str)?;
            if !(1..=5).contains(&idx) {
                return Err(format!("stage index {idx} out of range"));
            }
            let st = &mut self.stages[idx - 1];
            match field {
                "n_objects" => st.n_objects = num(value)?,
                "mode" => {
                    st.mode = SpawnMode::parse(value)
                        .ok_or_else(|| format!("unknown mode '{value}'"))?
                }
                "iterations" => st.iterations = num(value)?,
                "max_moves" => st.max_moves = num(value)?,
                "max_pushes" => st.max_pushes = num(value)?,
                "max_motions" => st.max_motions = num(value)?,
                "grasp_limit" => st.grasp_limit = num(value)?,
                _ => return Err(format!("unknown key '{key}'")),
            }
            return Ok(());
        }
        match key {
            "grid.resolution" => self.resolution = num(value)?,
            "grid.cell_size" => self.cell_size = num(value)?,
            "coordinator.q_star" => self.coordinator.q_star = num(value)?,
            "coordinator.q_star_auto" => self.coordinator.q_star_auto = boolean(value)?,
            "coordinator.move_q_threshold" => self.coordinator.move_q_threshold = num(value)?,
            "coordinator.push_q_threshold" => self.coordinator.push_q_threshold = num(value)?,
            "coordinator.epsilon_start" => self.coordinator.epsilon_start = num(value)?,
            "coordinator.epsilon_end" => self.coordinator.epsilon_end = num(value)?,
            "coordinator.epsilon_decay_steps" => {
                self.coordinator.epsilon_decay_steps = num(value)?
            }
            "coordinator.gamma" => self.coordinator.gamma = num(value)?,
            "train.learning_rate" => self.train.learning_rate = num(value)?,
            "train.weight_decay" => self.train.weight_decay = num(value)?,
            "train.beta1" => self.train.beta1 = num(value)?,
            "train.beta2" => self.train.beta2 = num(value)?,
            "train.replay_capacity" => self.train.replay_capacity = num(value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Serializes every field; parsing the template reproduces the config.
    pub fn template(&self) -> String {
        let mut s = String::new();
        s.push_str("# workspace grid\n");
        s.push_str(&format!("grid.resolution = {}\n", self.resolution));
        s.push_str(&format!("grid.cell_size = {}\n", self.cell_size));
        let c = &self.coordinator;
        s.push_str("\n# coordination policy and exploration\n");
        s.push_str(&format!("coordinator.q_star = {}\n", c.q_star));
        s.push_str(&format!("coordinator.q_star_auto = {}\n", c.q_star_auto));
        s.push_str(&format!("coordinator.move_q_threshold = {}\n", c.move_q_threshold));
        s.push_str(&format!("coordinator.push_q_threshold = {}\n", c.push_q_threshold));
        s.push_str(&format!("coordinator.epsilon_start = {}\n", c.epsilon_start));
        s.push_str(&format!("coordinator.epsilon_end = {}\n", c.epsilon_end));
        s.push_str(&format!(
            "coordinator.epsilon_decay_steps = {}\n",
            c.epsilon_decay_steps
        ));
        s.push_str(&format!("coordinator.gamma = {}\n", c.gamma));
        let t = &self.train;
        s.push_str("\n# optimizer and replay\n");
        s.push_str(&format!("train.learning_rate = {}\n", t.learning_rate));
        s.push_str(&format!("train.weight_decay = {}\n", t.weight_decay));
        s.push_str(&format!("train.beta1 = {}\n", t.beta1));
        s.push_str(&format!("train.beta2 = {}\n", t.beta2));
        s.push_str(&format!("train.replay_capacity = {}\n", t.replay_capacity));
        s.push_str("\n# per-stage schedules\n");
        for (i, st) in self.stages.iter().enumerate() {
            let n = i + 1;
            s.push_str(&format!("stage{n}.n_objects = {}\n", st.n_objects));
            s.push_str(&format!("stage{n}.mode = {}\n", st.mode.name()));
            s.push_str(&format!("stage{n}.iterations = {}\n", st.iterations));
            s.push_str(&format!("stage{n}.max_moves = {}\n", st.max_moves));
            s.push_str(&format!("stage{n}.max_pushes = {}\n", st.max_pushes));
            s.push_str(&format!("stage{n}.max_motions = {}\n", st.max_motions));
            s.push_str(&format!("stage{n}.grasp_limit = {}\n", st.grasp_limit));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_round_trips() {
        let cfg = Config::default();
        let text = cfg.template();
        let back = Config::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(Config::from_str("bogus.key = 3\n").is_err());
        assert!(Config::from_str("stage1.bogus = 3\n").is_err());
        assert!(Config::from_str("stage9.n_objects = 3\n").is_err());
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = Config::from_str(
            "# comment\ncoordinator.gamma = 0.9\nstage3.iterations = 42 # inline\n",
        )
        .unwrap();
        assert_eq!(cfg.coordinator.gamma, 0.9);
        assert_eq!(cfg.stages[2].iterations, 42);
    }
}
