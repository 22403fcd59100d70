//! Scenario-based evaluation: task success rate, average motion number and
//! grasp-success windows, plus the baseline policies.
//!
//! Episodes are embarrassingly parallel over a read-only parameter
//! snapshot; per-episode RNG streams are derived by seed splitting, so
//! reports are identical regardless of thread count.

pub mod plot;

use crate::action::{branch_kind, Action, NUM_ROTATIONS};
use crate::error::Result;
use crate::exec::{map_indexed, Exec};
use crate::grid::{Grid, GridConfig, Pixel};
use crate::metrics::MetricRow;
use crate::net::{forward_infer, NetInput, NetParams, QMaps, BRANCH_GRASP, BRANCH_MOVE, BRANCH_PUSH};
use crate::reward::{masked_max_q, rough_mask, ROUGH_MASK_MARGIN};
use crate::train::CoordinatorConfig;
use crate::world::{
    check_occlusion, execute_grasp, execute_move, execute_push, render, ActionKind, SpawnMode,
    WorldState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Full coordination: move under occlusion, grasp above Q*, push otherwise.
    Mpg,
    /// Greedy grasping at the masked argmax, no coordination.
    GraspOnly,
    /// Uniform primitive, uniform rough-mask pixel, uniform rotation.
    Random,
}

impl Policy {
    pub fn parse(s: &str) -> Option<Policy> {
        match s {
            "mpg" => Some(Policy::Mpg),
            "grasp-only" => Some(Policy::GraspOnly),
            "random" => Some(Policy::Random),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Mpg => "mpg",
            Policy::GraspOnly => "grasp-only",
            Policy::Random => "random",
        }
    }

    pub fn needs_checkpoint(&self) -> bool {
        !matches!(self, Policy::Random)
    }
}

#[derive(Debug, Clone)]
pub struct EvalScenario {
    pub n_objects: usize,
    pub n_runs: usize,
    /// Target drawn uniformly from the first `target_range` object ids.
    pub target_range: usize,
    pub seed: u64,
    pub mode: SpawnMode,
    /// Motion budget per run.
    pub max_motions: u32,
}

impl EvalScenario {
    pub fn new(n_objects: usize, n_runs: usize, seed: u64) -> Self {
        Self {
            n_objects,
            n_runs,
            target_range: 5.min(n_objects),
            seed,
            mode: SpawnMode::Mixed,
            max_motions: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub target: u32,
    pub success: bool,
    pub motions: u32,
    pub termination: String,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub policy: Policy,
    pub n_objects: usize,
    pub seed: u64,
    pub runs: Vec<RunRecord>,
    pub task_success_rate: f64,
    /// Mean motions over successful runs; `None` when nothing succeeded.
    pub avg_motion_number: Option<f64>,
}

impl EvalReport {
    /// Recomputes the summary statistics from the per-run records.
    pub fn stats_of(runs: &[RunRecord]) -> (f64, Option<f64>) {
        let n = runs.len().max(1);
        let successes: Vec<&RunRecord> = runs.iter().filter(|r| r.success).collect();
        let rate = successes.len() as f64 / n as f64;
        let avg = if successes.is_empty() {
            None
        } else {
            Some(successes.iter().map(|r| r.motions as f64).sum::<f64>() / successes.len() as f64)
        };
        (rate, avg)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("run,target,success,motions,termination\n");
        for r in &self.runs {
            writeln!(
                s,
                "{},{},{},{},{}",
                r.run,
                r.target,
                if r.success { 1 } else { 0 },
                r.motions,
                r.termination
            )
            .unwrap();
        }
        s
    }

    /// Human-readable summary block. Motion numbers average successful
    /// runs only.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "policy: {}", self.policy.name()).unwrap();
        writeln!(s, "objects: {}  runs: {}  seed: {}", self.n_objects, self.runs.len(), self.seed)
            .unwrap();
        writeln!(s, "task success rate: {:.3}", self.task_success_rate).unwrap();
        match self.avg_motion_number {
            Some(m) => writeln!(s, "avg motion number (successful runs): {m:.3}").unwrap(),
            None => writeln!(s, "avg motion number: n/a (no successful runs)").unwrap(),
        }
        s
    }
}

/// Picks the policy's next action for the current observation.
fn policy_action(
    policy: Policy,
    qmaps: Option<&QMaps>,
    rough: &Grid<bool>,
    occluded: bool,
    coord: &CoordinatorConfig,
    rng: &mut ChaCha8Rng,
) -> Action {
    match policy {
        Policy::Random => {
            let kind = match rng.gen_range(0..3) {
                0 => ActionKind::Move,
                1 => ActionKind::Grasp,
                _ => ActionKind::Push,
            };
            let cells: Vec<Pixel> = rough
                .iter_indexed()
                .filter(|(_, _, &m)| m)
                .map(|(r, c, _)| Pixel::new(r, c))
                .collect();
            let pixel = cells[rng.gen_range(0..cells.len())];
            Action {
                kind,
                pixel,
                rot_idx: rng.gen_range(0..NUM_ROTATIONS),
            }
        }
        Policy::GraspOnly => {
            let q = qmaps.expect("grasp-only needs Q maps");
            let (_, rot, pixel) = masked_max_q(q, BRANCH_GRASP, rough);
            Action {
                kind: ActionKind::Grasp,
                pixel,
                rot_idx: rot,
            }
        }
        Policy::Mpg => {
            let q = qmaps.expect("mpg needs Q maps");
            let branch = if occluded {
                BRANCH_MOVE
            } else {
                let (max_qg, _, _) = masked_max_q(q, BRANCH_GRASP, rough);
                if max_qg > coord.q_star {
                    BRANCH_GRASP
                } else {
                    BRANCH_PUSH
                }
            };
            let (_, rot, pixel) = masked_max_q(q, branch, rough);
            Action {
                kind: branch_kind(branch),
                pixel,
                rot_idx: rot,
            }
        }
    }
}

fn eval_one_run(
    run: usize,
    params: Option<&NetParams>,
    scenario: &EvalScenario,
    grid: &GridConfig,
    coord: &CoordinatorConfig,
    policy: Policy,
    exec: Exec,
) -> Result<RunRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(run as u64 + 1);
    let scene_seed: u64 = rng.gen();
    let mut world = spawn_eval_scene(grid, scenario, scene_seed)?;
    let range = scenario.target_range.min(scenario.n_objects).max(1);
    world.target_id = rng.gen_range(0..range) as u32;
    let target = world.target_id;

    let mut termination = "motion-cap".to_string();
    while world.motion_count < scenario.max_motions {
        if world.target_grasped {
            break;
        }
        if world.is_empty() {
            termination = "scene-empty".into();
            break;
        }
        let obs = render(&world, grid);
        let rough = match rough_mask(&obs.goal_mask, ROUGH_MASK_MARGIN) {
            Ok(r) => r,
            Err(_) => {
                termination = "target-absent".into();
                break;
            }
        };
        let occluded = check_occlusion(&world, grid)?;
        let qmaps = match params {
            Some(p) => Some(forward_infer(
                p,
                &NetInput::from_observation(&obs),
                &[BRANCH_MOVE, BRANCH_GRASP, BRANCH_PUSH],
                exec,
            )?),
            None => None,
        };
        let action = policy_action(policy, qmaps.as_ref(), &rough, occluded, coord, &mut rng);
        match action.kind {
            ActionKind::Grasp => {
                let out = execute_grasp(&mut world, action.pixel, action.rot_idx, grid);
                if out.grasped_id == Some(target) {
                    termination = "target-grasped".into();
                }
            }
            ActionKind::Push => {
                execute_push(&mut world, action.pixel, action.rot_idx, grid);
            }
            ActionKind::Move => {
                let out = execute_move(&mut world, action.pixel, action.rot_idx, grid);
                if out.grasped_id == Some(target) {
                    termination = "target-moved-away".into();
                }
            }
        }
        if world.target_grasped && termination == "motion-cap" {
            termination = "target-grasped".into();
        }
    }
    let success = termination == "target-grasped";
    Ok(RunRecord {
        run,
        target,
        success,
        motions: world.motion_count,
        termination,
    })
}

fn spawn_eval_scene(
    grid: &GridConfig,
    scenario: &EvalScenario,
    seed: u64,
) -> Result<WorldState> {
    crate::world::spawn_scene(grid, scenario.n_objects, scenario.mode, seed)
}

/// Runs the scenario under a policy with pure exploitation (ε = 0 for the
/// learned policies) and paired per-run seeds.
pub fn evaluate(
    params: Option<&NetParams>,
    scenario: &EvalScenario,
    grid: &GridConfig,
    coord: &CoordinatorConfig,
    policy: Policy,
    exec: Exec,
) -> Result<EvalReport> {
    assert!(scenario.n_runs >= 1, "need at least one run");
    assert!(
        scenario.target_range.min(scenario.n_objects) >= 1,
        "target range must cover at least one object"
    );
    if policy.needs_checkpoint() {
        assert!(params.is_some(), "{} policy needs a checkpoint", policy.name());
    }
    let results: Vec<Result<RunRecord>> = map_indexed(exec, scenario.n_runs, |run| {
        eval_one_run(run, params, scenario, grid, coord, policy, exec)
    });
    let mut runs = Vec::with_capacity(scenario.n_runs);
    for r in results {
        runs.push(r?);
    }
    let (rate, avg) = EvalReport::stats_of(&runs);
    Ok(EvalReport {
        policy,
        n_objects: scenario.n_objects,
        seed: scenario.seed,
        runs,
        task_success_rate: rate,
        avg_motion_number: avg,
    })
}

/// Greedy grasp-only baseline action for one observation.
pub fn baseline_grasp_only(
    params: &NetParams,
    obs: &crate::world::Observation,
    exec: Exec,
) -> Result<Action> {
    let rough = rough_mask(&obs.goal_mask, ROUGH_MASK_MARGIN)?;
    let q = forward_infer(params, &NetInput::from_observation(obs), &[BRANCH_GRASP], exec)?;
    let (_, rot, pixel) = masked_max_q(&q, BRANCH_GRASP, &rough);
    Ok(Action {
        kind: ActionKind::Grasp,
        pixel,
        rot_idx: rot,
    })
}

/// Per-window grasp success ratios over metric rows; windows without any
/// grasp attempt yield `None` (a gap, not zero).
pub fn grasp_success_window(rows: &[MetricRow], window: u64) -> Vec<Option<f64>> {
    assert!(window > 0);
    let max_step = rows.iter().map(|r| r.step).max().unwrap_or(0);
    if max_step == 0 {
        return Vec::new();
    }
    let n_windows = max_step.div_ceil(window) as usize;
    let mut attempts = vec![0u64; n_windows];
    let mut successes = vec![0u64; n_windows];
    for r in rows {
        if r.is_window_summary() || !r.is_grasp_attempt() {
            continue;
        }
        let w = ((r.step - 1) / window) as usize;
        attempts[w] += 1;
        if r.success > 0.5 {
            successes[w] += 1;
        }
    }
    (0..n_windows)
        .map(|w| {
            if attempts[w] == 0 {
                None
            } else {
                Some(successes[w] as f64 / attempts[w] as f64)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricRow;

    fn grasp_row(step: u64, success: bool) -> MetricRow {
        MetricRow {
            stage: "I".into(),
            episode: 0,
            step,
            action_kind: "grasp".into(),
            reward: 0.0,
            loss: 0.0,
            q_max: 0.0,
            epsilon: 0.0,
            success: if success { 1.0 } else { 0.0 },
        }
    }

    #[test]
    fn window_ratios_and_gaps() {
        let mut rows: Vec<MetricRow> = (1..=10).map(|i| grasp_row(i, i <= 9)).collect();
        // second window: pushes only (no grasp attempts)
        for i in 201..=205 {
            let mut r = grasp_row(i, false);
            r.action_kind = "push".into();
            rows.push(r);
        }
        // third window: all failures
        for i in 401..=405 {
            rows.push(grasp_row(i, false));
        }
        let w = grasp_success_window(&rows, 200);
        assert_eq!(w.len(), 3);
        assert_eq!(w[0], Some(0.9));
        assert_eq!(w[1], None);
        assert_eq!(w[2], Some(0.0));
    }

    #[test]
    fn report_stats_recompute() {
        let runs = vec![
            RunRecord {
                run: 0,
                target: 0,
                success: true,
                motions: 2,
                termination: "target-grasped".into(),
            },
            RunRecord {
                run: 1,
                target: 1,
                success: false,
                motions: 10,
                termination: "motion-cap".into(),
            },
            RunRecord {
                run: 2,
                target: 0,
                success: true,
                motions: 4,
                termination: "target-grasped".into(),
            },
        ];
        let (rate, avg) = EvalReport::stats_of(&runs);
        assert!((rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(avg, Some(3.0));
        let (zero_rate, no_avg) = EvalReport::stats_of(&runs[1..2]);
        assert_eq!(zero_rate, 0.0);
        assert_eq!(no_avg, None);
    }

    #[test]
    #[should_panic]
    fn evaluate_rejects_zero_runs() {
        let scenario = EvalScenario::new(2, 0, 1);
        let grid = GridConfig::new(16, 0.007);
        let _ = evaluate(
            None,
            &scenario,
            &grid,
            &CoordinatorConfig::default(),
            Policy::Random,
            Exec::default(),
        );
    }
}
