//! Reward functions for the three primitives, the improved-Q computation
//! context, and the rough bounding-rectangle mask restricting Q evaluation.

use crate::error::{Error, Result};
use crate::grid::{Grid, Pixel};
use crate::net::QMaps;
use crate::world::{ActionKind, ActionOutcome};

/// Default dilation margin of the rough mask, in cells: gripper fingers
/// extend past the target footprint.
pub const ROUGH_MASK_MARGIN: usize = 2;

/// Q-improvement threshold gating the 0.5 reward for moves.
pub const MOVE_Q_THRESHOLD: f64 = 0.5;

/// Q-improvement threshold gating the 0.5 reward for pushes.
pub const PUSH_Q_THRESHOLD: f64 = 0.1;

/// Everything the reward functions need to score one executed action.
#[derive(Debug, Clone)]
pub struct RewardContext {
    pub outcome: ActionOutcome,
    pub target_id: u32,
    /// Masked max grasp-Q before the action (Q_g before move/push).
    pub q_before: f64,
    /// Masked max grasp-Q after the action.
    pub q_after: f64,
    pub occlusion_before: bool,
    pub occlusion_after: bool,
    pub changed: bool,
}

/// Target-agnostic grasp reward: 1 for grasping any object.
pub fn reward_grasp_agnostic(outcome: &ActionOutcome) -> f64 {
    assert_eq!(outcome.kind, ActionKind::Grasp, "wrong action kind");
    if outcome.grasped_id.is_some() {
        1.0
    } else {
        0.0
    }
}

/// Target-oriented grasp reward: 1 only for grasping the target; failed
/// grasps and wrong grasps score 0.
pub fn reward_grasp_target(outcome: &ActionOutcome, target_id: u32) -> f64 {
    assert_eq!(outcome.kind, ActionKind::Grasp, "wrong action kind");
    if outcome.grasped_id == Some(target_id) {
        1.0
    } else {
        0.0
    }
}

/// Move reward, evaluated in order:
/// (a) occlusion removed without grasping the target -> 1;
/// (b) grasp-Q improved beyond the threshold with a detected change -> 0.5;
/// (c) moved the target itself, or no change detected -> -0.5;
/// (d) otherwise -> 0.
pub fn reward_move(ctx: &RewardContext) -> f64 {
    assert_eq!(ctx.outcome.kind, ActionKind::Move, "wrong action kind");
    let moved_target = ctx.outcome.grasped_id == Some(ctx.target_id);
    if ctx.occlusion_before && !ctx.occlusion_after && !moved_target {
        return 1.0;
    }
    let q_improved = ctx.q_after - ctx.q_before;
    if q_improved > MOVE_Q_THRESHOLD && ctx.changed {
        return 0.5;
    }
    if moved_target || !ctx.changed {
        return -0.5;
    }
    0.0
}

/// Push reward: 0.5 when the grasp-Q improvement exceeds the threshold and
/// a change was detected; -0.5 when nothing changed; 0 otherwise.
pub fn reward_push(ctx: &RewardContext) -> f64 {
    assert_eq!(ctx.outcome.kind, ActionKind::Push, "wrong action kind");
    let q_improved = ctx.q_after - ctx.q_before;
    if q_improved > PUSH_Q_THRESHOLD && ctx.changed {
        return 0.5;
    }
    if !ctx.changed {
        return -0.5;
    }
    0.0
}

/// Filled axis-aligned bounding rectangle of the goal mask, dilated by
/// `margin` cells and clamped to the grid.
pub fn rough_mask(goal_mask: &Grid<bool>, margin: usize) -> Result<Grid<bool>> {
    let mut r0 = usize::MAX;
    let mut r1 = 0usize;
    let mut c0 = usize::MAX;
    let mut c1 = 0usize;
    for (r, c, &m) in goal_mask.iter_indexed() {
        if m {
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(c);
            c1 = c1.max(c);
        }
    }
    if r0 == usize::MAX {
        return Err(Error::TargetAbsent);
    }
    let rows = goal_mask.rows();
    let cols = goal_mask.cols();
    let r0 = r0.saturating_sub(margin);
    let c0 = c0.saturating_sub(margin);
    let r1 = (r1 + margin).min(rows - 1);
    let c1 = (c1 + margin).min(cols - 1);
    let mut out = Grid::filled(rows, cols, false);
    for r in r0..=r1 {
        for c in c0..=c1 {
            out.set(r, c, true);
        }
    }
    Ok(out)
}

/// Maximum Q over one branch's 16 rotation maps with values outside the
/// rough mask treated as 0. Ties break deterministically by (rotation,
/// row, col) scan order.
pub fn masked_max_q(qmaps: &QMaps, branch: usize, rough: &Grid<bool>) -> (f64, usize, Pixel) {
    assert_eq!(qmaps.resolution(), rough.rows(), "shape mismatch");
    let res = qmaps.resolution();
    let mut best = f64::NEG_INFINITY;
    let mut best_at = (0usize, Pixel::new(0, 0));
    for rot in 0..crate::action::NUM_ROTATIONS {
        let map = qmaps.map(branch, rot);
        for row in 0..res {
            for col in 0..res {
                let q = if *rough.get(row, col) {
                    map[row * res + col]
                } else {
                    0.0
                };
                if q > best {
                    best = q;
                    best_at = (rot, Pixel::new(row, col));
                }
            }
        }
    }
    (best, best_at.0, best_at.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ActionKind;
    use std::collections::BTreeSet;

    fn outcome(kind: ActionKind, grasped: Option<u32>) -> ActionOutcome {
        ActionOutcome {
            kind,
            grasped_id: grasped,
            displaced_ids: BTreeSet::new(),
            world_changed: true,
        }
    }

    fn ctx(kind: ActionKind, grasped: Option<u32>) -> RewardContext {
        RewardContext {
            outcome: outcome(kind, grasped),
            target_id: 0,
            q_before: 0.0,
            q_after: 0.0,
            occlusion_before: false,
            occlusion_after: false,
            changed: false,
        }
    }

    #[test]
    fn grasp_rewards() {
        assert_eq!(reward_grasp_agnostic(&outcome(ActionKind::Grasp, Some(3))), 1.0);
        assert_eq!(reward_grasp_agnostic(&outcome(ActionKind::Grasp, None)), 0.0);
        assert_eq!(reward_grasp_target(&outcome(ActionKind::Grasp, Some(0)), 0), 1.0);
        assert_eq!(reward_grasp_target(&outcome(ActionKind::Grasp, Some(5)), 0), 0.0);
        assert_eq!(reward_grasp_target(&outcome(ActionKind::Grasp, None), 0), 0.0);
    }

    #[test]
    #[should_panic]
    fn grasp_reward_rejects_wrong_kind() {
        reward_grasp_agnostic(&outcome(ActionKind::Push, None));
    }

    #[test]
    fn move_reward_branches() {
        // occlusion cleared, target untouched -> 1
        let mut c = ctx(ActionKind::Move, Some(7));
        c.occlusion_before = true;
        c.occlusion_after = false;
        c.changed = true;
        assert_eq!(reward_move(&c), 1.0);
        // q improvement above threshold with change -> 0.5
        let mut c = ctx(ActionKind::Move, Some(7));
        c.q_after = 0.6;
        c.changed = true;
        assert_eq!(reward_move(&c), 0.5);
        // moved the target -> -0.5
        let mut c = ctx(ActionKind::Move, Some(0));
        c.changed = true;
        assert_eq!(reward_move(&c), -0.5);
        // no change -> -0.5
        let c = ctx(ActionKind::Move, None);
        assert_eq!(reward_move(&c), -0.5);
        // changed but useless -> 0
        let mut c = ctx(ActionKind::Move, Some(7));
        c.q_after = 0.2;
        c.changed = true;
        assert_eq!(reward_move(&c), 0.0);
    }

    #[test]
    fn push_reward_branches() {
        let mut c = ctx(ActionKind::Push, None);
        c.q_after = 0.3;
        c.changed = true;
        assert_eq!(reward_push(&c), 0.5);
        let c = ctx(ActionKind::Push, None);
        assert_eq!(reward_push(&c), -0.5);
        let mut c = ctx(ActionKind::Push, None);
        c.q_after = 0.05;
        c.changed = true;
        assert_eq!(reward_push(&c), 0.0);
    }

    #[test]
    fn rough_mask_bounding_rectangle() {
        // L-shaped mask spanning rows 10-20, cols 5-9
        let mut mask = Grid::filled(32, 32, false);
        for r in 10..=20 {
            mask.set(r, 5, true);
        }
        for c in 5..=9 {
            mask.set(20, c, true);
        }
        let rough = rough_mask(&mask, 0).unwrap();
        // independent min/max scan oracle
        for (r, c, &m) in rough.iter_indexed() {
            let expect = (10..=20).contains(&r) && (5..=9).contains(&c);
            assert_eq!(m, expect, "cell ({r},{c})");
        }
    }

    #[test]
    fn rough_mask_single_cell_and_clamping() {
        let mut mask = Grid::filled(8, 8, false);
        mask.set(3, 4, true);
        let rough = rough_mask(&mask, 0).unwrap();
        assert_eq!(rough.data().iter().filter(|&&m| m).count(), 1);
        assert!(rough.get(3, 4));
        // corner mask with margin 2 clamps at the grid edge
        let mut corner = Grid::filled(8, 8, false);
        corner.set(0, 0, true);
        let rough = rough_mask(&corner, 2).unwrap();
        for (r, c, &m) in rough.iter_indexed() {
            assert_eq!(m, r <= 2 && c <= 2);
        }
    }

    #[test]
    fn rough_mask_rejects_empty() {
        let empty = Grid::filled(8, 8, false);
        assert!(matches!(rough_mask(&empty, 0), Err(Error::TargetAbsent)));
    }

    #[test]
    fn rough_mask_superset_and_idempotent() {
        let mut mask = Grid::filled(16, 16, false);
        mask.set(2, 3, true);
        mask.set(9, 12, true);
        mask.set(5, 5, true);
        let rough = rough_mask(&mask, 0).unwrap();
        for (r, c, &m) in mask.iter_indexed() {
            if m {
                assert!(rough.get(r, c));
            }
        }
        let again = rough_mask(&rough, 0).unwrap();
        assert_eq!(rough, again);
    }
}
