//! Kinematic execution of the three motion primitives.

use super::render::{covered_cells, render};
use super::{
    clamp_into_workspace, gripper, pusher, thresholds, z_overlap, ActionKind, ActionOutcome,
    SceneObject, WorldState,
};
use crate::action::{action_height, rot_index_to_angle};
use crate::geometry::{ConvexPolygon, Vec2};
use crate::grid::{GridConfig, Pixel};
use std::collections::BTreeSet;

/// Outcome of the parallel-jaw closing test at a pose.
struct JawCheck {
    /// Id of the single object the jaws close on, if the grasp succeeds.
    grasped: Option<u32>,
}

/// Runs the gripper model at world position `(x, y)`, closing axis angle
/// `theta`, with finger tips descended to `z_low`.
///
/// Success requires: exactly one object intersects the closing corridor at
/// contact height, its cross-section along the closing axis fits within the
/// maximum opening, and both finger descent volumes are collision-free.
fn jaw_check(ws: &WorldState, cfg: &GridConfig, center: Vec2, theta: f64, z_low: f64) -> JawCheck {
    let cell = cfg.cell_size();
    let u = Vec2::new(theta.cos(), theta.sin());
    let v = u.perp();
    let half_open = gripper::MAX_OPENING / 2.0;
    let half_thick = gripper::FINGER_THICKNESS_CELLS * cell / 2.0;
    let half_width = gripper::FINGER_WIDTH_CELLS * cell / 2.0;

    let rect = |c: Vec2, hu: f64, hv: f64| {
        ConvexPolygon::new(vec![
            c - u * hu - v * hv,
            c + u * hu - v * hv,
            c + u * hu + v * hv,
            c - u * hu + v * hv,
        ])
    };
    let corridor = rect(center, half_open, half_width);
    let finger_a = rect(center + u * (half_open + half_thick), half_thick, half_width);
    let finger_b = rect(center - u * (half_open + half_thick), half_thick, half_width);

    let mut candidate: Option<&SceneObject> = None;
    let mut n_candidates = 0;
    for obj in &ws.objects {
        if obj.top() <= z_low + thresholds::POSE_TOL {
            continue; // entirely below the fingers
        }
        let fp = obj.world_footprint();
        if fp.intersects(&finger_a) || fp.intersects(&finger_b) {
            return JawCheck { grasped: None }; // descent collision
        }
        if fp.intersects(&corridor) {
            n_candidates += 1;
            candidate = Some(obj);
        }
    }
    match (candidate, n_candidates) {
        (Some(obj), 1) => {
            let width = obj.world_footprint().width_along(u);
            if width <= gripper::MAX_OPENING {
                JawCheck {
                    grasped: Some(obj.id),
                }
            } else {
                JawCheck { grasped: None }
            }
        }
        _ => JawCheck { grasped: None },
    }
}

/// Top-down parallel-jaw grasp at `(pixel, rot_idx)`.
///
/// A successful grasp removes the object from the world; a failed close
/// displaces nothing.
pub fn execute_grasp(
    ws: &mut WorldState,
    pixel: Pixel,
    rot_idx: usize,
    cfg: &GridConfig,
) -> ActionOutcome {
    assert!(cfg.in_bounds(pixel), "pixel outside grid");
    ws.motion_count += 1;
    let depth = render(ws, cfg).depth;
    let z_low = action_height(&depth, pixel, ActionKind::Grasp);
    let center = cfg.pixel_to_world(pixel);
    let theta = rot_index_to_angle(rot_idx);
    let check = jaw_check(ws, cfg, center, theta, z_low);
    match check.grasped {
        Some(id) => {
            if id == ws.target_id {
                ws.target_grasped = true;
            }
            ws.take_object(id);
            ActionOutcome {
                kind: ActionKind::Grasp,
                grasped_id: Some(id),
                displaced_ids: BTreeSet::new(),
                world_changed: true,
            }
        }
        None => ActionOutcome::unchanged(ActionKind::Grasp),
    }
}

/// Straight-line push of fixed length with quasi-static contact resolution.
///
/// The tip contacts the first height-eligible object along its path; that
/// object translates by the residual sweep length, and footprint overlaps
/// it causes are resolved front-to-back along the push direction.
pub fn execute_push(
    ws: &mut WorldState,
    pixel: Pixel,
    rot_idx: usize,
    cfg: &GridConfig,
) -> ActionOutcome {
    assert!(cfg.in_bounds(pixel), "pixel outside grid");
    ws.motion_count += 1;
    let depth = render(ws, cfg).depth;
    let z_tip = action_height(&depth, pixel, ActionKind::Push);
    let start = cfg.pixel_to_world(pixel);
    let theta = rot_index_to_angle(rot_idx);
    let dir = Vec2::new(theta.cos(), theta.sin());

    // first contact along the sweep, at tip height
    let mut hit: Option<(f64, u32)> = None;
    for obj in &ws.objects {
        let eligible = obj.z - thresholds::POSE_TOL <= z_tip && z_tip < obj.top() - thresholds::POSE_TOL;
        if !eligible {
            continue;
        }
        if let Some(t) = obj.world_footprint().ray_entry(start, dir, pusher::PUSH_LENGTH) {
            match hit {
                Some((best, _)) if best <= t => {}
                _ => hit = Some((t, obj.id)),
            }
        }
    }

    let before: Vec<(u32, f64, f64)> = ws.objects.iter().map(|o| (o.id, o.x, o.y)).collect();
    if let Some((t0, id)) = hit {
        let residual = pusher::PUSH_LENGTH - t0;
        translate_with_cascade(ws, cfg, id, dir, residual);
    }

    let mut displaced = BTreeSet::new();
    for (id, x0, y0) in before {
        if let Some(o) = ws.object(id) {
            if (o.x - x0).abs() > thresholds::POSE_TOL || (o.y - y0).abs() > thresholds::POSE_TOL {
                displaced.insert(id);
            }
        }
    }
    let world_changed = !displaced.is_empty();
    ActionOutcome {
        kind: ActionKind::Push,
        grasped_id: None,
        displaced_ids: displaced,
        world_changed,
    }
}

/// Translates `id` by `dist` along `dir`, then resolves contacts greedily
/// front-to-back: every object overlapped in 3D gets shifted along `dir`
/// just far enough to separate. Objects clamp at the workspace boundary.
fn translate_with_cascade(ws: &mut WorldState, cfg: &GridConfig, id: u32, dir: Vec2, dist: f64) {
    let idx = match ws.objects.iter().position(|o| o.id == id) {
        Some(i) => i,
        None => return,
    };
    ws.objects[idx].x += dir.x * dist;
    ws.objects[idx].y += dir.y * dist;
    clamp_into_workspace(&mut ws.objects[idx], cfg);

    let mut queue: Vec<u32> = vec![id];
    let mut pops = 0;
    while let Some(mover_id) = queue.pop() {
        pops += 1;
        if pops > 4 * ws.objects.len() * ws.objects.len() + 16 {
            break; // safety bound; clamping at walls can stall the cascade
        }
        let mover = match ws.object(mover_id) {
            Some(o) => o.clone(),
            None => continue,
        };
        let mover_fp = mover.world_footprint();
        // front-to-back: nearest obstacles along dir first
        let mut others: Vec<(f64, u32)> = ws
            .objects
            .iter()
            .filter(|o| o.id != mover_id)
            .map(|o| (o.position().dot(dir), o.id))
            .collect();
        others.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (_, other_id) in others {
            let other = ws.object(other_id).unwrap().clone();
            if !z_overlap(&mover, &other) {
                continue;
            }
            let other_fp = other.world_footprint();
            if !mover_fp.intersects(&other_fp) {
                continue;
            }
            let s = mover_fp.separation_along(&other_fp, dir) + 1e-7;
            let oi = ws.objects.iter().position(|o| o.id == other_id).unwrap();
            ws.objects[oi].x += dir.x * s;
            ws.objects[oi].y += dir.y * s;
            clamp_into_workspace(&mut ws.objects[oi], cfg);
            queue.push(other_id);
        }
    }
}

/// Grasp-and-relocate: picks an obstacle with the grasp kinematics, then
/// releases it at the free cell farthest from the target.
pub fn execute_move(
    ws: &mut WorldState,
    pixel: Pixel,
    rot_idx: usize,
    cfg: &GridConfig,
) -> ActionOutcome {
    assert!(cfg.in_bounds(pixel), "pixel outside grid");
    ws.motion_count += 1;
    let depth = render(ws, cfg).depth;
    let z_low = action_height(&depth, pixel, ActionKind::Move);
    let center = cfg.pixel_to_world(pixel);
    let theta = rot_index_to_angle(rot_idx);
    let check = jaw_check(ws, cfg, center, theta, z_low);

    let id = match check.grasped {
        Some(id) => id,
        None => return ActionOutcome::unchanged(ActionKind::Move),
    };
    if id == ws.target_id {
        // picked up the target itself; it leaves the world and the reward
        // layer applies the penalty
        ws.target_grasped = true;
        ws.take_object(id);
        return ActionOutcome {
            kind: ActionKind::Move,
            grasped_id: Some(id),
            displaced_ids: BTreeSet::from([id]),
            world_changed: true,
        };
    }

    let mut obj = ws.take_object(id).expect("object vanished");
    let anchor = ws
        .target()
        .map(|t| t.position())
        .unwrap_or(Vec2::new(cfg.extent() / 2.0, cfg.extent() / 2.0));
    let (px, py, pz) = placement_cell(ws, cfg, &obj, anchor);
    let old = (obj.x, obj.y, obj.z);
    obj.x = px;
    obj.y = py;
    obj.z = pz;
    clamp_into_workspace(&mut obj, cfg);
    let moved = (obj.x - old.0).abs() > thresholds::POSE_TOL
        || (obj.y - old.1).abs() > thresholds::POSE_TOL
        || (obj.z - old.2).abs() > thresholds::POSE_TOL;
    ws.objects.push(obj);
    let mut displaced = BTreeSet::new();
    if moved {
        displaced.insert(id);
    }
    ActionOutcome {
        kind: ActionKind::Move,
        grasped_id: Some(id),
        displaced_ids: displaced,
        world_changed: moved,
    }
}

/// Deterministic release cell: among cells whose clearance from every other
/// object is at least the object radius plus one cell, pick the one farthest
/// from `anchor` (ties resolved by row-major scan order). Falls back to the
/// farthest in-bounds cell, releasing on top of whatever occupies it.
fn placement_cell(
    ws: &WorldState,
    cfg: &GridConfig,
    obj: &SceneObject,
    anchor: Vec2,
) -> (f64, f64, f64) {
    let res = cfg.resolution();
    let cell = cfg.cell_size();
    let radius = obj.footprint.radius();
    let margin = radius + cell;
    let clearance = radius + cell;
    let extent = cfg.extent();

    let mut best: Option<(f64, Pixel)> = None;
    let mut best_fallback: Option<(f64, Pixel)> = None;
    for row in 0..res {
        for col in 0..res {
            let p = Pixel::new(row, col);
            let w = cfg.pixel_to_world(p);
            if w.x < margin || w.y < margin || w.x > extent - margin || w.y > extent - margin {
                continue;
            }
            let d = w.dist(anchor);
            if best_fallback.is_none() || d > best_fallback.unwrap().0 {
                best_fallback = Some((d, p));
            }
            let clear = ws
                .objects
                .iter()
                .all(|o| o.world_footprint().distance_to_point(w) >= clearance);
            if clear && (best.is_none() || d > best.unwrap().0) {
                best = Some((d, p));
            }
        }
    }
    if let Some((_, p)) = best {
        let w = cfg.pixel_to_world(p);
        (w.x, w.y, 0.0)
    } else if let Some((_, p)) = best_fallback {
        let w = cfg.pixel_to_world(p);
        // release on top of whatever occupies the cell
        let mut z = 0.0f64;
        for o in &ws.objects {
            if o.world_footprint().contains(w) {
                z = z.max(o.top());
            }
        }
        (w.x, w.y, z)
    } else {
        (obj.x, obj.y, obj.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::check_occlusion;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn boxy(id: u32, hx: f64, hy: f64, x: f64, y: f64, z: f64, h: f64) -> SceneObject {
        SceneObject {
            id,
            footprint: ConvexPolygon::rect(hx, hy),
            height: h,
            x,
            y,
            z,
            yaw: 0.0,
            color_id: (id % 10) as u8,
        }
    }

    fn world(objects: Vec<SceneObject>, target: u32) -> WorldState {
        WorldState {
            objects,
            target_id: target,
            target_grasped: false,
            motion_count: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    fn cfg() -> GridConfig {
        GridConfig::new(64, 0.007)
    }

    #[test]
    fn grasp_isolated_thin_box_perpendicular_to_long_axis() {
        let cfg = cfg();
        // long axis along x; closing axis must be along y => rot 90° = idx 4
        let mut ws = world(vec![boxy(0, 0.028, 0.010, 0.2, 0.2, 0.0, 0.04)], 0);
        let p = cfg.world_to_pixel(Vec2::new(0.2, 0.2));
        let out = execute_grasp(&mut ws, p, 4, &cfg);
        assert_eq!(out.grasped_id, Some(0));
        assert!(out.world_changed);
        assert!(ws.is_empty());
        assert_eq!(ws.motion_count, 1);
        assert!(ws.target_grasped);
    }

    #[test]
    fn grasp_along_long_axis_fails_when_too_wide() {
        let cfg = cfg();
        // cross-section along x is 0.09 > max opening 0.08
        let mut ws = world(vec![boxy(0, 0.045, 0.010, 0.2, 0.2, 0.0, 0.04)], 0);
        let p = cfg.world_to_pixel(Vec2::new(0.2, 0.2));
        let out = execute_grasp(&mut ws, p, 0, &cfg);
        assert_eq!(out.grasped_id, None);
        assert!(!out.world_changed);
        assert_eq!(ws.objects.len(), 1);
    }

    #[test]
    fn grasp_empty_cell_fails_world_unchanged() {
        let cfg = cfg();
        let mut ws = world(vec![boxy(0, 0.02, 0.02, 0.1, 0.1, 0.0, 0.04)], 0);
        let p = cfg.world_to_pixel(Vec2::new(0.35, 0.35));
        let out = execute_grasp(&mut ws, p, 0, &cfg);
        assert_eq!(out.grasped_id, None);
        assert_eq!(ws.objects.len(), 1);
        assert_eq!(ws.motion_count, 1);
    }

    #[test]
    fn grasp_fails_at_all_angles_when_flanked() {
        let cfg = cfg();
        // target hemmed in by four tall neighbors touching the finger sweep
        let mut objs = vec![boxy(0, 0.014, 0.014, 0.224, 0.224, 0.0, 0.04)];
        let gap = 0.014 + 0.016; // neighbor center offset: footprints ~2mm apart
        objs.push(boxy(1, 0.014, 0.014, 0.224 + gap, 0.224, 0.0, 0.06));
        objs.push(boxy(2, 0.014, 0.014, 0.224 - gap, 0.224, 0.0, 0.06));
        objs.push(boxy(3, 0.014, 0.014, 0.224, 0.224 + gap, 0.0, 0.06));
        objs.push(boxy(4, 0.014, 0.014, 0.224, 0.224 - gap, 0.0, 0.06));
        let mut ws = world(objs, 0);
        let p = cfg.world_to_pixel(Vec2::new(0.224, 0.224));
        for rot in 0..16 {
            let out = execute_grasp(&mut ws, p, rot, &cfg);
            assert_eq!(out.grasped_id, None, "rot {rot}");
            assert_eq!(ws.objects.len(), 5);
        }
    }

    #[test]
    fn push_through_empty_space_changes_nothing() {
        let cfg = cfg();
        let mut ws = world(vec![boxy(0, 0.02, 0.02, 0.1, 0.1, 0.0, 0.04)], 0);
        let p = cfg.world_to_pixel(Vec2::new(0.35, 0.35));
        let out = execute_push(&mut ws, p, 0, &cfg);
        assert!(!out.world_changed);
        assert!(out.displaced_ids.is_empty());
    }

    #[test]
    fn push_translates_box_by_residual_length() {
        let cfg = cfg();
        let half = 0.014;
        let bx = 0.2;
        let mut ws = world(vec![boxy(0, half, half, bx, 0.2, 0.0, 0.04)], 0);
        // start 3 cells to the left of the box edge, push along +x (rot 0)
        let start_x = bx - half - 0.021;
        let p = cfg.world_to_pixel(Vec2::new(start_x, 0.2));
        let start = cfg.pixel_to_world(p);
        let entry_t = (bx - half) - start.x; // oracle: ray entry into the box
        let out = execute_push(&mut ws, p, 0, &cfg);
        assert!(out.world_changed);
        let expect_x = bx + (pusher::PUSH_LENGTH - entry_t);
        assert!(
            (ws.objects[0].x - expect_x).abs() < 1e-9,
            "got {}, expected {}",
            ws.objects[0].x,
            expect_x
        );
        assert!((ws.objects[0].y - 0.2).abs() < 1e-12);
    }

    #[test]
    fn push_above_short_object_misses() {
        let cfg = cfg();
        // tall neighbor raises the 3x3 height so the tip passes over the short box
        let short = boxy(0, 0.014, 0.014, 0.2, 0.2, 0.0, 0.02);
        let tall = boxy(1, 0.007, 0.007, 0.2 - 0.028, 0.2, 0.0, 0.06);
        let mut ws = world(vec![short, tall], 0);
        let p = cfg.world_to_pixel(Vec2::new(0.2 - 0.028, 0.2));
        // tip z = 0.06 - 0.01 = 0.05 > short box top 0.02
        let out = execute_push(&mut ws, p, 0, &cfg);
        assert!(!out.displaced_ids.contains(&0));
        assert!(out.displaced_ids.contains(&1) || !out.world_changed);
    }

    #[test]
    fn push_cascades_into_second_box() {
        let cfg = cfg();
        let half = 0.014;
        let a = boxy(0, half, half, 0.15, 0.2, 0.0, 0.04);
        let b = boxy(1, half, half, 0.15 + 0.04, 0.2, 0.0, 0.04);
        let mut ws = world(vec![a, b], 0);
        let p = cfg.world_to_pixel(Vec2::new(0.15 - half - 0.007, 0.2));
        let out = execute_push(&mut ws, p, 0, &cfg);
        assert!(out.displaced_ids.contains(&0));
        assert!(out.displaced_ids.contains(&1));
        // no interpenetration afterwards
        let fa = ws.object(0).unwrap().world_footprint();
        let fb = ws.object(1).unwrap().world_footprint();
        assert!(!fa.intersects(&fb));
    }

    #[test]
    fn push_clamps_at_workspace_edge() {
        let cfg = cfg();
        let half = 0.014;
        let extent = cfg.extent();
        let mut ws = world(vec![boxy(0, half, half, extent - half - 0.01, 0.2, 0.0, 0.04)], 0);
        let p = cfg.world_to_pixel(Vec2::new(extent - half - 0.04, 0.2));
        execute_push(&mut ws, p, 0, &cfg);
        let (lo, hi) = ws.objects[0].world_footprint().bbox();
        assert!(lo.x >= -1e-9 && hi.x <= extent + 1e-9);
    }

    #[test]
    fn move_relocates_occluder_and_clears_occlusion() {
        let cfg = cfg();
        let below = boxy(0, 0.021, 0.021, 0.22, 0.22, 0.0, 0.04);
        let above = boxy(1, 0.014, 0.014, 0.22, 0.22, 0.04, 0.03);
        let mut ws = world(vec![below, above], 0);
        assert!(check_occlusion(&ws, &cfg).unwrap());
        let p = cfg.world_to_pixel(Vec2::new(0.22, 0.22));
        let out = execute_move(&mut ws, p, 0, &cfg);
        assert_eq!(out.grasped_id, Some(1));
        assert!(out.world_changed);
        assert!(!check_occlusion(&ws, &cfg).unwrap());
        assert_eq!(ws.objects.len(), 2);
        // occluder now rests on the table, far from the target
        let moved = ws.object(1).unwrap();
        assert_eq!(moved.z, 0.0);
        assert!(moved.position().dist(Vec2::new(0.22, 0.22)) > 0.1);
    }

    #[test]
    fn move_at_empty_cell_is_noop() {
        let cfg = cfg();
        let mut ws = world(vec![boxy(0, 0.02, 0.02, 0.1, 0.1, 0.0, 0.04)], 0);
        let p = cfg.world_to_pixel(Vec2::new(0.35, 0.35));
        let out = execute_move(&mut ws, p, 0, &cfg);
        assert_eq!(out.grasped_id, None);
        assert!(!out.world_changed);
        assert_eq!(ws.objects.len(), 1);
    }

    #[test]
    fn move_on_target_reports_target_id() {
        let cfg = cfg();
        let mut ws = world(vec![boxy(0, 0.014, 0.014, 0.2, 0.2, 0.0, 0.04)], 0);
        let p = cfg.world_to_pixel(Vec2::new(0.2, 0.2));
        let out = execute_move(&mut ws, p, 0, &cfg);
        assert_eq!(out.grasped_id, Some(0));
        assert!(ws.target_grasped);
        assert!(ws.target().is_none());
    }
}
