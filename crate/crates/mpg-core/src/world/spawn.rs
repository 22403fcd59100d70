//! Seeded scene generation.
//!
//! Objects are boxes and regular-polygon prisms with sides of 3-8 cells and
//! heights quantized to 4 mm in [0.02, 0.06] m. Placement modes control the
//! clutter structure; identical `(cfg, n, mode, seed)` always reproduces the
//! identical world.

use super::render::covered_cells;
use super::{check_occlusion, thresholds, SceneObject, WorldState};
use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Vec2};
use crate::grid::GridConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpawnMode {
    /// Pairwise footprint clearance of at least 2 cells.
    Scattered,
    /// Each object placed within a 1-cell gap of an existing one.
    Adjacent,
    /// Object 1 rests on top of object 0 (occluding it); extras scattered.
    Stacked,
    /// One or two stacked pairs (bottoms are the lowest ids) with the
    /// remaining objects packed adjacent around them.
    Mixed,
}

impl SpawnMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scattered" => Some(Self::Scattered),
            "adjacent" => Some(Self::Adjacent),
            "stacked" => Some(Self::Stacked),
            "mixed" => Some(Self::Mixed),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Scattered => "scattered",
            Self::Adjacent => "adjacent",
            Self::Stacked => "stacked",
            Self::Mixed => "mixed",
        }
    }
}

const MAX_RETRIES: usize = 600;

/// Widest cross-section an object may have and still admit some closing
/// angle of the jaws with margin for the 22.5° quantization.
const GRASPABLE_MIN_WIDTH: f64 = 0.07;

/// Random footprint from the object library.
fn random_footprint(rng: &mut ChaCha8Rng, cell: f64, graspable: bool) -> ConvexPolygon {
    loop {
        let fp = if rng.gen_bool(0.6) {
            let w = rng.gen_range(3..=8) as f64 * cell;
            let h = rng.gen_range(3..=8) as f64 * cell;
            ConvexPolygon::rect(w / 2.0, h / 2.0)
        } else {
            let k = rng.gen_range(3..=6);
            let side = rng.gen_range(3..=8) as f64 * cell;
            let circumradius = side / (2.0 * (std::f64::consts::PI / k as f64).sin());
            ConvexPolygon::regular(k, circumradius)
        };
        if !graspable || fp.min_width() <= GRASPABLE_MIN_WIDTH {
            return fp;
        }
    }
}

fn random_height(rng: &mut ChaCha8Rng) -> f64 {
    0.02 + thresholds::HEIGHT_QUANTUM * rng.gen_range(0..=10) as f64
}

fn random_object(rng: &mut ChaCha8Rng, id: u32, cell: f64, graspable: bool) -> SceneObject {
    SceneObject {
        id,
        footprint: random_footprint(rng, cell, graspable),
        height: random_height(rng),
        x: 0.0,
        y: 0.0,
        z: 0.0,
        yaw: rng.gen_range(0.0..std::f64::consts::TAU),
        color_id: rng.gen_range(0..10) as u8,
    }
}

fn infeasible(n: usize) -> Error {
    Error::SceneInfeasible {
        requested: n,
        retries: MAX_RETRIES,
    }
}

/// Uniform in-bounds position for the object, respecting its radius.
fn sample_position(rng: &mut ChaCha8Rng, cfg: &GridConfig, radius: f64) -> Option<Vec2> {
    let margin = radius + cfg.cell_size();
    let extent = cfg.extent();
    if margin * 2.0 >= extent {
        return None;
    }
    Some(Vec2::new(
        rng.gen_range(margin..extent - margin),
        rng.gen_range(margin..extent - margin),
    ))
}

/// The footprint must cover at least a few cell centers so masks and the
/// occlusion check see the object.
fn visible(obj: &SceneObject, cfg: &GridConfig) -> bool {
    covered_cells(obj, cfg).len() >= 3
}

fn fully_inside(obj: &SceneObject, cfg: &GridConfig) -> bool {
    let (lo, hi) = obj.world_footprint().bbox();
    lo.x >= 0.0 && lo.y >= 0.0 && hi.x <= cfg.extent() && hi.y <= cfg.extent()
}

/// Places `obj` so its footprint keeps `min_gap..=max_gap` clearance from
/// every placed object (`max_gap = inf` for scattered placement, and the
/// gap to the nearest anchor must not exceed it).
fn place_with_gap(
    rng: &mut ChaCha8Rng,
    cfg: &GridConfig,
    placed: &[SceneObject],
    obj: &mut SceneObject,
    min_gap: f64,
    max_gap: f64,
) -> bool {
    for _ in 0..MAX_RETRIES {
        let pos = match sample_position(rng, cfg, obj.footprint.radius()) {
            Some(p) => p,
            None => return false,
        };
        obj.x = pos.x;
        obj.y = pos.y;
        if !visible(obj, cfg) || !fully_inside(obj, cfg) {
            continue;
        }
        let fp = obj.world_footprint();
        let mut nearest = f64::INFINITY;
        let mut ok = true;
        for other in placed {
            let d = other.world_footprint().distance(&fp);
            if d < min_gap {
                ok = false;
                break;
            }
            nearest = nearest.min(d);
        }
        if !ok {
            continue;
        }
        if !placed.is_empty() && nearest > max_gap {
            continue;
        }
        return true;
    }
    false
}

/// Drops a top object onto `below` so the occlusion check holds for it.
fn place_on_top(
    rng: &mut ChaCha8Rng,
    cfg: &GridConfig,
    below: &SceneObject,
    top: &mut SceneObject,
) -> bool {
    let jitter = cfg.cell_size();
    for _ in 0..MAX_RETRIES {
        top.x = below.x + rng.gen_range(-jitter..=jitter);
        top.y = below.y + rng.gen_range(-jitter..=jitter);
        top.z = below.top();
        if !visible(top, cfg) || !fully_inside(top, cfg) {
            continue;
        }
        // must actually cover part of the footprint below
        if top.world_footprint().intersects(&below.world_footprint()) {
            return true;
        }
    }
    false
}

/// Generates a collision-consistent world.
///
/// Mode-specific guarantees: `Scattered` keeps pairwise footprint clearance
/// of at least 2 cells; `Adjacent` places every object within a 1-cell gap
/// of an existing one; `Stacked` guarantees object 0 is occluded (verified
/// with [`check_occlusion`]); `Mixed` builds one or two occluded stacks and
/// packs the rest nearby.
pub fn spawn_scene(cfg: &GridConfig, n: usize, mode: SpawnMode, seed: u64) -> Result<WorldState> {
    assert!(n >= 1, "need at least one object");
    if mode == SpawnMode::Stacked {
        assert!(n >= 2, "stacked mode needs at least 2 objects");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = cfg.cell_size();
    let two_cells = 2.0 * cell;
    let one_cell = cell;

    let mut ws = WorldState {
        objects: Vec::with_capacity(n),
        target_id: 0,
        target_grasped: false,
        motion_count: 0,
        rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15)),
    };

    match mode {
        SpawnMode::Scattered => {
            for id in 0..n {
                let mut obj = random_object(&mut rng, id as u32, cell, id < 2);
                if !place_with_gap(&mut rng, cfg, &ws.objects, &mut obj, two_cells, f64::INFINITY) {
                    return Err(infeasible(n));
                }
                ws.objects.push(obj);
            }
        }
        SpawnMode::Adjacent => {
            for id in 0..n {
                let mut obj = random_object(&mut rng, id as u32, cell, id < 2);
                let (min_gap, max_gap) = if id == 0 {
                    (two_cells, f64::INFINITY)
                } else {
                    (1e-4, one_cell)
                };
                if !place_with_gap(&mut rng, cfg, &ws.objects, &mut obj, min_gap, max_gap) {
                    return Err(infeasible(n));
                }
                ws.objects.push(obj);
            }
        }
        SpawnMode::Stacked => {
            build_stack(&mut rng, cfg, &mut ws, 0, 1, n)?;
            for id in 2..n {
                let mut obj = random_object(&mut rng, id as u32, cell, false);
                if !place_with_gap(&mut rng, cfg, &ws.objects, &mut obj, two_cells, f64::INFINITY) {
                    return Err(infeasible(n));
                }
                ws.objects.push(obj);
            }
            debug_assert!(check_occlusion(&ws, cfg).unwrap_or(false));
        }
        SpawnMode::Mixed => {
            let stacks = if n >= 5 { 2 } else { 1 };
            if n < 2 * stacks {
                return Err(infeasible(n));
            }
            // bottoms get ids 0..stacks, tops get ids stacks..2*stacks
            let mut bottoms = Vec::new();
            for s in 0..stacks {
                let mut bottom = random_object(&mut rng, s as u32, cell, true);
                if !place_with_gap(&mut rng, cfg, &ws.objects, &mut bottom, two_cells, f64::INFINITY)
                {
                    return Err(infeasible(n));
                }
                ws.objects.push(bottom.clone());
                bottoms.push(bottom);
            }
            for s in 0..stacks {
                let mut top = random_object(&mut rng, (stacks + s) as u32, cell, true);
                if !place_on_top(&mut rng, cfg, &bottoms[s], &mut top) {
                    return Err(infeasible(n));
                }
                ws.objects.push(top);
            }
            for id in 2 * stacks..n {
                let mut obj = random_object(&mut rng, id as u32, cell, false);
                if !place_with_gap(&mut rng, cfg, &ws.objects, &mut obj, 1e-4, one_cell) {
                    return Err(infeasible(n));
                }
                ws.objects.push(obj);
            }
        }
    }
    Ok(ws)
}

fn build_stack(
    rng: &mut ChaCha8Rng,
    cfg: &GridConfig,
    ws: &mut WorldState,
    bottom_id: u32,
    top_id: u32,
    n: usize,
) -> Result<()> {
    let cell = cfg.cell_size();
    for _ in 0..8 {
        let mut bottom = random_object(rng, bottom_id, cell, true);
        if !place_with_gap(rng, cfg, &ws.objects, &mut bottom, 2.0 * cell, f64::INFINITY) {
            return Err(infeasible(n));
        }
        let mut top = random_object(rng, top_id, cell, true);
        if place_on_top(rng, cfg, &bottom, &mut top) {
            ws.objects.push(bottom);
            ws.objects.push(top);
            return Ok(());
        }
    }
    Err(infeasible(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::render;

    fn cfg() -> GridConfig {
        GridConfig::new(64, 0.007)
    }

    #[test]
    fn single_object_scene_is_unoccluded() {
        let ws = spawn_scene(&cfg(), 1, SpawnMode::Scattered, 7).unwrap();
        assert_eq!(ws.objects.len(), 1);
        assert!(!check_occlusion(&ws, &cfg()).unwrap());
    }

    #[test]
    fn stacked_pair_rests_exactly_on_top() {
        let ws = spawn_scene(&cfg(), 2, SpawnMode::Stacked, 3).unwrap();
        let below = ws.object(0).unwrap();
        let above = ws.object(1).unwrap();
        assert_eq!(above.z, below.height);
        assert!(check_occlusion(&ws, &cfg()).unwrap());
    }

    #[test]
    fn scattered_clearances_hold() {
        let ws = spawn_scene(&cfg(), 5, SpawnMode::Scattered, 11).unwrap();
        assert_eq!(ws.objects.len(), 5);
        let min_gap = 2.0 * cfg().cell_size();
        for i in 0..5 {
            for j in i + 1..5 {
                let d = ws.objects[i]
                    .world_footprint()
                    .distance(&ws.objects[j].world_footprint());
                assert!(d >= min_gap - 1e-12, "pair ({i},{j}) clearance {d}");
            }
        }
    }

    #[test]
    fn adjacent_objects_touch_within_one_cell() {
        let ws = spawn_scene(&cfg(), 4, SpawnMode::Adjacent, 21).unwrap();
        let one_cell = cfg().cell_size();
        for i in 1..4 {
            let fp = ws.objects[i].world_footprint();
            let nearest = ws.objects[..i]
                .iter()
                .map(|o| o.world_footprint().distance(&fp))
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= one_cell + 1e-12, "object {i} gap {nearest}");
            assert!(nearest > 0.0, "object {i} interpenetrates");
        }
    }

    #[test]
    fn identical_seed_reproduces_scene() {
        let a = spawn_scene(&cfg(), 6, SpawnMode::Mixed, 42).unwrap();
        let b = spawn_scene(&cfg(), 6, SpawnMode::Mixed, 42).unwrap();
        assert_eq!(a.objects, b.objects);
        let oa = render(&a, &cfg());
        let ob = render(&b, &cfg());
        assert_eq!(oa, ob);
    }

    #[test]
    fn mixed_mode_occludes_low_ids() {
        let ws = spawn_scene(&cfg(), 5, SpawnMode::Mixed, 5).unwrap();
        assert!(check_occlusion(&ws, &cfg()).unwrap());
        let mut ws2 = ws.clone();
        ws2.target_id = 1;
        assert!(check_occlusion(&ws2, &cfg()).unwrap());
    }

    #[test]
    fn infeasible_scene_reports_error() {
        let small = GridConfig::new(16, 0.007);
        let res = spawn_scene(&small, 40, SpawnMode::Scattered, 0);
        assert!(matches!(res, Err(Error::SceneInfeasible { .. })));
    }

    #[test]
    fn objects_never_interpenetrate_on_the_table() {
        for seed in 0..20 {
            let ws = spawn_scene(&cfg(), 6, SpawnMode::Mixed, seed).unwrap();
            for i in 0..ws.objects.len() {
                for j in i + 1..ws.objects.len() {
                    let (a, b) = (&ws.objects[i], &ws.objects[j]);
                    if crate::world::z_overlap(a, b) {
                        assert!(
                            !a.world_footprint().intersects(&b.world_footprint()),
                            "seed {seed}: objects {} and {} interpenetrate",
                            a.id,
                            b.id
                        );
                    }
                }
            }
        }
    }
}
