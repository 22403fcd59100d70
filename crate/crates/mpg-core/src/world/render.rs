//! Orthographic heightmap rendering, the occlusion check and depth-change
//! detection.

use super::{thresholds, SceneObject, WorldState, BACKGROUND_COLOR_ID};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridConfig, Pixel};

/// Top-down observation triple: color heightmap (palette ids), depth
/// heightmap (meters above the table) and the binary goal mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub color_ids: Grid<u8>,
    pub depth: Grid<f64>,
    pub goal_mask: Grid<bool>,
}

impl Observation {
    pub fn resolution(&self) -> usize {
        self.depth.rows()
    }
}

/// What the goal mask marks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalMaskMode {
    /// The target object's full footprint projection, visible or not.
    Target,
    /// Union of all object footprints (target-agnostic training).
    AllObjects,
}

/// Cells of the grid whose centers fall inside the object's footprint.
pub(crate) fn covered_cells(obj: &SceneObject, cfg: &GridConfig) -> Vec<Pixel> {
    let fp = obj.world_footprint();
    let (lo, hi) = fp.bbox();
    let res = cfg.resolution() as isize;
    let cell = cfg.cell_size();
    let c0 = ((lo.x / cell).floor() as isize).clamp(0, res - 1);
    let c1 = ((hi.x / cell).ceil() as isize).clamp(0, res - 1);
    let r0 = ((lo.y / cell).floor() as isize).clamp(0, res - 1);
    let r1 = ((hi.y / cell).ceil() as isize).clamp(0, res - 1);
    let mut cells = Vec::new();
    for row in r0..=r1 {
        for col in c0..=c1 {
            let p = Pixel::new(row as usize, col as usize);
            if fp.contains(cfg.pixel_to_world(p)) {
                cells.push(p);
            }
        }
    }
    cells
}

/// Renders the world into an observation with the target-footprint mask.
pub fn render(ws: &WorldState, cfg: &GridConfig) -> Observation {
    render_with_mask(ws, cfg, GoalMaskMode::Target)
}

/// Renders with an explicit goal-mask mode.
///
/// Per-cell depth is the maximum of `z + height` over covering objects;
/// color is the palette id of the topmost covering object (lowest id wins
/// exact ties). Empty cells read 0 depth and the background color id.
pub fn render_with_mask(ws: &WorldState, cfg: &GridConfig, mode: GoalMaskMode) -> Observation {
    let res = cfg.resolution();
    let mut depth = Grid::filled(res, res, 0.0f64);
    let mut color = Grid::filled(res, res, BACKGROUND_COLOR_ID);
    let mut mask = Grid::filled(res, res, false);
    for obj in &ws.objects {
        let top = obj.top();
        for p in covered_cells(obj, cfg) {
            if top > *depth.get(p.row, p.col) {
                depth.set(p.row, p.col, top);
                color.set(p.row, p.col, obj.color_id);
            }
            let in_mask = match mode {
                GoalMaskMode::Target => obj.id == ws.target_id,
                GoalMaskMode::AllObjects => true,
            };
            if in_mask {
                mask.set(p.row, p.col, true);
            }
        }
    }
    Observation {
        color_ids: color,
        depth,
        goal_mask: mask,
    }
}

/// Occlusion status of the target object.
///
/// Crops the depth heightmap by the target's footprint mask and compares
/// the maximum against the target's true top surface: anything standing
/// taller than the target over its own footprint is an occluder.
pub fn check_occlusion(ws: &WorldState, cfg: &GridConfig) -> Result<bool> {
    let target = ws
        .target()
        .ok_or(Error::TargetGrasped(ws.target_id))?;
    let obs = render(ws, cfg);
    let mut max_cropped = 0.0f64;
    for (r, c, &m) in obs.goal_mask.iter_indexed() {
        if m {
            max_cropped = max_cropped.max(*obs.depth.get(r, c));
        }
    }
    Ok(max_cropped > target.top() + thresholds::TAU_OCC)
}

/// True when enough cells changed depth between two renders.
///
/// Panics if the maps disagree in shape (caller contract).
pub fn change_detected(before: &Grid<f64>, after: &Grid<f64>) -> bool {
    assert_eq!(
        (before.rows(), before.cols()),
        (after.rows(), after.cols()),
        "depth map dimensions must match"
    );
    let mut changed = 0usize;
    for (a, b) in before.data().iter().zip(after.data().iter()) {
        if (a - b).abs() > thresholds::TAU_CHANGE {
            changed += 1;
            if changed > thresholds::N_CHANGE {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn boxy(id: u32, half: f64, x: f64, y: f64, z: f64, h: f64) -> SceneObject {
        SceneObject {
            id,
            footprint: ConvexPolygon::rect(half, half),
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

    #[test]
    fn empty_world_renders_zero() {
        let cfg = GridConfig::new(32, 0.007);
        let obs = render(&world(vec![], 0), &cfg);
        assert!(obs.depth.data().iter().all(|&d| d == 0.0));
        assert!(obs.goal_mask.data().iter().all(|&m| !m));
        assert!(obs.color_ids.data().iter().all(|&c| c == BACKGROUND_COLOR_ID));
    }

    #[test]
    fn single_box_reads_its_height() {
        let cfg = GridConfig::new(64, 0.007);
        // box covering cells (10..20)^2: centered so cell centers 10..=19 are inside
        let half = 5.0 * 0.007;
        let center = (10.0 + 5.0) * 0.007; // cells 10..20 span [0.07, 0.14)
        let obs = render(
            &world(vec![boxy(0, half, center, center, 0.0, 0.04)], 0),
            &cfg,
        );
        for (r, c, &d) in obs.depth.iter_indexed() {
            let inside = (10..20).contains(&r) && (10..20).contains(&c);
            if inside {
                assert_eq!(d, 0.04, "cell ({r},{c})");
                assert!(obs.goal_mask.get(r, c));
            } else {
                assert_eq!(d, 0.0, "cell ({r},{c})");
            }
        }
    }

    #[test]
    fn stacked_boxes_read_sum_on_overlap() {
        let cfg = GridConfig::new(64, 0.007);
        let a = boxy(0, 0.028, 0.15, 0.15, 0.0, 0.04);
        let mut b = boxy(1, 0.014, 0.15, 0.15, 0.04, 0.03);
        b.color_id = 3;
        let ws = world(vec![a.clone(), b.clone()], 0);
        let obs = render(&ws, &cfg);
        // cell-by-cell oracle: per-cell loop over both objects
        for (r, c, &d) in obs.depth.iter_indexed() {
            let p = cfg.pixel_to_world(Pixel::new(r, c));
            let mut expect = 0.0f64;
            for o in [&a, &b] {
                if o.world_footprint().contains(p) {
                    expect = expect.max(o.top());
                }
            }
            assert_eq!(d, expect, "cell ({r},{c})");
        }
        // overlap cells read 0.07 and the top box's color
        let p = cfg.world_to_pixel(crate::geometry::Vec2::new(0.15, 0.15));
        assert_eq!(*obs.depth.get(p.row, p.col), 0.07);
        assert_eq!(*obs.color_ids.get(p.row, p.col), 3);
    }

    #[test]
    fn goal_mask_covers_full_footprint_even_when_occluded() {
        let cfg = GridConfig::new(64, 0.007);
        let a = boxy(0, 0.021, 0.15, 0.15, 0.0, 0.04);
        let b = boxy(1, 0.028, 0.15, 0.15, 0.04, 0.03); // bigger box fully on top
        let ws = world(vec![a.clone(), b], 0);
        let obs = render(&ws, &cfg);
        for p in covered_cells(&a, &cfg) {
            assert!(obs.goal_mask.get(p.row, p.col));
        }
    }

    #[test]
    fn occlusion_single_object_false() {
        let cfg = GridConfig::new(64, 0.007);
        let ws = world(vec![boxy(0, 0.02, 0.2, 0.2, 0.0, 0.04)], 0);
        assert!(!check_occlusion(&ws, &cfg).unwrap());
    }

    #[test]
    fn occlusion_stacked_true_adjacent_false() {
        let cfg = GridConfig::new(64, 0.007);
        let below = boxy(0, 0.02, 0.2, 0.2, 0.0, 0.04);
        let above = boxy(1, 0.015, 0.2, 0.2, 0.04, 0.03);
        let ws = world(vec![below.clone(), above], 0);
        assert!(check_occlusion(&ws, &cfg).unwrap());

        let side = boxy(1, 0.015, 0.26, 0.2, 0.0, 0.06);
        let ws2 = world(vec![below, side], 0);
        assert!(!check_occlusion(&ws2, &cfg).unwrap());
    }

    #[test]
    fn occlusion_errors_when_target_gone() {
        let cfg = GridConfig::new(32, 0.007);
        let ws = world(vec![boxy(1, 0.02, 0.1, 0.1, 0.0, 0.04)], 0);
        assert!(matches!(
            check_occlusion(&ws, &cfg),
            Err(Error::TargetGrasped(0))
        ));
    }

    #[test]
    fn change_detection_thresholds() {
        let a = Grid::filled(8, 8, 0.0f64);
        assert!(!change_detected(&a, &a));
        // sub-threshold jitter on one cell
        let mut b = a.clone();
        b.set(2, 2, 0.001);
        assert!(!change_detected(&a, &b));
        // exactly N_CHANGE cells changed is not enough ("exceeds")
        let mut c = a.clone();
        for i in 0..thresholds::N_CHANGE {
            c.set(0, i, 0.05);
        }
        assert!(!change_detected(&a, &c));
        c.set(1, 0, 0.05);
        assert!(change_detected(&a, &c));
    }
}
