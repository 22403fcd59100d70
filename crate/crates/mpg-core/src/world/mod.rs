//! Deterministic 2.5D tabletop world.
//!
//! Objects are convex prisms resting on the table (or stacked flat on each
//! other); all motion is kinematic. The three primitives share the grasp
//! machinery: a parallel-jaw model with a fixed maximum opening whose
//! success criterion is purely geometric, so every outcome is reproducible
//! and checkable against independent oracles.

mod primitives;
mod render;
mod snapshot;
mod spawn;

pub use render::{change_detected, check_occlusion, render, render_with_mask, GoalMaskMode, Observation};
pub use snapshot::{
    import_scene, read_pgm16, write_color_ppm, write_depth_pgm16, write_mask_pgm, export_scene,
    DEPTH_COUNTS_PER_METER,
};
pub use spawn::{spawn_scene, SpawnMode};

use crate::geometry::{ConvexPolygon, Vec2};
use crate::grid::GridConfig;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Ten-entry color palette for object rendering (RGB).
pub const PALETTE: [[u8; 3]; 10] = [
    [204, 51, 51],   // red
    [51, 102, 204],  // blue
    [51, 170, 85],   // green
    [221, 204, 51],  // yellow
    [230, 140, 40],  // orange
    [140, 80, 190],  // purple
    [60, 190, 190],  // cyan
    [200, 80, 160],  // magenta
    [140, 100, 60],  // brown
    [150, 150, 150], // gray
];

/// Palette index used for empty cells in color heightmaps.
pub const BACKGROUND_COLOR_ID: u8 = 255;

/// Parallel-jaw gripper geometry shared by grasp and move primitives.
pub mod gripper {
    /// Maximum jaw opening in meters.
    pub const MAX_OPENING: f64 = 0.08;
    /// Finger thickness along the closing axis, in cells.
    pub const FINGER_THICKNESS_CELLS: f64 = 1.0;
    /// Finger width across the closing axis, in cells.
    pub const FINGER_WIDTH_CELLS: f64 = 3.0;
    /// Gripper descends this far below the measured surface height.
    pub const DESCEND_BELOW: f64 = 0.04;
}

/// Push primitive geometry.
pub mod pusher {
    /// Fixed sweep length in meters.
    pub const PUSH_LENGTH: f64 = 0.10;
    /// Tip starts this far below the measured surface height.
    pub const TIP_BELOW: f64 = 0.01;
    /// Tip height over empty table.
    pub const TIP_FLOOR: f64 = 0.02;
}

/// Depth-change detection thresholds.
pub mod thresholds {
    /// Height quantum of the object library (heights are multiples of this).
    pub const HEIGHT_QUANTUM: f64 = 0.004;
    /// Per-cell depth delta that counts as changed (= quantum / 2).
    pub const TAU_CHANGE: f64 = 0.002;
    /// Number of changed cells that must be exceeded to report a change.
    pub const N_CHANGE: usize = 3;
    /// Occlusion tolerance on the cropped-depth comparison.
    pub const TAU_OCC: f64 = 0.002;
    /// Pose delta below which an object counts as unmoved.
    pub const POSE_TOL: f64 = 1e-9;
}

/// One rigid object: a convex footprint extruded to `height`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: u32,
    /// Convex polygon in the object frame, meters, centered near its centroid.
    pub footprint: ConvexPolygon,
    pub height: f64,
    /// Pose: planar position, bottom height, yaw.
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub color_id: u8,
}

impl SceneObject {
    pub fn world_footprint(&self) -> ConvexPolygon {
        self.footprint.transformed(self.yaw, Vec2::new(self.x, self.y))
    }

    /// Top surface height above the table.
    pub fn top(&self) -> f64 {
        self.z + self.height
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Ground-truth world state.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub objects: Vec<SceneObject>,
    pub target_id: u32,
    /// True once the target has been removed by a grasp or move-grasp.
    pub target_grasped: bool,
    pub motion_count: u32,
    pub rng: ChaCha8Rng,
}

impl WorldState {
    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn target(&self) -> Option<&SceneObject> {
        self.object(self.target_id)
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Removes and returns an object by id.
    fn take_object(&mut self, id: u32) -> Option<SceneObject> {
        let idx = self.objects.iter().position(|o| o.id == id)?;
        Some(self.objects.remove(idx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Move,
    Push,
    Grasp,
}

impl ActionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::Move => "move",
            ActionKind::Push => "push",
            ActionKind::Grasp => "grasp",
        }
    }
}

/// Result of executing one primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub kind: ActionKind,
    /// Object removed (grasp) or relocated (move); `None` on failure.
    pub grasped_id: Option<u32>,
    /// Objects whose pose changed beyond tolerance.
    pub displaced_ids: BTreeSet<u32>,
    pub world_changed: bool,
}

impl ActionOutcome {
    fn unchanged(kind: ActionKind) -> Self {
        Self {
            kind,
            grasped_id: None,
            displaced_ids: BTreeSet::new(),
            world_changed: false,
        }
    }
}

pub use primitives::{execute_grasp, execute_move, execute_push};

/// Clamps an object's planar position so its footprint stays inside the
/// workspace. Returns true when clamping moved it.
pub(crate) fn clamp_into_workspace(obj: &mut SceneObject, cfg: &GridConfig) -> bool {
    let fp = obj.world_footprint();
    let (lo, hi) = fp.bbox();
    let extent = cfg.extent();
    let mut dx = 0.0;
    let mut dy = 0.0;
    if lo.x < 0.0 {
        dx = -lo.x;
    } else if hi.x > extent {
        dx = extent - hi.x;
    }
    if lo.y < 0.0 {
        dy = -lo.y;
    } else if hi.y > extent {
        dy = extent - hi.y;
    }
    if dx != 0.0 || dy != 0.0 {
        obj.x += dx;
        obj.y += dy;
        true
    } else {
        false
    }
}

/// Z-intervals strictly overlap (stacking contact does not count).
pub(crate) fn z_overlap(a: &SceneObject, b: &SceneObject) -> bool {
    a.z + thresholds::POSE_TOL < b.top() - thresholds::POSE_TOL
        && b.z + thresholds::POSE_TOL < a.top() - thresholds::POSE_TOL
}
