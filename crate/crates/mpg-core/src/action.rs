//! Codec between network output coordinates (branch, rotation index, pixel)
//! and world-frame action parameters, including the z-height rules.

use crate::grid::{Grid, GridConfig, Pixel};
use crate::world::{gripper, pusher, ActionKind};

/// Number of discrete action orientations.
pub const NUM_ROTATIONS: usize = 16;

/// Angular step between orientations, degrees.
pub const ROT_STEP_DEG: f64 = 22.5;

/// Network-space action: primitive kind addressed by (pixel, rotation index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action {
    pub kind: ActionKind,
    pub pixel: Pixel,
    pub rot_idx: usize,
}

/// Fully specified world-frame action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldAction {
    pub kind: ActionKind,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Grasp/move closing-axis angle, or push direction, radians in [0, 2π).
    pub angle: f64,
}

/// Rotation index to angle in radians (index × 22.5°).
///
/// Panics on out-of-range indices (caller contract).
pub fn rot_index_to_angle(i: usize) -> f64 {
    assert!(i < NUM_ROTATIONS, "rotation index {i} out of range");
    rot_index_to_degrees(i).to_radians()
}

/// Rotation index to angle in degrees; exact in f64 for all 16 indices.
pub fn rot_index_to_degrees(i: usize) -> f64 {
    assert!(i < NUM_ROTATIONS, "rotation index {i} out of range");
    i as f64 * ROT_STEP_DEG
}

/// Height read at a pixel: max depth over the 3x3 neighborhood, which keeps
/// readings robust where heightmap edges alias at low resolution.
pub fn height_at(depth: &Grid<f64>, pixel: Pixel) -> f64 {
    depth.max3x3(pixel)
}

/// z-height rule per primitive:
/// grasp/move descend 4 cm below the surface (clamped at the table);
/// push tips start 1 cm below the surface, or 2 cm over empty table.
pub fn action_height(depth: &Grid<f64>, pixel: Pixel, kind: ActionKind) -> f64 {
    let h = height_at(depth, pixel);
    match kind {
        ActionKind::Grasp | ActionKind::Move => (h - gripper::DESCEND_BELOW).max(0.0),
        ActionKind::Push => {
            if h > 0.0 {
                h - pusher::TIP_BELOW
            } else {
                pusher::TIP_FLOOR
            }
        }
    }
}

/// Branch index convention shared with the network output layout.
pub fn branch_kind(branch: usize) -> ActionKind {
    match branch {
        0 => ActionKind::Move,
        1 => ActionKind::Grasp,
        2 => ActionKind::Push,
        _ => panic!("branch index {branch} out of range"),
    }
}

pub fn kind_branch(kind: ActionKind) -> usize {
    match kind {
        ActionKind::Move => 0,
        ActionKind::Grasp => 1,
        ActionKind::Push => 2,
    }
}

/// Composes the codec into an executable world-frame action.
pub fn decode(
    branch: usize,
    rot_idx: usize,
    pixel: Pixel,
    depth: &Grid<f64>,
    cfg: &GridConfig,
) -> WorldAction {
    assert!(cfg.in_bounds(pixel), "pixel outside grid");
    let kind = branch_kind(branch);
    let w = cfg.pixel_to_world(pixel);
    WorldAction {
        kind,
        x: w.x,
        y: w.y,
        z: action_height(depth, pixel, kind),
        angle: rot_index_to_angle(rot_idx),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn angles_hit_paper_values() {
        assert_eq!(rot_index_to_degrees(0), 0.0);
        assert_eq!(rot_index_to_degrees(3), 67.5);
        assert_eq!(rot_index_to_degrees(15), 337.5);
        assert_eq!(rot_index_to_angle(8), 180f64.to_radians());
    }

    #[test]
    fn angle_codec_symmetry() {
        // angle(i) + angle(16 - i) ≡ 0 (mod 360°) for i >= 1
        for i in 1..NUM_ROTATIONS {
            let s = rot_index_to_degrees(i) + rot_index_to_degrees(NUM_ROTATIONS - i);
            assert_eq!(s, 360.0, "i = {i}");
        }
    }

    #[test]
    #[should_panic]
    fn angle_rejects_out_of_range() {
        rot_index_to_angle(16);
    }

    #[test]
    fn height_rules() {
        let mut depth = Grid::filled(16, 16, 0.0f64);
        depth.set(8, 8, 0.10);
        let p = Pixel::new(8, 8);
        assert_eq!(action_height(&depth, p, ActionKind::Grasp), 0.10 - 0.04);
        depth.set(8, 8, 0.05);
        assert_eq!(action_height(&depth, p, ActionKind::Push), 0.05 - 0.01);
        // empty cell: push floor at 2 cm, grasp clamped at the table
        let empty = Grid::filled(16, 16, 0.0f64);
        assert_eq!(action_height(&empty, p, ActionKind::Push), 0.02);
        assert_eq!(action_height(&empty, p, ActionKind::Grasp), 0.0);
        // shallow object: grasp z clamps at 0
        let mut low = Grid::filled(16, 16, 0.0f64);
        low.set(8, 8, 0.02);
        assert_eq!(action_height(&low, p, ActionKind::Move), 0.0);
    }

    #[test]
    fn random_pixel_round_trip() {
        let cfg = GridConfig::new(64, 0.007);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let p = Pixel::new(rng.gen_range(0..64), rng.gen_range(0..64));
            assert_eq!(cfg.world_to_pixel(cfg.pixel_to_world(p)), p);
        }
    }

    #[test]
    fn decode_composes_sub_ops() {
        let cfg = GridConfig::new(64, 0.007);
        let mut depth = Grid::filled(64, 64, 0.0f64);
        let p = Pixel::new(20, 30);
        depth.set(20, 30, 0.06);
        let a = decode(1, 4, p, &depth, &cfg);
        assert_eq!(a.kind, ActionKind::Grasp);
        assert_eq!(a.angle, 90f64.to_radians());
        assert_eq!(a.z, 0.06 - 0.04);
        let w = cfg.pixel_to_world(p);
        assert_eq!((a.x, a.y), (w.x, w.y));
        // push over empty region starts at the 2 cm floor
        let empty = Grid::filled(64, 64, 0.0f64);
        let b = decode(2, 0, Pixel::new(5, 5), &empty, &cfg);
        assert_eq!(b.kind, ActionKind::Push);
        assert_eq!(b.z, 0.02);
        // move decodes angle 180° at index 8
        let c = decode(0, 8, p, &depth, &cfg);
        assert_eq!(c.kind, ActionKind::Move);
        assert_eq!(c.angle, 180f64.to_radians());
        assert_eq!(c.z, 0.06 - 0.04);
    }
}
