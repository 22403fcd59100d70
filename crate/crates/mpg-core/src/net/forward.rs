//! Network forward passes with 16-way rotation batching.
//!
//! For each rotation index r the observation is rotated by -angle(r) about
//! the grid center, encoded, pushed through the branch head, bilinearly
//! upsampled back to full resolution and rotated by +angle(r) into the
//! common frame. Inference normalizes with batch-norm running statistics;
//! the training forward treats the 16 rotations as one batch.

use super::ops::{
    bn_forward_eval, bn_forward_train, conv1x1, conv3x3s2, relu, BnCache, BnRunningUpdate,
};
use super::params::{Encoder, NetParams, DOWNSCALE, NUM_BRANCHES};
use super::tensor::Image;
use crate::action::{rot_index_to_angle, NUM_ROTATIONS};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Exec};
use crate::world::{Observation, BACKGROUND_COLOR_ID, PALETTE};

/// Scale applied to depth meters before entering the network.
pub const DEPTH_INPUT_SCALE: f64 = 5.0;

/// Network input planes built from an observation.
#[derive(Debug, Clone)]
pub struct NetInput {
    pub color: Image,
    pub depth: Image,
    pub goal: Image,
}

impl NetInput {
    pub fn from_observation(obs: &Observation) -> Self {
        let h = obs.depth.rows();
        let w = obs.depth.cols();
        let mut color = Image::zeros(3, h, w);
        let mut depth = Image::zeros(1, h, w);
        let mut goal = Image::zeros(1, h, w);
        for (r, c, &id) in obs.color_ids.iter_indexed() {
            if id != BACKGROUND_COLOR_ID {
                let rgb = PALETTE[id as usize % PALETTE.len()];
                for ch in 0..3 {
                    *color.at_mut(ch, r, c) = rgb[ch] as f64 / 255.0;
                }
            }
        }
        for (r, c, &d) in obs.depth.iter_indexed() {
            *depth.at_mut(0, r, c) = d * DEPTH_INPUT_SCALE;
        }
        for (r, c, &m) in obs.goal_mask.iter_indexed() {
            if m {
                *goal.at_mut(0, r, c) = 1.0;
            }
        }
        Self { color, depth, goal }
    }

    pub fn resolution(&self) -> usize {
        self.depth.h
    }
}

/// Dense pixel-wise Q values: 3 branches x 16 rotations x H x W.
#[derive(Debug, Clone, PartialEq)]
pub struct QMaps {
    res: usize,
    computed: [bool; NUM_BRANCHES],
    data: Vec<f64>,
}

impl QMaps {
    pub fn zeros(res: usize) -> Self {
        Self {
            res,
            computed: [false; NUM_BRANCHES],
            data: vec![0.0; NUM_BRANCHES * NUM_ROTATIONS * res * res],
        }
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    /// Whether a branch was part of the forward pass.
    pub fn has_branch(&self, branch: usize) -> bool {
        self.computed[branch]
    }

    /// Flat `[row-major]` Q map for one (branch, rotation).
    pub fn map(&self, branch: usize, rot: usize) -> &[f64] {
        let hw = self.res * self.res;
        let base = (branch * NUM_ROTATIONS + rot) * hw;
        &self.data[base..base + hw]
    }

    pub fn at(&self, branch: usize, rot: usize, row: usize, col: usize) -> f64 {
        self.map(branch, rot)[row * self.res + col]
    }

    fn set_map(&mut self, branch: usize, rot: usize, map: &Image) {
        let hw = self.res * self.res;
        let base = (branch * NUM_ROTATIONS + rot) * hw;
        self.data[base..base + hw].copy_from_slice(&map.data);
        self.computed[branch] = true;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn encode(enc: &Encoder, input: &Image) -> Image {
    let a1 = conv3x3s2(&enc.convs[0], input);
    let r1 = relu(&a1);
    let a2 = conv3x3s2(&enc.convs[1], &r1);
    let r2 = relu(&a2);
    let a3 = conv3x3s2(&enc.convs[2], &r2);
    relu(&a3)
}

/// Encoder intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StreamCache {
    pub input: Image,
    pub a1: Image,
    pub r1: Image,
    pub a2: Image,
    pub r2: Image,
    pub a3: Image,
}

fn encode_cached(enc: &Encoder, input: Image) -> (Image, StreamCache) {
    let a1 = conv3x3s2(&enc.convs[0], &input);
    let r1 = relu(&a1);
    let a2 = conv3x3s2(&enc.convs[1], &r1);
    let r2 = relu(&a2);
    let a3 = conv3x3s2(&enc.convs[2], &r2);
    let feat = relu(&a3);
    (
        feat,
        StreamCache {
            input,
            a1,
            r1,
            a2,
            r2,
            a3,
        },
    )
}

fn concat(parts: [&Image; 3]) -> Image {
    let (h, w) = (parts[0].h, parts[0].w);
    let c_total: usize = parts.iter().map(|p| p.c).sum();
    let mut out = Image::zeros(c_total, h, w);
    let mut offset = 0;
    for p in parts {
        out.data[offset..offset + p.data.len()].copy_from_slice(&p.data);
        offset += p.data.len();
    }
    out
}

fn rotate_input(params: &NetParams, input: &NetInput, rot: usize) -> (Image, Image, Image) {
    let angle = -rot_index_to_angle(rot);
    let mode = params.arch.rot_mode;
    (
        super::ops::rotate(&input.color, angle, mode),
        super::ops::rotate(&input.depth, angle, mode),
        super::ops::rotate(&input.goal, angle, mode),
    )
}

/// Inference forward over the requested branches (batch-norm running
/// statistics; no caches).
pub fn forward_infer(
    params: &NetParams,
    input: &NetInput,
    branches: &[usize],
    exec: Exec,
) -> Result<QMaps> {
    let res = input.resolution();
    assert_eq!(res % DOWNSCALE, 0, "resolution must be divisible by {DOWNSCALE}");
    let per_rot = map_indexed(exec, NUM_ROTATIONS, |rot| {
        let (rc, rd, rg) = rotate_input(params, input, rot);
        let goal_feat = encode(&params.goal, &rg);
        let mut maps: Vec<(usize, Image)> = Vec::with_capacity(branches.len());
        for &bi in branches {
            let b = &params.branches[bi];
            let cf = encode(&b.color, &rc);
            let df = encode(&b.depth, &rd);
            let feat = concat([&cf, &df, &goal_feat]);
            let h1 = conv1x1(&b.head.conv1, &feat);
            let h1r = relu(&h1);
            let bn_out = bn_forward_eval(&b.head.bn, params.arch.bn_eps, &h1r);
            let q_small = conv1x1(&b.head.conv2, &bn_out);
            let q_up = super::ops::upsample(&q_small, DOWNSCALE);
            let q_map = super::ops::rotate(&q_up, rot_index_to_angle(rot), params.arch.rot_mode);
            maps.push((bi, q_map));
        }
        maps
    });
    let mut q = QMaps::zeros(res);
    for (rot, maps) in per_rot.into_iter().enumerate() {
        for (bi, map) in maps {
            q.set_map(bi, rot, &map);
        }
    }
    if !q.is_finite() {
        return Err(Error::NumericalDivergence("forward"));
    }
    Ok(q)
}

/// Everything the backward pass needs from a training-mode forward.
pub struct TrainCache {
    pub branch: usize,
    /// Per-rotation stream caches: color, depth, goal.
    pub color: Vec<StreamCache>,
    pub depth: Vec<StreamCache>,
    pub goal: Vec<StreamCache>,
    /// Concatenated features per rotation (head conv1 input).
    pub feat: Vec<Image>,
    /// Head conv1 pre-activations per rotation.
    pub h1: Vec<Image>,
    /// ReLU outputs (batch-norm inputs) per rotation.
    pub h1r: Vec<Image>,
    /// Normalized activations per rotation.
    pub xhat: Vec<Image>,
    /// Batch-norm outputs (head conv2 inputs) per rotation.
    pub bn_out: Vec<Image>,
    /// Head conv2 outputs (upsample inputs) per rotation.
    pub q_small: Vec<Image>,
    pub bn_cache: BnCache,
}

/// Training-mode forward of a single branch: the 16 rotations form one
/// batch-norm batch. Running statistics are returned, not applied.
pub fn forward_train(
    params: &NetParams,
    input: &NetInput,
    branch: usize,
    exec: Exec,
) -> Result<(QMaps, TrainCache, BnRunningUpdate)> {
    let res = input.resolution();
    assert_eq!(res % DOWNSCALE, 0, "resolution must be divisible by {DOWNSCALE}");
    let b = &params.branches[branch];

    // phase A: everything before batch norm, independent per rotation
    struct PreBn {
        color: StreamCache,
        depth: StreamCache,
        goal: StreamCache,
        feat: Image,
        h1: Image,
        h1r: Image,
    }
    let pre: Vec<PreBn> = map_indexed(exec, NUM_ROTATIONS, |rot| {
        let (rc, rd, rg) = rotate_input(params, input, rot);
        let (goal_feat, goal_cache) = encode_cached(&params.goal, rg);
        let (cf, color_cache) = encode_cached(&b.color, rc);
        let (df, depth_cache) = encode_cached(&b.depth, rd);
        let feat = concat([&cf, &df, &goal_feat]);
        let h1 = conv1x1(&b.head.conv1, &feat);
        let h1r = relu(&h1);
        PreBn {
            color: color_cache,
            depth: depth_cache,
            goal: goal_cache,
            feat,
            h1,
            h1r,
        }
    });

    // phase B: joint batch norm over the 16 rotations
    let batch: Vec<Image> = pre.iter().map(|p| p.h1r.clone()).collect();
    let (bn_outs, xhats, bn_cache, running) =
        bn_forward_train(&b.head.bn, params.arch.bn_eps, params.arch.bn_momentum, &batch);

    // phase C: head tail per rotation
    let tails: Vec<(Image, Image)> = map_indexed(exec, NUM_ROTATIONS, |rot| {
        let q_small = conv1x1(&b.head.conv2, &bn_outs[rot]);
        let q_up = super::ops::upsample(&q_small, DOWNSCALE);
        let q_map = super::ops::rotate(&q_up, rot_index_to_angle(rot), params.arch.rot_mode);
        (q_small, q_map)
    });

    let mut q = QMaps::zeros(res);
    let mut q_small = Vec::with_capacity(NUM_ROTATIONS);
    for (rot, (small, map)) in tails.into_iter().enumerate() {
        q.set_map(branch, rot, &map);
        q_small.push(small);
    }
    if !q.is_finite() {
        return Err(Error::NumericalDivergence("forward"));
    }

    let mut color = Vec::with_capacity(NUM_ROTATIONS);
    let mut depth = Vec::with_capacity(NUM_ROTATIONS);
    let mut goal = Vec::with_capacity(NUM_ROTATIONS);
    let mut feat = Vec::with_capacity(NUM_ROTATIONS);
    let mut h1 = Vec::with_capacity(NUM_ROTATIONS);
    let mut h1r = Vec::with_capacity(NUM_ROTATIONS);
    for p in pre {
        color.push(p.color);
        depth.push(p.depth);
        goal.push(p.goal);
        feat.push(p.feat);
        h1.push(p.h1);
        h1r.push(p.h1r);
    }
    Ok((
        q,
        TrainCache {
            branch,
            color,
            depth,
            goal,
            feat,
            h1,
            h1r,
            xhat: xhats,
            bn_out: bn_outs,
            q_small,
            bn_cache,
        },
        running,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::params::{ArchConfig, BRANCH_GRASP, BRANCH_MOVE, BRANCH_PUSH};

    fn zero_input(res: usize) -> NetInput {
        NetInput {
            color: Image::zeros(3, res, res),
            depth: Image::zeros(1, res, res),
            goal: Image::zeros(1, res, res),
        }
    }

    #[test]
    fn zero_observation_gives_uniform_interior_maps() {
        let params = NetParams::init(ArchConfig::default(), 11);
        let input = zero_input(32);
        let q = forward_infer(
            &params,
            &input,
            &[BRANCH_MOVE, BRANCH_GRASP, BRANCH_PUSH],
            Exec::default(),
        )
        .unwrap();
        // all 48 maps spatially uniform well inside the valid interior;
        // stride-2 zero padding and upsample clamping perturb borders
        let lo = 12;
        let hi = 20;
        for branch in 0..3 {
            let reference = q.at(branch, 0, 16, 16);
            for rot in 0..NUM_ROTATIONS {
                for row in lo..hi {
                    for col in lo..hi {
                        let v = q.at(branch, rot, row, col);
                        assert!(
                            (v - reference).abs() < 1e-9,
                            "branch {branch} rot {rot} ({row},{col}): {v} vs {reference}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn infer_only_fills_requested_branches() {
        let params = NetParams::init(ArchConfig::toy(), 2);
        let input = zero_input(16);
        let q = forward_infer(&params, &input, &[BRANCH_GRASP], Exec::default()).unwrap();
        assert!(q.has_branch(BRANCH_GRASP));
        assert!(!q.has_branch(BRANCH_MOVE));
        assert!(q.map(BRANCH_MOVE, 0).iter().all(|&v| v == 0.0));
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_forward_is_bit_identical() {
        let params = NetParams::init(ArchConfig::toy(), 7);
        let mut input = zero_input(16);
        for (i, v) in input.depth.data.iter_mut().enumerate() {
            *v = ((i % 13) as f64) * 0.01;
        }
        input.goal.data[40] = 1.0;
        let a = forward_infer(&params, &input, &[0, 1, 2], Exec::Sequential).unwrap();
        let b = forward_infer(&params, &input, &[0, 1, 2], Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let (qa, _, ra) = forward_train(&params, &input, 1, Exec::Sequential).unwrap();
        let (qb, _, rb) = forward_train(&params, &input, 1, Exec::Parallel).unwrap();
        assert_eq!(qa, qb);
        assert_eq!(ra.mean, rb.mean);
        assert_eq!(ra.var, rb.var);
    }
}
