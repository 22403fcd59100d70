//! Analytic backward pass and the training step.
//!
//! The loss is supported at the executed action's (rotation, pixel) only,
//! but training-mode batch norm couples all 16 rotations through the batch
//! statistics, so encoder gradients flow for every rotation. Per-rotation
//! contributions are computed independently (optionally in parallel) and
//! reduced in fixed rotation order, keeping results bit-deterministic.

use super::adam::{adam_update, AdamHp};
use super::forward::{forward_infer, forward_train, NetInput, TrainCache};
use super::ops::{
    conv1x1_backward, conv3x3s2_backward, bn_backward, relu_backward, rotate_backward,
    upsample_backward,
};
use super::params::{Encoder, NetParams, BRANCH_GRASP, DOWNSCALE};
use super::tensor::Image;
use super::{huber, QMaps};
use crate::action::{kind_branch, rot_index_to_angle, Action, NUM_ROTATIONS};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Exec};
use crate::grid::Pixel;
use crate::world::Observation;
use std::sync::Arc;

/// One transition used for training.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub obs: Arc<Observation>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Arc<Observation>,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub loss: f64,
    /// Temporal-difference error |Q(s,a) - y|.
    pub delta: f64,
    pub q_sa: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ConvGrads {
    fn zeros_like(layer: &super::params::ConvLayer) -> Self {
        Self {
            w: vec![0.0; layer.w.len()],
            b: vec![0.0; layer.b.len()],
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.w.iter_mut().zip(other.w.iter()) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(other.b.iter()) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EncoderGrads {
    pub convs: [ConvGrads; 3],
}

impl EncoderGrads {
    fn zeros_like(enc: &Encoder) -> Self {
        Self {
            convs: [
                ConvGrads::zeros_like(&enc.convs[0]),
                ConvGrads::zeros_like(&enc.convs[1]),
                ConvGrads::zeros_like(&enc.convs[2]),
            ],
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.convs.iter_mut().zip(other.convs.iter()) {
            a.add(b);
        }
    }
}

/// Gradients of the full loss with respect to every tensor it touches:
/// the trained branch plus the shared goal encoder.
#[derive(Debug, Clone)]
pub struct BranchGrads {
    pub branch: usize,
    pub color: EncoderGrads,
    pub depth: EncoderGrads,
    pub goal: EncoderGrads,
    pub head_conv1: ConvGrads,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub head_conv2: ConvGrads,
}

impl BranchGrads {
    /// Gradient tensor lookup by the parameter's traversal name.
    pub fn by_name(&self, name: &str) -> Option<&[f64]> {
        let bn = super::params::BRANCH_NAMES[self.branch];
        let rest = if let Some(r) = name.strip_prefix(&format!("{bn}.")) {
            r
        } else if let Some(r) = name.strip_prefix("goal.") {
            return enc_lookup(&self.goal, r);
        } else {
            return None;
        };
        if let Some(r) = rest.strip_prefix("color.") {
            return enc_lookup(&self.color, r);
        }
        if let Some(r) = rest.strip_prefix("depth.") {
            return enc_lookup(&self.depth, r);
        }
        match rest {
            "head.conv1.w" => Some(&self.head_conv1.w),
            "head.conv1.b" => Some(&self.head_conv1.b),
            "head.bn.gamma" => Some(&self.bn_gamma),
            "head.bn.beta" => Some(&self.bn_beta),
            "head.conv2.w" => Some(&self.head_conv2.w),
            "head.conv2.b" => Some(&self.head_conv2.b),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        let slices: Vec<&[f64]> = self.all_slices();
        slices.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn all_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for enc in [&self.color, &self.depth, &self.goal] {
            for c in &enc.convs {
                out.push(&c.w);
                out.push(&c.b);
            }
        }
        out.push(&self.head_conv1.w);
        out.push(&self.head_conv1.b);
        out.push(&self.bn_gamma);
        out.push(&self.bn_beta);
        out.push(&self.head_conv2.w);
        out.push(&self.head_conv2.b);
        out
    }
}

fn enc_lookup<'a>(enc: &'a EncoderGrads, rest: &str) -> Option<&'a [f64]> {
    match rest {
        "conv1.w" => Some(&enc.convs[0].w),
        "conv1.b" => Some(&enc.convs[0].b),
        "conv2.w" => Some(&enc.convs[1].w),
        "conv2.b" => Some(&enc.convs[1].b),
        "conv3.w" => Some(&enc.convs[2].w),
        "conv3.b" => Some(&enc.convs[2].b),
        _ => None,
    }
}

fn encoder_backward(
    enc: &Encoder,
    cache: &super::forward::StreamCache,
    g_feat: &Image,
    grads: &mut EncoderGrads,
) {
    let g_a3 = relu_backward(&cache.a3, g_feat);
    let g_r2 = conv3x3s2_backward(
        &enc.convs[2],
        &cache.r2,
        &g_a3,
        &mut grads.convs[2].w,
        &mut grads.convs[2].b,
    );
    let g_a2 = relu_backward(&cache.a2, &g_r2);
    let g_r1 = conv3x3s2_backward(
        &enc.convs[1],
        &cache.r1,
        &g_a2,
        &mut grads.convs[1].w,
        &mut grads.convs[1].b,
    );
    let g_a1 = relu_backward(&cache.a1, &g_r1);
    let _ = conv3x3s2_backward(
        &enc.convs[0],
        &cache.input,
        &g_a1,
        &mut grads.convs[0].w,
        &mut grads.convs[0].b,
    );
}

/// Splits a concat-features gradient back into the three stream parts.
fn split3(g: &Image, c: usize) -> (Image, Image, Image) {
    let hw = g.h * g.w;
    let mut a = Image::zeros(c, g.h, g.w);
    let mut b = Image::zeros(c, g.h, g.w);
    let mut d = Image::zeros(c, g.h, g.w);
    a.data.copy_from_slice(&g.data[0..c * hw]);
    b.data.copy_from_slice(&g.data[c * hw..2 * c * hw]);
    d.data.copy_from_slice(&g.data[2 * c * hw..3 * c * hw]);
    (a, b, d)
}

/// Full backward pass from a single scalar upstream gradient `dq` at the
/// executed (rotation, pixel) of the branch map.
pub fn backward(
    params: &NetParams,
    cache: &TrainCache,
    rot_idx: usize,
    pixel: Pixel,
    dq: f64,
    exec: Exec,
) -> BranchGrads {
    let b = &params.branches[cache.branch];
    let res = cache.q_small[0].h * DOWNSCALE;
    let mode = params.arch.rot_mode;

    let mut grads = BranchGrads {
        branch: cache.branch,
        color: EncoderGrads::zeros_like(&b.color),
        depth: EncoderGrads::zeros_like(&b.depth),
        goal: EncoderGrads::zeros_like(&params.goal),
        head_conv1: ConvGrads::zeros_like(&b.head.conv1),
        bn_gamma: vec![0.0; b.head.bn.gamma.len()],
        bn_beta: vec![0.0; b.head.bn.beta.len()],
        head_conv2: ConvGrads::zeros_like(&b.head.conv2),
    };

    // executed rotation only: rotate-back, upsample, conv2
    let mut g_map = Image::zeros(1, res, res);
    *g_map.at_mut(0, pixel.row, pixel.col) = dq;
    let g_up = rotate_backward(&g_map, rot_index_to_angle(rot_idx), mode);
    let g_small = upsample_backward(&g_up, DOWNSCALE);
    let g_bn_out_star = conv1x1_backward(
        &b.head.conv2,
        &cache.bn_out[rot_idx],
        &g_small,
        &mut grads.head_conv2.w,
        &mut grads.head_conv2.b,
    );

    // batch-norm backward couples all rotations
    let hh = cache.q_small[0].h;
    let zero = Image::zeros(b.head.bn.gamma.len(), hh, cache.q_small[0].w);
    let g_bn_outs: Vec<Image> = (0..NUM_ROTATIONS)
        .map(|r| {
            if r == rot_idx {
                g_bn_out_star.clone()
            } else {
                zero.clone()
            }
        })
        .collect();
    let g_h1r = bn_backward(
        &b.head.bn,
        &cache.bn_cache,
        &cache.xhat,
        &g_bn_outs,
        &mut grads.bn_gamma,
        &mut grads.bn_beta,
    );

    // per-rotation: relu, head conv1, three encoders
    struct RotChunk {
        color: EncoderGrads,
        depth: EncoderGrads,
        goal: EncoderGrads,
        head_conv1: ConvGrads,
    }
    let c3 = params.arch.enc_channels[2];
    let chunks: Vec<RotChunk> = map_indexed(exec, NUM_ROTATIONS, |r| {
        let mut chunk = RotChunk {
            color: EncoderGrads::zeros_like(&b.color),
            depth: EncoderGrads::zeros_like(&b.depth),
            goal: EncoderGrads::zeros_like(&params.goal),
            head_conv1: ConvGrads::zeros_like(&b.head.conv1),
        };
        let g_h1 = relu_backward(&cache.h1[r], &g_h1r[r]);
        let g_feat = conv1x1_backward(
            &b.head.conv1,
            &cache.feat[r],
            &g_h1,
            &mut chunk.head_conv1.w,
            &mut chunk.head_conv1.b,
        );
        let (g_cf, g_df, g_gf) = split3(&g_feat, c3);
        encoder_backward(&b.color, &cache.color[r], &g_cf, &mut chunk.color);
        encoder_backward(&b.depth, &cache.depth[r], &g_df, &mut chunk.depth);
        encoder_backward(&params.goal, &cache.goal[r], &g_gf, &mut chunk.goal);
        chunk
    });
    for chunk in &chunks {
        grads.color.add(&chunk.color);
        grads.depth.add(&chunk.depth);
        grads.goal.add(&chunk.goal);
        grads.head_conv1.add(&chunk.head_conv1);
    }
    grads
}

/// Loss (with its gradient support at the executed action) and analytic
/// gradients, computed without mutating the parameters. `BnRunningUpdate`
/// and Q come along for the training step.
pub fn loss_and_grads(
    params: &NetParams,
    input: &NetInput,
    action: &Action,
    target_y: f64,
    exec: Exec,
) -> Result<(StepStats, BranchGrads, super::ops::BnRunningUpdate)> {
    let branch = kind_branch(action.kind);
    let (q, cache, running) = forward_train(params, input, branch, exec)?;
    let q_sa = q.at(branch, action.rot_idx, action.pixel.row, action.pixel.col);
    let delta = q_sa - target_y;
    let loss = huber(delta.abs());
    // d loss / d q: huber'(|d|) * sign(d) = clamp(d, -1, 1)
    let dq = delta.clamp(-1.0, 1.0);
    let grads = backward(params, &cache, action.rot_idx, action.pixel, dq, exec);
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::NumericalDivergence("backward"));
    }
    Ok((
        StepStats {
            loss,
            delta: delta.abs(),
            q_sa,
        },
        grads,
        running,
    ))
}

/// One online Q-learning update at the executed action.
///
/// Only the executed branch's tensors are updated; the shared goal encoder
/// trains with the grasp branch and stays frozen otherwise. Batch-norm
/// running statistics of the trained branch are committed alongside.
pub fn train_step(
    params: &mut NetParams,
    sample: &TrainSample,
    target_y: f64,
    hp: &AdamHp,
    exec: Exec,
) -> Result<StepStats> {
    let input = NetInput::from_observation(&sample.obs);
    let (stats, grads, running) = loss_and_grads(params, &input, &sample.action, target_y, exec)?;
    let branch = grads.branch;
    let update_goal = branch == BRANCH_GRASP;
    apply_grads(params, &grads, hp, update_goal);
    let bn = &mut params.branches[branch].head.bn;
    bn.running_mean = running.mean;
    bn.running_var = running.var;
    params.global_step += 1;
    Ok(stats)
}

fn apply_grads(params: &mut NetParams, grads: &BranchGrads, hp: &AdamHp, update_goal: bool) {
    let b = &mut params.branches[grads.branch];
    for (enc, g) in [(&mut b.color, &grads.color), (&mut b.depth, &grads.depth)] {
        for (layer, cg) in enc.convs.iter_mut().zip(g.convs.iter()) {
            adam_update(&mut layer.w, &cg.w, hp);
            adam_update(&mut layer.b, &cg.b, hp);
        }
    }
    adam_update(&mut b.head.conv1.w, &grads.head_conv1.w, hp);
    adam_update(&mut b.head.conv1.b, &grads.head_conv1.b, hp);
    adam_update(&mut b.head.bn.gamma, &grads.bn_gamma, hp);
    adam_update(&mut b.head.bn.beta, &grads.bn_beta, hp);
    adam_update(&mut b.head.conv2.w, &grads.head_conv2.w, hp);
    adam_update(&mut b.head.conv2.b, &grads.head_conv2.b, hp);
    if update_goal {
        for (layer, cg) in params.goal.convs.iter_mut().zip(grads.goal.convs.iter()) {
            adam_update(&mut layer.w, &cg.w, hp);
            adam_update(&mut layer.b, &cg.b, hp);
        }
    }
}

/// Convenience inference wrapper used by policies: all three branch maps.
pub fn forward_all(params: &NetParams, obs: &Observation, exec: Exec) -> Result<QMaps> {
    let input = NetInput::from_observation(obs);
    forward_infer(params, &input, &[0, 1, 2], exec)
}
