//! Network parameters: three branch networks over a shared goal-mask
//! encoder, plus initialization and uniform traversal for the optimizer,
//! checkpoints and gradient checks.

use super::tensor::Param;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BRANCH_MOVE: usize = 0;
pub const BRANCH_GRASP: usize = 1;
pub const BRANCH_PUSH: usize = 2;
pub const NUM_BRANCHES: usize = 3;
pub const BRANCH_NAMES: [&str; 3] = ["move", "grasp", "push"];

/// Spatial downscale factor of the encoder (three stride-2 convolutions),
/// matched by the bilinear upsampling after the head.
pub const DOWNSCALE: usize = 8;

/// Interpolation used by the input/output rotation operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotMode {
    Bilinear,
    Nearest,
}

/// Architecture hyperparameters (everything except the grid resolution;
/// the convolutions are size-agnostic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchConfig {
    /// Channels after each of the three stride-2 encoder convolutions.
    pub enc_channels: [usize; 3],
    /// Hidden channels of the first 1x1 head convolution.
    pub head_hidden: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub rot_mode: RotMode,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            enc_channels: [8, 16, 32],
            head_hidden: 32,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            rot_mode: RotMode::Bilinear,
        }
    }
}

impl ArchConfig {
    /// Downscaled architecture for gradient checks and fast tests.
    pub fn toy() -> Self {
        Self {
            enc_channels: [2, 3, 4],
            head_hidden: 4,
            ..Self::default()
        }
    }

    /// Channels entering the head: concatenated color, depth and goal features.
    pub fn concat_channels(&self) -> usize {
        3 * self.enc_channels[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// Weights `[out_c][in_c][k][k]`.
    pub w: Param,
    /// Bias `[out_c]`.
    pub b: Param,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
}

impl ConvLayer {
    fn new(in_c: usize, out_c: usize, k: usize) -> Self {
        Self {
            w: Param::zeros(vec![out_c, in_c, k, k]),
            b: Param::zeros(vec![out_c]),
            in_c,
            out_c,
            k,
        }
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        let fan_in = (self.in_c * self.k * self.k) as f64;
        let bound = 1.0 / fan_in.sqrt();
        for v in self.w.value.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        for v in self.b.value.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
    }
}

/// Per-stream encoder: three 3x3 stride-2 conv + ReLU blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub convs: [ConvLayer; 3],
}

impl Encoder {
    fn new(in_c: usize, arch: &ArchConfig) -> Self {
        let [c1, c2, c3] = arch.enc_channels;
        Self {
            convs: [
                ConvLayer::new(in_c, c1, 3),
                ConvLayer::new(c1, c2, 3),
                ConvLayer::new(c2, c3, 3),
            ],
        }
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        for c in self.convs.iter_mut() {
            c.init(rng);
        }
    }
}

/// Spatial batch normalization state.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(c: usize) -> Self {
        let mut gamma = Param::zeros(vec![c]);
        gamma.value.iter_mut().for_each(|v| *v = 1.0);
        Self {
            gamma,
            beta: Param::zeros(vec![c]),
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
        }
    }
}

/// Branch head: 1x1 conv -> ReLU -> batch norm -> 1x1 conv to one Q channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub conv1: ConvLayer,
    pub bn: BatchNorm,
    pub conv2: ConvLayer,
}

impl Head {
    fn new(arch: &ArchConfig) -> Self {
        Self {
            conv1: ConvLayer::new(arch.concat_channels(), arch.head_hidden, 1),
            bn: BatchNorm::new(arch.head_hidden),
            conv2: ConvLayer::new(arch.head_hidden, 1, 1),
        }
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        self.conv1.init(rng);
        self.conv2.init(rng);
    }
}

/// One action branch: private color and depth encoders plus the head.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchNet {
    pub color: Encoder,
    pub depth: Encoder,
    pub head: Head,
}

impl BranchNet {
    fn new(arch: &ArchConfig) -> Self {
        Self {
            color: Encoder::new(3, arch),
            depth: Encoder::new(1, arch),
            head: Head::new(arch),
        }
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        self.color.init(rng);
        self.depth.init(rng);
        self.head.init(rng);
    }
}

/// All weights, biases and batch-norm state of the three branch networks
/// plus the shared goal-mask encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub branches: [BranchNet; 3],
    pub goal: Encoder,
    pub arch: ArchConfig,
    pub global_step: u64,
}

impl NetParams {
    /// Deterministic initialization: uniform fan-in scaling, biases
    /// included; batch-norm starts at identity.
    pub fn init(arch: ArchConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self {
            branches: [
                BranchNet::new(&arch),
                BranchNet::new(&arch),
                BranchNet::new(&arch),
            ],
            goal: Encoder::new(1, &arch),
            arch,
            global_step: 0,
        };
        for b in p.branches.iter_mut() {
            b.init(&mut rng);
        }
        p.goal.init(&mut rng);
        p
    }

    /// Visits every trainable tensor in a fixed order with a stable name.
    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        for (bi, b) in self.branches.iter_mut().enumerate() {
            let bn = BRANCH_NAMES[bi];
            visit_encoder_mut(&format!("{bn}.color"), &mut b.color, f);
            visit_encoder_mut(&format!("{bn}.depth"), &mut b.depth, f);
            f(&format!("{bn}.head.conv1.w"), &mut b.head.conv1.w);
            f(&format!("{bn}.head.conv1.b"), &mut b.head.conv1.b);
            f(&format!("{bn}.head.bn.gamma"), &mut b.head.bn.gamma);
            f(&format!("{bn}.head.bn.beta"), &mut b.head.bn.beta);
            f(&format!("{bn}.head.conv2.w"), &mut b.head.conv2.w);
            f(&format!("{bn}.head.conv2.b"), &mut b.head.conv2.b);
        }
        visit_encoder_mut("goal", &mut self.goal, f);
    }

    pub fn for_each_param(&self, f: &mut dyn FnMut(&str, &Param)) {
        // mirror of the mutable traversal
        for (bi, b) in self.branches.iter().enumerate() {
            let bn = BRANCH_NAMES[bi];
            for (i, c) in b.color.convs.iter().enumerate() {
                f(&format!("{bn}.color.conv{}.w", i + 1), &c.w);
                f(&format!("{bn}.color.conv{}.b", i + 1), &c.b);
            }
            for (i, c) in b.depth.convs.iter().enumerate() {
                f(&format!("{bn}.depth.conv{}.w", i + 1), &c.w);
                f(&format!("{bn}.depth.conv{}.b", i + 1), &c.b);
            }
            f(&format!("{bn}.head.conv1.w"), &b.head.conv1.w);
            f(&format!("{bn}.head.conv1.b"), &b.head.conv1.b);
            f(&format!("{bn}.head.bn.gamma"), &b.head.bn.gamma);
            f(&format!("{bn}.head.bn.beta"), &b.head.bn.beta);
            f(&format!("{bn}.head.conv2.w"), &b.head.conv2.w);
            f(&format!("{bn}.head.conv2.b"), &b.head.conv2.b);
        }
        for (i, c) in self.goal.convs.iter().enumerate() {
            f(&format!("goal.conv{}.w", i + 1), &c.w);
            f(&format!("goal.conv{}.b", i + 1), &c.b);
        }
    }

    /// Visits the batch-norm running statistics (non-trainable buffers).
    pub fn for_each_buffer_mut(&mut self, f: &mut dyn FnMut(&str, &mut Vec<f64>)) {
        for (bi, b) in self.branches.iter_mut().enumerate() {
            let bn = BRANCH_NAMES[bi];
            f(&format!("{bn}.head.bn.running_mean"), &mut b.head.bn.running_mean);
            f(&format!("{bn}.head.bn.running_var"), &mut b.head.bn.running_var);
        }
    }

    /// Sums of all parameter element counts (diagnostics).
    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_, p| n += p.len());
        n
    }
}

fn visit_encoder_mut(prefix: &str, enc: &mut Encoder, f: &mut dyn FnMut(&str, &mut Param)) {
    for (i, c) in enc.convs.iter_mut().enumerate() {
        f(&format!("{prefix}.conv{}.w", i + 1), &mut c.w);
        f(&format!("{prefix}.conv{}.b", i + 1), &mut c.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let a = NetParams::init(ArchConfig::default(), 5);
        let b = NetParams::init(ArchConfig::default(), 5);
        assert_eq!(a, b);
        let c = NetParams::init(ArchConfig::default(), 6);
        assert_ne!(a, c);
    }

    #[test]
    fn head_outputs_one_channel_per_branch() {
        let p = NetParams::init(ArchConfig::default(), 0);
        for b in &p.branches {
            assert_eq!(b.head.conv2.out_c, 1);
        }
    }

    #[test]
    fn param_names_are_unique_and_match_traversals() {
        let mut p = NetParams::init(ArchConfig::toy(), 1);
        let mut names_ref = Vec::new();
        p.for_each_param(&mut |n, _| names_ref.push(n.to_string()));
        let mut names_mut = Vec::new();
        p.for_each_param_mut(&mut |n, _| names_mut.push(n.to_string()));
        assert_eq!(names_ref, names_mut);
        let mut dedup = names_ref.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names_ref.len());
        // 3 branches x (2 encoders x 3 convs x 2 + head 6) + goal 6
        assert_eq!(names_ref.len(), 3 * (12 + 6) + 6);
    }
}
