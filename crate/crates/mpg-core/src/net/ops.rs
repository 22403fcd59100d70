//! Forward and backward implementations of the network's operators:
//! strided 3x3 convolution, 1x1 convolution, ReLU, spatial batch norm,
//! image rotation about the grid center and bilinear upsampling.

use super::params::{BatchNorm, ConvLayer, RotMode};
use super::tensor::Image;

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

/// 3x3 convolution, stride 2, zero padding 1: output is ceil(h/2) x ceil(w/2).
pub fn conv3x3s2(layer: &ConvLayer, input: &Image) -> Image {
    debug_assert_eq!(layer.k, 3);
    debug_assert_eq!(layer.in_c, input.c);
    let oh = input.h.div_ceil(2);
    let ow = input.w.div_ceil(2);
    let mut out = Image::zeros(layer.out_c, oh, ow);
    for oc in 0..layer.out_c {
        let bias = layer.b.value[oc];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias;
                for ic in 0..input.c {
                    let wbase = ((oc * layer.in_c + ic) * 3) * 3;
                    for ky in 0..3 {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy as usize >= input.h {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix as usize >= input.w {
                                continue;
                            }
                            acc += layer.w.value[wbase + ky * 3 + kx]
                                * input.at(ic, iy as usize, ix as usize);
                        }
                    }
                }
                *out.at_mut(oc, oy, ox) = acc;
            }
        }
    }
    out
}

/// Backward of [`conv3x3s2`]: accumulates weight/bias gradients and returns
/// the input gradient.
pub fn conv3x3s2_backward(
    layer: &ConvLayer,
    input: &Image,
    g_out: &Image,
    g_w: &mut [f64],
    g_b: &mut [f64],
) -> Image {
    let mut g_in = Image::zeros(input.c, input.h, input.w);
    for oc in 0..layer.out_c {
        for oy in 0..g_out.h {
            for ox in 0..g_out.w {
                let g = g_out.at(oc, oy, ox);
                if g == 0.0 {
                    continue;
                }
                g_b[oc] += g;
                for ic in 0..input.c {
                    let wbase = ((oc * layer.in_c + ic) * 3) * 3;
                    for ky in 0..3 {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy as usize >= input.h {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix as usize >= input.w {
                                continue;
                            }
                            let x = input.at(ic, iy as usize, ix as usize);
                            g_w[wbase + ky * 3 + kx] += g * x;
                            *g_in.at_mut(ic, iy as usize, ix as usize) +=
                                g * layer.w.value[wbase + ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
    g_in
}

/// Pointwise 1x1 convolution.
pub fn conv1x1(layer: &ConvLayer, input: &Image) -> Image {
    debug_assert_eq!(layer.k, 1);
    debug_assert_eq!(layer.in_c, input.c);
    let hw = input.h * input.w;
    let mut out = Image::zeros(layer.out_c, input.h, input.w);
    for oc in 0..layer.out_c {
        let obase = oc * hw;
        let bias = layer.b.value[oc];
        out.data[obase..obase + hw].iter_mut().for_each(|v| *v = bias);
        for ic in 0..input.c {
            let w = layer.w.value[oc * layer.in_c + ic];
            let ibase = ic * hw;
            for p in 0..hw {
                out.data[obase + p] += w * input.data[ibase + p];
            }
        }
    }
    out
}

/// Backward of [`conv1x1`].
pub fn conv1x1_backward(
    layer: &ConvLayer,
    input: &Image,
    g_out: &Image,
    g_w: &mut [f64],
    g_b: &mut [f64],
) -> Image {
    let hw = input.h * input.w;
    let mut g_in = Image::zeros(input.c, input.h, input.w);
    for oc in 0..layer.out_c {
        let obase = oc * hw;
        for p in 0..hw {
            g_b[oc] += g_out.data[obase + p];
        }
        for ic in 0..input.c {
            let ibase = ic * hw;
            let w = layer.w.value[oc * layer.in_c + ic];
            let mut gw = 0.0;
            for p in 0..hw {
                let g = g_out.data[obase + p];
                gw += g * input.data[ibase + p];
                g_in.data[ibase + p] += g * w;
            }
            g_w[oc * layer.in_c + ic] += gw;
        }
    }
    g_in
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

pub fn relu(input: &Image) -> Image {
    let mut out = input.clone();
    out.data.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0;
        }
    });
    out
}

/// Backward of ReLU given the pre-activation input.
pub fn relu_backward(pre: &Image, g_out: &Image) -> Image {
    let mut g_in = g_out.clone();
    for (g, &x) in g_in.data.iter_mut().zip(pre.data.iter()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    g_in
}

// ---------------------------------------------------------------------------
// batch normalization (spatial, over a batch of images)
// ---------------------------------------------------------------------------

/// Per-channel statistics cached by the training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Vec<f64>,
    pub invstd: Vec<f64>,
    /// Element count per channel: batch * h * w.
    pub n: usize,
}

/// Proposed running-statistics update (applied only when a train step
/// commits).
#[derive(Debug, Clone)]
pub struct BnRunningUpdate {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Training-mode forward over a batch: normalizes with batch statistics and
/// proposes the running-average update. Outputs replace the inputs slot for
/// slot; normalized activations are also returned for the backward pass.
pub fn bn_forward_train(
    bn: &BatchNorm,
    eps: f64,
    momentum: f64,
    batch: &[Image],
) -> (Vec<Image>, Vec<Image>, BnCache, BnRunningUpdate) {
    let c = bn.gamma.len();
    let hw = batch[0].h * batch[0].w;
    let n = batch.len() * hw;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for img in batch {
        for ch in 0..c {
            for &x in img.channel(ch) {
                mean[ch] += x;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for img in batch {
        for ch in 0..c {
            for &x in img.channel(ch) {
                let d = x - mean[ch];
                var[ch] += d * d;
            }
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    let invstd: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();

    let mut outs = Vec::with_capacity(batch.len());
    let mut xhats = Vec::with_capacity(batch.len());
    for img in batch {
        let mut out = Image::zeros(img.c, img.h, img.w);
        let mut xh = Image::zeros(img.c, img.h, img.w);
        for ch in 0..c {
            let g = bn.gamma.value[ch];
            let b = bn.beta.value[ch];
            for p in 0..hw {
                let idx = ch * hw + p;
                let xhat = (img.data[idx] - mean[ch]) * invstd[ch];
                xh.data[idx] = xhat;
                out.data[idx] = g * xhat + b;
            }
        }
        outs.push(out);
        xhats.push(xh);
    }

    let run_mean: Vec<f64> = bn
        .running_mean
        .iter()
        .zip(mean.iter())
        .map(|(r, m)| (1.0 - momentum) * r + momentum * m)
        .collect();
    let run_var: Vec<f64> = bn
        .running_var
        .iter()
        .zip(var.iter())
        .map(|(r, v)| (1.0 - momentum) * r + momentum * v)
        .collect();

    (
        outs,
        xhats,
        BnCache { mean, invstd, n },
        BnRunningUpdate {
            mean: run_mean,
            var: run_var,
        },
    )
}

/// Inference-mode forward using running statistics (single image).
pub fn bn_forward_eval(bn: &BatchNorm, eps: f64, input: &Image) -> Image {
    let c = bn.gamma.len();
    let hw = input.h * input.w;
    let mut out = Image::zeros(input.c, input.h, input.w);
    for ch in 0..c {
        let invstd = 1.0 / (bn.running_var[ch] + eps).sqrt();
        let g = bn.gamma.value[ch];
        let b = bn.beta.value[ch];
        let m = bn.running_mean[ch];
        for p in 0..hw {
            let idx = ch * hw + p;
            out.data[idx] = g * (input.data[idx] - m) * invstd + b;
        }
    }
    out
}

/// Batch-statistics backward: given upstream gradients for every batch
/// element, accumulates gamma/beta gradients and returns input gradients.
pub fn bn_backward(
    bn: &BatchNorm,
    cache: &BnCache,
    xhats: &[Image],
    g_outs: &[Image],
    g_gamma: &mut [f64],
    g_beta: &mut [f64],
) -> Vec<Image> {
    let c = bn.gamma.len();
    let hw = xhats[0].h * xhats[0].w;
    let n = cache.n as f64;
    // per-channel sums of dxhat and dxhat * xhat
    let mut s1 = vec![0.0; c];
    let mut s2 = vec![0.0; c];
    for (xh, go) in xhats.iter().zip(g_outs.iter()) {
        for ch in 0..c {
            let g = bn.gamma.value[ch];
            for p in 0..hw {
                let idx = ch * hw + p;
                let dy = go.data[idx];
                if dy != 0.0 {
                    g_beta[ch] += dy;
                    g_gamma[ch] += dy * xh.data[idx];
                    let dxhat = dy * g;
                    s1[ch] += dxhat;
                    s2[ch] += dxhat * xh.data[idx];
                }
            }
        }
    }
    let mut g_ins = Vec::with_capacity(xhats.len());
    for (xh, go) in xhats.iter().zip(g_outs.iter()) {
        let mut gi = Image::zeros(xh.c, xh.h, xh.w);
        for ch in 0..c {
            let g = bn.gamma.value[ch];
            let inv = cache.invstd[ch];
            let m1 = s1[ch] / n;
            let m2 = s2[ch] / n;
            for p in 0..hw {
                let idx = ch * hw + p;
                let dxhat = go.data[idx] * g;
                gi.data[idx] = inv * (dxhat - m1 - xh.data[idx] * m2);
            }
        }
        g_ins.push(gi);
    }
    g_ins
}

// ---------------------------------------------------------------------------
// rotation about the grid center
// ---------------------------------------------------------------------------

/// Rotates all channels by `angle` radians about the image center.
/// Out-of-bounds samples read 0.
pub fn rotate(input: &Image, angle: f64, mode: RotMode) -> Image {
    let mut out = Image::zeros(input.c, input.h, input.w);
    let (s, c) = (-angle).sin_cos(); // sample source via inverse rotation
    let cy = (input.h as f64 - 1.0) / 2.0;
    let cx = (input.w as f64 - 1.0) / 2.0;
    for ch in 0..input.c {
        for y in 0..input.h {
            let dy = y as f64 - cy;
            for x in 0..input.w {
                let dx = x as f64 - cx;
                let sx = cx + c * dx - s * dy;
                let sy = cy + s * dx + c * dy;
                *out.at_mut(ch, y, x) = sample(input, ch, sy, sx, mode);
            }
        }
    }
    out
}

fn sample(img: &Image, ch: usize, sy: f64, sx: f64, mode: RotMode) -> f64 {
    match mode {
        RotMode::Nearest => {
            let iy = sy.round();
            let ix = sx.round();
            if iy < 0.0 || ix < 0.0 || iy >= img.h as f64 || ix >= img.w as f64 {
                0.0
            } else {
                img.at(ch, iy as usize, ix as usize)
            }
        }
        RotMode::Bilinear => {
            let y0 = sy.floor();
            let x0 = sx.floor();
            let fy = sy - y0;
            let fx = sx - x0;
            let mut acc = 0.0;
            for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
                for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                    let w = wy * wx;
                    if w == 0.0 {
                        continue;
                    }
                    let yy = y0 + dy;
                    let xx = x0 + dx;
                    if yy < 0.0 || xx < 0.0 || yy >= img.h as f64 || xx >= img.w as f64 {
                        continue;
                    }
                    acc += w * img.at(ch, yy as usize, xx as usize);
                }
            }
            acc
        }
    }
}

/// Backward of [`rotate`]: scatters upstream gradients through the same
/// sampling weights.
pub fn rotate_backward(g_out: &Image, angle: f64, mode: RotMode) -> Image {
    let mut g_in = Image::zeros(g_out.c, g_out.h, g_out.w);
    let (s, c) = (-angle).sin_cos();
    let cy = (g_out.h as f64 - 1.0) / 2.0;
    let cx = (g_out.w as f64 - 1.0) / 2.0;
    for ch in 0..g_out.c {
        for y in 0..g_out.h {
            let dy = y as f64 - cy;
            for x in 0..g_out.w {
                let g = g_out.at(ch, y, x);
                if g == 0.0 {
                    continue;
                }
                let dx = x as f64 - cx;
                let sx = cx + c * dx - s * dy;
                let sy = cy + s * dx + c * dy;
                match mode {
                    RotMode::Nearest => {
                        let iy = sy.round();
                        let ix = sx.round();
                        if iy >= 0.0 && ix >= 0.0 && iy < g_out.h as f64 && ix < g_out.w as f64 {
                            *g_in.at_mut(ch, iy as usize, ix as usize) += g;
                        }
                    }
                    RotMode::Bilinear => {
                        let y0 = sy.floor();
                        let x0 = sx.floor();
                        let fy = sy - y0;
                        let fx = sx - x0;
                        for (dy2, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
                            for (dx2, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                                let w = wy * wx;
                                if w == 0.0 {
                                    continue;
                                }
                                let yy = y0 + dy2;
                                let xx = x0 + dx2;
                                if yy >= 0.0
                                    && xx >= 0.0
                                    && yy < g_out.h as f64
                                    && xx < g_out.w as f64
                                {
                                    *g_in.at_mut(ch, yy as usize, xx as usize) += w * g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    g_in
}

// ---------------------------------------------------------------------------
// bilinear upsampling
// ---------------------------------------------------------------------------

/// Bilinear upsampling by an integer factor; border samples clamp.
pub fn upsample(input: &Image, factor: usize) -> Image {
    let oh = input.h * factor;
    let ow = input.w * factor;
    let mut out = Image::zeros(input.c, oh, ow);
    let f = factor as f64;
    for ch in 0..input.c {
        for y in 0..oh {
            let sy = ((y as f64 + 0.5) / f - 0.5).clamp(0.0, input.h as f64 - 1.0);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(input.h - 1);
            let fy = sy - y0 as f64;
            for x in 0..ow {
                let sx = ((x as f64 + 0.5) / f - 0.5).clamp(0.0, input.w as f64 - 1.0);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(input.w - 1);
                let fx = sx - x0 as f64;
                let v = (1.0 - fy) * ((1.0 - fx) * input.at(ch, y0, x0) + fx * input.at(ch, y0, x1))
                    + fy * ((1.0 - fx) * input.at(ch, y1, x0) + fx * input.at(ch, y1, x1));
                *out.at_mut(ch, y, x) = v;
            }
        }
    }
    out
}

/// Backward of [`upsample`].
pub fn upsample_backward(g_out: &Image, factor: usize) -> Image {
    let ih = g_out.h / factor;
    let iw = g_out.w / factor;
    let mut g_in = Image::zeros(g_out.c, ih, iw);
    let f = factor as f64;
    for ch in 0..g_out.c {
        for y in 0..g_out.h {
            let sy = ((y as f64 + 0.5) / f - 0.5).clamp(0.0, ih as f64 - 1.0);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(ih - 1);
            let fy = sy - y0 as f64;
            for x in 0..g_out.w {
                let g = g_out.at(ch, y, x);
                if g == 0.0 {
                    continue;
                }
                let sx = ((x as f64 + 0.5) / f - 0.5).clamp(0.0, iw as f64 - 1.0);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(iw - 1);
                let fx = sx - x0 as f64;
                *g_in.at_mut(ch, y0, x0) += (1.0 - fy) * (1.0 - fx) * g;
                *g_in.at_mut(ch, y0, x1) += (1.0 - fy) * fx * g;
                *g_in.at_mut(ch, y1, x0) += fy * (1.0 - fx) * g;
                *g_in.at_mut(ch, y1, x1) += fy * fx * g;
            }
        }
    }
    g_in
}
