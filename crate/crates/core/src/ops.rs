// SPDX-License-Identifier: Apache-2.0

//! Forward and backward kernels for the layers the network is built from.
//!
//! Every forward kernel has a matching `*_backward` that maps the gradient
//! of the output back onto the inputs (and parameters, where there are
//! any). Convolutions are stride 1 with zero "same" padding.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Interpolation used when a coarse map is brought to a finer grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMode {
    #[default]
    Bilinear,
    Nearest,
}

/// `dst[y][x] += scale * src[y + dy][x + dx]` wherever the source is in range.
#[inline]
fn accumulate_shifted<T: Real>(
    dst: &mut [T],
    src: &[T],
    h: usize,
    w: usize,
    dy: isize,
    dx: isize,
    scale: T,
) {
    let (hi, wi) = (h as isize, w as isize);
    let y_lo = (-dy).max(0);
    let y_hi = (hi - dy).min(hi);
    let x_lo = (-dx).max(0);
    let x_hi = (wi - dx).min(wi);
    if y_lo >= y_hi || x_lo >= x_hi {
        return;
    }
    for y in y_lo..y_hi {
        let sy = (y + dy) as usize;
        let d = &mut dst[y as usize * w + x_lo as usize..y as usize * w + x_hi as usize];
        let s = &src[sy * w + (x_lo + dx) as usize..sy * w + (x_hi + dx) as usize];
        for (a, &b) in d.iter_mut().zip(s) {
            *a += scale * b;
        }
    }
}

/// `sum over y, x of a[y][x] * b[y + dy][x + dx]`, in-range terms only.
#[inline]
fn dot_shifted<T: Real>(a: &[T], b: &[T], h: usize, w: usize, dy: isize, dx: isize) -> T {
    let (hi, wi) = (h as isize, w as isize);
    let y_lo = (-dy).max(0);
    let y_hi = (hi - dy).min(hi);
    let x_lo = (-dx).max(0);
    let x_hi = (wi - dx).min(wi);
    let mut acc = T::zero();
    if y_lo >= y_hi || x_lo >= x_hi {
        return acc;
    }
    for y in y_lo..y_hi {
        let sy = (y + dy) as usize;
        let ra = &a[y as usize * w + x_lo as usize..y as usize * w + x_hi as usize];
        let rb = &b[sy * w + (x_lo + dx) as usize..sy * w + (x_hi + dx) as usize];
        for (&p, &q) in ra.iter().zip(rb) {
            acc += p * q;
        }
    }
    acc
}

fn conv_dims<T: Real>(x: &Tensor<T>, weight: &Tensor<T>) -> (usize, usize, usize) {
    let [_, ic, _, _] = x.shape();
    let [oc, wic, k, k2] = weight.shape();
    assert_eq!(wic, ic, "conv weight expects {wic} input channels, got {ic}");
    assert!(k == k2 && k % 2 == 1, "conv kernel must be square and odd");
    (oc, ic, k)
}

/// Stride-1 convolution with zero padding `k / 2`. Weight is `[out, in, k, k]`.
pub fn conv2d<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &[T]) -> Tensor<T> {
    let (oc, ic, k) = conv_dims(x, weight);
    let [n, _, h, w] = x.shape();
    let pad = (k / 2) as isize;
    let mut out = Tensor::zeros([n, oc, h, w]);
    out.data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (b, o) = (idx / oc, idx % oc);
            dst.fill(bias[o]);
            for c in 0..ic {
                let src = x.plane(b, c);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight.at(o, c, ky, kx);
                        accumulate_shifted(dst, src, h, w, ky as isize - pad, kx as isize - pad, wv);
                    }
                }
            }
        });
    out
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Vec<T>) {
    let (oc, ic, k) = conv_dims(x, weight);
    let [n, _, h, w] = x.shape();
    assert_eq!(grad_out.shape(), [n, oc, h, w], "conv grad shape mismatch");
    let pad = (k / 2) as isize;

    let mut grad_x = Tensor::zeros(x.shape());
    grad_x
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(idx, dst)| {
            let (b, c) = (idx / ic, idx % ic);
            for o in 0..oc {
                let g = grad_out.plane(b, o);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight.at(o, c, ky, kx);
                        accumulate_shifted(dst, g, h, w, pad - ky as isize, pad - kx as isize, wv);
                    }
                }
            }
        });

    let mut grad_w = Tensor::zeros(weight.shape());
    grad_w
        .data_mut()
        .par_chunks_mut(ic * k * k)
        .enumerate()
        .for_each(|(o, dst)| {
            for c in 0..ic {
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = T::zero();
                        for b in 0..n {
                            acc += dot_shifted(
                                grad_out.plane(b, o),
                                x.plane(b, c),
                                h,
                                w,
                                ky as isize - pad,
                                kx as isize - pad,
                            );
                        }
                        dst[(c * k + ky) * k + kx] = acc;
                    }
                }
            }
        });

    let grad_b = (0..oc)
        .map(|o| (0..n).map(|b| grad_out.plane(b, o).iter().copied().sum::<T>()).sum())
        .collect();
    (grad_x, grad_w, grad_b)
}

fn require_even<T: Real>(x: &Tensor<T>, what: &str) -> Result<()> {
    if !x.height().is_multiple_of(2) || !x.width().is_multiple_of(2) || x.height() == 0 || x.width() == 0 {
        return Err(Error::Shape(format!(
            "{what} needs even, nonzero spatial dims, got {}x{}",
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

/// 2x2 average pooling with stride 2.
pub fn avg_pool2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    require_even(x, "2x2 average pooling")?;
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64_lossy(0.25);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(idx, dst)| {
            let src = x.plane(idx / c, idx % c);
            for y in 0..oh {
                let r0 = &src[2 * y * w..2 * y * w + w];
                let r1 = &src[(2 * y + 1) * w..(2 * y + 1) * w + w];
                for xx in 0..ow {
                    dst[y * ow + xx] =
                        quarter * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
                }
            }
        });
    Ok(out)
}

pub fn avg_pool2_backward<T: Real>(grad_out: &Tensor<T>) -> Tensor<T> {
    let [n, c, oh, ow] = grad_out.shape();
    let (h, w) = (oh * 2, ow * 2);
    let quarter = T::from_f64_lossy(0.25);
    let mut out = Tensor::zeros([n, c, h, w]);
    out.data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(idx, dst)| {
            let g = grad_out.plane(idx / c, idx % c);
            for y in 0..h {
                for xx in 0..w {
                    dst[y * w + xx] = quarter * g[(y / 2) * ow + xx / 2];
                }
            }
        });
    out
}

/// Source taps for one output coordinate: `(lo, hi, frac)` with weight
/// `1 - frac` on `lo` and `frac` on `hi`.
fn axis_taps<T: Real>(input: usize, output: usize, mode: UpsampleMode) -> Vec<(usize, usize, T)> {
    let ratio = input as f64 / output as f64;
    (0..output)
        .map(|o| match mode {
            UpsampleMode::Nearest => {
                let i = ((o as f64 * ratio).floor() as usize).min(input - 1);
                (i, i, T::zero())
            }
            UpsampleMode::Bilinear => {
                // Half-pixel centres, edges clamped.
                let src = ((o as f64 + 0.5) * ratio - 0.5).max(0.0);
                let lo = (src.floor() as usize).min(input - 1);
                let hi = (lo + 1).min(input - 1);
                let frac = if hi == lo { 0.0 } else { src - lo as f64 };
                (lo, hi, T::from_f64_lossy(frac))
            }
        })
        .collect()
}

/// Resamples every plane to `out_h x out_w`.
pub fn resize<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize, mode: UpsampleMode) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let ty = axis_taps::<T>(h, out_h, mode);
    let tx = axis_taps::<T>(w, out_w, mode);
    let one = T::one();
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    out.data_mut()
        .par_chunks_mut(out_h * out_w)
        .enumerate()
        .for_each(|(idx, dst)| {
            let src = x.plane(idx / c, idx % c);
            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                let r0 = &src[y0 * w..y0 * w + w];
                let r1 = &src[y1 * w..y1 * w + w];
                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let top = (one - lx) * r0[x0] + lx * r0[x1];
                    let bottom = (one - lx) * r1[x0] + lx * r1[x1];
                    dst[oy * out_w + ox] = (one - ly) * top + ly * bottom;
                }
            }
        });
    out
}

/// Adjoint of [`resize`]: scatters output gradients back onto the `in_h x in_w` grid.
pub fn resize_backward<T: Real>(
    grad_out: &Tensor<T>,
    in_h: usize,
    in_w: usize,
    mode: UpsampleMode,
) -> Tensor<T> {
    let [n, c, out_h, out_w] = grad_out.shape();
    let ty = axis_taps::<T>(in_h, out_h, mode);
    let tx = axis_taps::<T>(in_w, out_w, mode);
    let one = T::one();
    let mut out = Tensor::zeros([n, c, in_h, in_w]);
    out.data_mut()
        .par_chunks_mut(in_h * in_w)
        .enumerate()
        .for_each(|(idx, dst)| {
            let g = grad_out.plane(idx / c, idx % c);
            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let v = g[oy * out_w + ox];
                    dst[y0 * in_w + x0] += (one - ly) * (one - lx) * v;
                    dst[y0 * in_w + x1] += (one - ly) * lx * v;
                    dst[y1 * in_w + x0] += ly * (one - lx) * v;
                    dst[y1 * in_w + x1] += ly * lx * v;
                }
            }
        });
    out
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Gradient of ReLU given its output.
pub fn relu_backward<T: Real>(out: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    grad_out.zip_map(out, |g, y| if y > T::zero() { g } else { T::zero() })
}

#[inline]
pub fn sigmoid_scalar<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Gradient of the logistic sigmoid given its output.
pub fn sigmoid_backward<T: Real>(out: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    grad_out.zip_map(out, |g, y| g * y * (T::one() - y))
}

/// Per-channel statistics captured by a batch-statistics normalization pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    /// Unbiased variance, used for running-statistics updates.
    pub batch_var_unbiased: Vec<T>,
    /// True when the pass used batch statistics (training mode).
    pub batch_stats: bool,
}

/// Batch normalization using the statistics of `x` itself.
pub fn batch_norm_train<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
) -> (Tensor<T>, BatchNormCache<T>) {
    let [n, c, _, _] = x.shape();
    let m = n * x.plane_len();
    let mf = T::from_usize(m).unwrap();
    let eps = T::from_f64_lossy(BATCH_NORM_EPS);
    let mut means = Vec::with_capacity(c);
    let mut vars = Vec::with_capacity(c);
    let mut inv_std = Vec::with_capacity(c);
    for ch in 0..c {
        let mean = (0..n).map(|b| x.plane(b, ch).iter().copied().sum::<T>()).sum::<T>() / mf;
        let ss: T = (0..n)
            .map(|b| x.plane(b, ch).iter().map(|&v| (v - mean) * (v - mean)).sum::<T>())
            .sum();
        let var = ss / mf;
        means.push(mean);
        vars.push(if m > 1 { ss / (mf - T::one()) } else { var });
        inv_std.push(T::one() / (var + eps).sqrt());
    }
    let normalized = normalize(x, &means, &inv_std);
    let out = affine(&normalized, gamma, beta);
    (
        out,
        BatchNormCache {
            normalized,
            inv_std,
            batch_mean: means,
            batch_var_unbiased: vars,
            batch_stats: true,
        },
    )
}

/// Batch normalization using stored running statistics.
pub fn batch_norm_eval<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
) -> (Tensor<T>, BatchNormCache<T>) {
    let eps = T::from_f64_lossy(BATCH_NORM_EPS);
    let inv_std: Vec<T> = running_var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let normalized = normalize(x, running_mean, &inv_std);
    let out = affine(&normalized, gamma, beta);
    (
        out,
        BatchNormCache {
            normalized,
            inv_std,
            batch_mean: running_mean.to_vec(),
            batch_var_unbiased: running_var.to_vec(),
            batch_stats: false,
        },
    )
}

fn normalize<T: Real>(x: &Tensor<T>, mean: &[T], inv_std: &[T]) -> Tensor<T> {
    let [n, c, _, _] = x.shape();
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            for v in out.plane_mut(b, ch) {
                *v = (*v - mean[ch]) * inv_std[ch];
            }
        }
    }
    out
}

fn affine<T: Real>(x: &Tensor<T>, gamma: &[T], beta: &[T]) -> Tensor<T> {
    let [n, c, _, _] = x.shape();
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            for v in out.plane_mut(b, ch) {
                *v = gamma[ch] * *v + beta[ch];
            }
        }
    }
    out
}

/// Gradients of batch normalization: `(input, gamma, beta)`.
pub fn batch_norm_backward<T: Real>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let [n, c, _, _] = grad_out.shape();
    let m = T::from_usize(n * grad_out.plane_len()).unwrap();
    let mut grad_x = Tensor::zeros(grad_out.shape());
    let mut grad_gamma = vec![T::zero(); c];
    let mut grad_beta = vec![T::zero(); c];
    for ch in 0..c {
        for b in 0..n {
            let g = grad_out.plane(b, ch);
            let xh = cache.normalized.plane(b, ch);
            grad_beta[ch] += g.iter().copied().sum::<T>();
            grad_gamma[ch] += g.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
        }
        let scale = gamma[ch] * cache.inv_std[ch];
        for b in 0..n {
            let g = grad_out.plane(b, ch);
            let xh = cache.normalized.plane(b, ch);
            let dst = grad_x.plane_mut(b, ch);
            if cache.batch_stats {
                for i in 0..g.len() {
                    dst[i] = scale / m * (m * g[i] - grad_beta[ch] - xh[i] * grad_gamma[ch]);
                }
            } else {
                for i in 0..g.len() {
                    dst[i] = scale * g[i];
                }
            }
        }
    }
    (grad_x, grad_gamma, grad_beta)
}

/// Draws one keep/drop factor per (sample, channel): `0` with probability
/// `rate`, otherwise `1 / (1 - rate)`.
pub fn channel_dropout_factors<T: Real, R: Rng>(
    batch: usize,
    channels: usize,
    rate: f64,
    rng: &mut R,
) -> Vec<T> {
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    (0..batch * channels)
        .map(|_| {
            if rate > 0.0 && rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

/// Multiplies each (sample, channel) plane by its factor. Also serves as
/// its own backward pass.
pub fn scale_channels<T: Real>(x: &Tensor<T>, factors: &[T]) -> Tensor<T> {
    let [n, c, _, _] = x.shape();
    assert_eq!(factors.len(), n * c, "one factor per sample and channel");
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            let f = factors[b * c + ch];
            for v in out.plane_mut(b, ch) {
                *v *= f;
            }
        }
    }
    out
}
