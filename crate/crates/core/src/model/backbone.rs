// SPDX-License-Identifier: Apache-2.0

//! Reduced-width multi-resolution encoder in the HRNet style.
//!
//! A two-convolution stem brings the image to stride 4. Each further
//! branch is spawned from the previous one by pooling and a 3x3
//! convolution. A single exchange unit then lets every branch read from
//! every other: the output of level `i` is
//! `relu(conv3x3_i(b_i) + sum_j resample(conv1x1_ji(b_j)))`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::layers::Conv2d;
use crate::model::params::ParamStore;
use crate::ops::{self, UpsampleMode};
use crate::tensor::{Real, Tensor};

/// Input spatial dims must be multiples of this.
pub const INPUT_MULTIPLE: usize = 32;

/// One level of the encoder output.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidLevel<T> {
    pub stride: usize,
    pub features: Tensor<T>,
}

/// Multi-resolution features, finest level first.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid<T> {
    pub levels: Vec<PyramidLevel<T>>,
}

impl<T: Real> FeaturePyramid<T> {
    pub fn is_finite(&self) -> bool {
        self.levels.iter().all(|l| l.features.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Backbone {
    stem: [Conv2d; 2],
    branch0: Conv2d,
    transitions: Vec<Conv2d>,
    /// `exchange[target][source]`; 3x3 on the diagonal, 1x1 elsewhere.
    exchange: Vec<Vec<Conv2d>>,
    upsample: UpsampleMode,
}

#[derive(Clone, Debug)]
pub struct BackboneCache<T> {
    input: Tensor<T>,
    stem_out: [Tensor<T>; 2],
    stem_pooled: [Tensor<T>; 2],
    branches: Vec<Tensor<T>>,
    transition_in: Vec<Tensor<T>>,
    /// Pooled inputs of downsampling exchange paths, `[target][source]`.
    exchange_in: Vec<Vec<Option<Tensor<T>>>>,
    outputs: Vec<Tensor<T>>,
}

pub fn check_input_dims(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || !h.is_multiple_of(INPUT_MULTIPLE) || !w.is_multiple_of(INPUT_MULTIPLE) {
        return Err(Error::Shape(format!(
            "input dims {h}x{w} must be positive multiples of {INPUT_MULTIPLE}"
        )));
    }
    Ok(())
}

fn pool_times<T: Real>(x: &Tensor<T>, times: usize) -> Result<Tensor<T>> {
    let mut cur = x.clone();
    for _ in 0..times {
        cur = ops::avg_pool2(&cur)?;
    }
    Ok(cur)
}

fn pool_times_backward<T: Real>(g: &Tensor<T>, times: usize) -> Tensor<T> {
    let mut cur = g.clone();
    for _ in 0..times {
        cur = ops::avg_pool2_backward(&cur);
    }
    cur
}

impl Backbone {
    pub fn new(config: &ModelConfig) -> Self {
        let widths = &config.branch_widths;
        let w0 = widths[0];
        let transitions = (1..widths.len())
            .map(|i| Conv2d::new(format!("transition.{i}"), widths[i - 1], widths[i], 3))
            .collect();
        let exchange = (0..widths.len())
            .map(|i| {
                (0..widths.len())
                    .map(|j| {
                        let k = if i == j { 3 } else { 1 };
                        Conv2d::new(format!("exchange.{i}.{j}"), widths[j], widths[i], k)
                    })
                    .collect()
            })
            .collect();
        Backbone {
            stem: [
                Conv2d::new("stem.0", 3, w0, 3),
                Conv2d::new("stem.1", w0, w0, 3),
            ],
            branch0: Conv2d::new("branch.0", w0, w0, 3),
            transitions,
            exchange,
            upsample: config.upsample_mode,
        }
    }

    pub fn init<T: Real, R: Rng>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        for conv in self.stem.iter().chain([&self.branch0]).chain(&self.transitions) {
            conv.init(store, rng);
        }
        for conv in self.exchange.iter().flatten() {
            conv.init(store, rng);
        }
    }

    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<(FeaturePyramid<T>, BackboneCache<T>)> {
        check_input_dims(x.height(), x.width())?;
        let s0 = ops::relu(&self.stem[0].forward(store, x)?);
        let p0 = ops::avg_pool2(&s0)?;
        let s1 = ops::relu(&self.stem[1].forward(store, &p0)?);
        let p1 = ops::avg_pool2(&s1)?;

        let mut branches = vec![ops::relu(&self.branch0.forward(store, &p1)?)];
        let mut transition_in = Vec::new();
        for conv in &self.transitions {
            let q = ops::avg_pool2(branches.last().unwrap())?;
            branches.push(ops::relu(&conv.forward(store, &q)?));
            transition_in.push(q);
        }

        let levels = branches.len();
        let mut exchange_in = vec![vec![None; levels]; levels];
        let mut outputs = Vec::with_capacity(levels);
        for i in 0..levels {
            let (th, tw) = (branches[i].height(), branches[i].width());
            let mut acc = self.exchange[i][i].forward(store, &branches[i])?;
            for j in (0..levels).filter(|&j| j != i) {
                let contribution = if j > i {
                    let c = self.exchange[i][j].forward(store, &branches[j])?;
                    ops::resize(&c, th, tw, self.upsample)
                } else {
                    let pooled = pool_times(&branches[j], i - j)?;
                    let c = self.exchange[i][j].forward(store, &pooled)?;
                    exchange_in[i][j] = Some(pooled);
                    c
                };
                acc.add_assign(&contribution);
            }
            outputs.push(ops::relu(&acc));
        }

        let pyramid = FeaturePyramid {
            levels: outputs
                .iter()
                .enumerate()
                .map(|(i, f)| PyramidLevel {
                    stride: 4 << i,
                    features: f.clone(),
                })
                .collect(),
        };
        Ok((
            pyramid,
            BackboneCache {
                input: x.clone(),
                stem_out: [s0, s1],
                stem_pooled: [p0, p1],
                branches,
                transition_in,
                exchange_in,
                outputs,
            },
        ))
    }

    /// Back-propagates gradients on each pyramid level into the parameters.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: &BackboneCache<T>,
        grad_levels: &[Tensor<T>],
        grads: &mut ParamStore<T>,
    ) -> Result<()> {
        let levels = cache.branches.len();
        let mut g_branches: Vec<Tensor<T>> = cache
            .branches
            .iter()
            .map(|b| Tensor::zeros(b.shape()))
            .collect();
        for i in 0..levels {
            let g_acc = ops::relu_backward(&cache.outputs[i], &grad_levels[i]);
            let g = self.exchange[i][i].backward(store, &cache.branches[i], &g_acc, grads)?;
            g_branches[i].add_assign(&g);
            for j in (0..levels).filter(|&j| j != i) {
                if j > i {
                    let b = &cache.branches[j];
                    let g_c = ops::resize_backward(&g_acc, b.height(), b.width(), self.upsample);
                    let g = self.exchange[i][j].backward(store, b, &g_c, grads)?;
                    g_branches[j].add_assign(&g);
                } else {
                    let pooled = cache.exchange_in[i][j].as_ref().expect("cached pooled input");
                    let g_pooled = self.exchange[i][j].backward(store, pooled, &g_acc, grads)?;
                    g_branches[j].add_assign(&pool_times_backward(&g_pooled, i - j));
                }
            }
        }

        for i in (1..levels).rev() {
            let g_pre = ops::relu_backward(&cache.branches[i], &g_branches[i]);
            let g_q = self.transitions[i - 1].backward(store, &cache.transition_in[i - 1], &g_pre, grads)?;
            let g_prev = ops::avg_pool2_backward(&g_q);
            g_branches[i - 1].add_assign(&g_prev);
        }

        let g_pre = ops::relu_backward(&cache.branches[0], &g_branches[0]);
        let g_p1 = self.branch0.backward(store, &cache.stem_pooled[1], &g_pre, grads)?;
        let g_s1 = ops::relu_backward(&cache.stem_out[1], &ops::avg_pool2_backward(&g_p1));
        let g_p0 = self.stem[1].backward(store, &cache.stem_pooled[0], &g_s1, grads)?;
        let g_s0 = ops::relu_backward(&cache.stem_out[0], &ops::avg_pool2_backward(&g_p0));
        self.stem[0].backward(store, &cache.input, &g_s0, grads)?;
        Ok(())
    }
}
