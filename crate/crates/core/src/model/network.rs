// SPDX-License-Identifier: Apache-2.0

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::attention::{SaBlock, SaCache};
use crate::model::backbone::{Backbone, BackboneCache, FeaturePyramid};
use crate::model::config::ModelConfig;
use crate::model::fusion::{FusionCache, GatedFusion};
use crate::model::layers::{BnMode, Conv2d};
use crate::model::params::{ModelParams, ParamStore};
use crate::ops::{self, UpsampleMode};
use crate::seed;
use crate::tensor::{Real, Tensor};

/// One 1x1 convolution to a single channel followed by bilinear
/// interpolation to the requested size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoder {
    pub head: Conv2d,
}

impl Decoder {
    pub fn new(width: usize) -> Self {
        Decoder {
            head: Conv2d::new("head", width, 1, 1),
        }
    }

    pub fn decode<T: Real>(
        &self,
        store: &ParamStore<T>,
        fused: &Tensor<T>,
        target: (usize, usize),
    ) -> Result<Tensor<T>> {
        if target.0 == 0 || target.1 == 0 {
            return Err(Error::Shape(format!(
                "decoder target dims must be positive, got {}x{}",
                target.0, target.1
            )));
        }
        let z = self.head.forward(store, fused)?;
        Ok(ops::resize(&z, target.0, target.1, UpsampleMode::Bilinear))
    }

    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        fused: &Tensor<T>,
        grad_logits: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>> {
        let g_z = ops::resize_backward(
            grad_logits,
            fused.height(),
            fused.width(),
            UpsampleMode::Bilinear,
        );
        self.head.backward(store, fused, &g_z, grads)
    }
}

/// The full segmentation network: backbone, one squeeze-and-attention
/// block per level, top-down gated fusion with spatial dropout after each
/// fusion, and the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub attention: Vec<SaBlock>,
    /// `fusions[i]` merges the running coarse map into level `i`.
    pub fusions: Vec<GatedFusion>,
    pub decoder: Decoder,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    backbone: BackboneCache<T>,
    attention: Vec<SaCache<T>>,
    fusions: Vec<Option<FusionCache<T>>>,
    dropout: Vec<Option<Vec<T>>>,
    head_in: Tensor<T>,
    pub pyramid: FeaturePyramid<T>,
}

impl Network {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let widths = &config.branch_widths;
        let levels = widths.len();
        let attention = (0..levels)
            .map(|i| SaBlock::new(&format!("sa.{i}"), widths[i], config.sa_channels))
            .collect();
        let fusions = (0..levels - 1)
            .map(|i| {
                GatedFusion::new(
                    &format!("fuse.{i}"),
                    widths[i + 1],
                    widths[i],
                    config.gate_nonlinearity,
                    config.upsample_mode,
                )
            })
            .collect();
        Ok(Network {
            config: config.clone(),
            backbone: Backbone::new(config),
            attention,
            fusions,
            decoder: Decoder::new(widths[0]),
        })
    }

    pub fn init<T: Real>(&self) -> ModelParams<T> {
        let mut rng = seed::rng_for(self.config.seed, 0);
        let mut weights = ParamStore::new();
        let mut buffers = ParamStore::new();
        self.backbone.init(&mut weights, &mut rng);
        for block in &self.attention {
            block.init(&mut weights, &mut rng);
        }
        for fusion in &self.fusions {
            fusion.init(&mut weights, &mut buffers, &mut rng);
        }
        self.decoder.head.init(&mut weights, &mut rng);
        ModelParams {
            config: self.config.clone(),
            seed: self.config.seed,
            weights,
            buffers,
        }
    }

    /// Runs the network on a `[N, 3, H, W]` batch and returns `[N, 1, H, W]`
    /// logits. With `dropout_seed` set, each dropout layer zeroes whole
    /// channels with the configured rate using a stream derived from the seed.
    pub fn forward<T: Real>(
        &self,
        params: &ModelParams<T>,
        x: &Tensor<T>,
        bn: BnMode,
        dropout_seed: Option<u64>,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        let (pyramid, backbone) = self.backbone.forward(&params.weights, x)?;
        let levels = pyramid.levels.len();
        let mut attended = Vec::with_capacity(levels);
        let mut attention = Vec::with_capacity(levels);
        for (block, level) in self.attention.iter().zip(&pyramid.levels) {
            let (out, cache) = block.forward(&params.weights, &level.features)?;
            attended.push(out);
            attention.push(cache);
        }

        let mut fusions = vec![None; levels];
        let mut dropout = vec![None; levels];
        let mut current = attended[levels - 1].clone();
        for i in (0..levels - 1).rev() {
            let (fused, cache) = self.fusions[i].forward(
                &params.weights,
                &params.buffers,
                &current,
                &attended[i],
                bn,
            )?;
            fusions[i] = Some(cache);
            current = match dropout_seed {
                Some(s) if self.config.dropout_rate > 0.0 => {
                    let mut rng = seed::rng_for(s, i as u64);
                    let factors = dropout_factors(&fused, self.config.dropout_rate, &mut rng);
                    let dropped = ops::scale_channels(&fused, &factors);
                    dropout[i] = Some(factors);
                    dropped
                }
                _ => fused,
            };
        }

        let logits = self
            .decoder
            .decode(&params.weights, &current, (x.height(), x.width()))?;
        Ok((
            logits,
            Tape {
                backbone,
                attention,
                fusions,
                dropout,
                head_in: current,
                pyramid,
            },
        ))
    }

    /// Gradients of every trainable array given the gradient of the logits.
    pub fn backward<T: Real>(
        &self,
        params: &ModelParams<T>,
        tape: &Tape<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<ParamStore<T>> {
        let w = &params.weights;
        let mut grads = ParamStore::new();
        let levels = tape.attention.len();
        let mut g_current = self.decoder.backward(w, &tape.head_in, grad_logits, &mut grads)?;
        let mut g_attended: Vec<Option<Tensor<T>>> = vec![None; levels];
        // Fusions ran coarse to fine, so their gradients flow fine to coarse.
        for (i, slot) in g_attended.iter_mut().enumerate().take(levels - 1) {
            if let Some(factors) = &tape.dropout[i] {
                g_current = ops::scale_channels(&g_current, factors);
            }
            let cache = tape.fusions[i].as_ref().expect("fusion cache");
            let (g_lower, g_upper) = self.fusions[i].backward(w, cache, &g_current, &mut grads)?;
            *slot = Some(g_upper);
            g_current = g_lower;
        }
        g_attended[levels - 1] = Some(g_current);

        let mut g_levels = Vec::with_capacity(levels);
        for (i, g) in g_attended.into_iter().enumerate() {
            let g = g.expect("every level receives a gradient");
            g_levels.push(self.attention[i].backward(w, &tape.attention[i], &g, &mut grads)?);
        }
        self.backbone.backward(w, &tape.backbone, &g_levels, &mut grads)?;
        Ok(grads)
    }

    /// Folds the batch statistics recorded in `tape` into the running averages.
    pub fn update_running_stats<T: Real>(
        &self,
        buffers: &mut ParamStore<T>,
        tape: &Tape<T>,
    ) -> Result<()> {
        for (fusion, cache) in self.fusions.iter().zip(&tape.fusions) {
            if let Some(cache) = cache {
                fusion.norm.update_running(buffers, &cache.norm)?;
            }
        }
        Ok(())
    }
}

fn dropout_factors<T: Real, R: Rng>(x: &Tensor<T>, rate: f64, rng: &mut R) -> Vec<T> {
    ops::channel_dropout_factors(x.batch(), x.channels(), rate, rng)
}
