// SPDX-License-Identifier: Apache-2.0

//! Gated fusion of two adjacent pyramid levels.
//!
//! The coarse (`lower`, stride 2s) map is convolved to the fine width,
//! batch-normalized and optionally squashed through a sigmoid to form a
//! gate. The gate is brought to the fine grid and multiplied elementwise
//! with the convolved fine (`upper`, stride s) map:
//!
//! ```text
//! gate   = g(bn(conv_lower(lower)))
//! output = upsample(gate) * conv_upper(upper)
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::layers::{BatchNorm, BnMode, Conv2d};
use crate::model::params::ParamStore;
use crate::ops::{self, BatchNormCache, UpsampleMode};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GatedFusion {
    pub lower: Conv2d,
    pub norm: BatchNorm,
    pub upper: Conv2d,
    pub gate_nonlinearity: bool,
    pub upsample: UpsampleMode,
}

#[derive(Clone, Debug)]
pub struct FusionCache<T> {
    lower_in: Tensor<T>,
    upper_in: Tensor<T>,
    pub norm: BatchNormCache<T>,
    /// Gate at the coarse resolution, after the optional sigmoid.
    pub gate: Tensor<T>,
    pub gate_up: Tensor<T>,
    pub upper_conv: Tensor<T>,
}

impl GatedFusion {
    pub fn new(
        prefix: &str,
        lower_width: usize,
        width: usize,
        gate_nonlinearity: bool,
        upsample: UpsampleMode,
    ) -> Self {
        GatedFusion {
            lower: Conv2d::new(format!("{prefix}.lower"), lower_width, width, 3),
            norm: BatchNorm::new(format!("{prefix}.bn"), width),
            upper: Conv2d::new(format!("{prefix}.upper"), width, width, 3),
            gate_nonlinearity,
            upsample,
        }
    }

    pub fn width(&self) -> usize {
        self.upper.out_channels
    }

    pub fn init<T: Real, R: Rng>(
        &self,
        weights: &mut ParamStore<T>,
        buffers: &mut ParamStore<T>,
        rng: &mut R,
    ) {
        self.lower.init(weights, rng);
        self.norm.init(weights, buffers);
        self.upper.init(weights, rng);
    }

    pub fn forward<T: Real>(
        &self,
        weights: &ParamStore<T>,
        buffers: &ParamStore<T>,
        lower: &Tensor<T>,
        upper: &Tensor<T>,
        mode: BnMode,
    ) -> Result<(Tensor<T>, FusionCache<T>)> {
        let (uh, uw) = (upper.height(), upper.width());
        if lower.height() * 2 != uh || lower.width() * 2 != uw || lower.batch() != upper.batch() {
            return Err(Error::Shape(format!(
                "gated fusion needs the lower map at half the upper resolution: lower {}x{}, upper {}x{}",
                lower.height(),
                lower.width(),
                uh,
                uw
            )));
        }
        let lower_conv = self.lower.forward(weights, lower)?;
        let (normed, norm) = self.norm.forward(weights, buffers, &lower_conv, mode)?;
        let gate = if self.gate_nonlinearity {
            ops::sigmoid(&normed)
        } else {
            normed
        };
        let gate_up = ops::resize(&gate, uh, uw, self.upsample);
        let upper_conv = self.upper.forward(weights, upper)?;
        let out = gate_up.zip_map(&upper_conv, |g, v| g * v);
        Ok((
            out,
            FusionCache {
                lower_in: lower.clone(),
                upper_in: upper.clone(),
                norm,
                gate,
                gate_up,
                upper_conv,
            },
        ))
    }

    /// Returns the gradients of the `(lower, upper)` inputs.
    pub fn backward<T: Real>(
        &self,
        weights: &ParamStore<T>,
        cache: &FusionCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let g_gate_up = grad_out.zip_map(&cache.upper_conv, |g, v| g * v);
        let g_upper_conv = grad_out.zip_map(&cache.gate_up, |g, v| g * v);
        let g_upper = self.upper.backward(weights, &cache.upper_in, &g_upper_conv, grads)?;

        let g_gate = ops::resize_backward(
            &g_gate_up,
            cache.gate.height(),
            cache.gate.width(),
            self.upsample,
        );
        let g_normed = if self.gate_nonlinearity {
            ops::sigmoid_backward(&cache.gate, &g_gate)
        } else {
            g_gate
        };
        let g_lower_conv = self.norm.backward(weights, &cache.norm, &g_normed, grads)?;
        let g_lower = self.lower.backward(weights, &cache.lower_in, &g_lower_conv, grads)?;
        Ok((g_lower, g_upper))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fusion(gate: bool) -> (GatedFusion, ParamStore<f64>, ParamStore<f64>) {
        let f = GatedFusion::new("fuse", 16, 8, gate, UpsampleMode::Bilinear);
        let (mut w, mut b) = (ParamStore::new(), ParamStore::new());
        f.init(&mut w, &mut b, &mut crate::seed::rng_for(5, 0));
        (f, w, b)
    }

    fn ramp(shape: [usize; 4]) -> Tensor<f64> {
        let n = shape.iter().product::<usize>();
        Tensor::from_vec(shape, (0..n).map(|i| ((i * 37 % 101) as f64) / 50.0 - 1.0).collect())
            .unwrap()
    }

    #[test]
    fn output_takes_upper_shape() {
        let (f, w, b) = fusion(true);
        let (out, _) = f
            .forward(&w, &b, &ramp([1, 16, 8, 8]), &ramp([1, 8, 16, 16]), BnMode::Running)
            .unwrap();
        assert_eq!(out.shape(), [1, 8, 16, 16]);
    }

    #[test]
    fn zero_upper_branch_zeroes_output() {
        let (f, mut w, b) = fusion(true);
        w.get_mut(&f.upper.weight_key()).unwrap().data_mut().fill(0.0);
        w.get_mut(&f.upper.bias_key()).unwrap().data_mut().fill(0.0);
        let (out, _) = f
            .forward(&w, &b, &ramp([1, 16, 8, 8]), &ramp([1, 8, 16, 16]), BnMode::Batch)
            .unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_ungated_normalized_lower_zeroes_output() {
        let (f, mut w, b) = fusion(false);
        // gamma = 0, beta = 0 forces the normalized lower branch to zero.
        w.get_mut(&f.norm.gamma_key()).unwrap().data_mut().fill(0.0);
        let (out, cache) = f
            .forward(&w, &b, &ramp([1, 16, 8, 8]), &ramp([1, 8, 16, 16]), BnMode::Batch)
            .unwrap();
        assert!(cache.gate.data().iter().all(|&v| v == 0.0));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_gate_is_bounded() {
        let (f, w, b) = fusion(true);
        let (_, cache) = f
            .forward(&w, &b, &ramp([2, 16, 4, 4]), &ramp([2, 8, 8, 8]), BnMode::Batch)
            .unwrap();
        assert!(cache.gate.data().iter().all(|&g| g > 0.0 && g < 1.0));
    }

    #[test]
    fn spatial_mismatch_is_a_shape_error() {
        let (f, w, b) = fusion(true);
        let r = f.forward(&w, &b, &ramp([1, 16, 8, 8]), &ramp([1, 8, 8, 8]), BnMode::Running);
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
