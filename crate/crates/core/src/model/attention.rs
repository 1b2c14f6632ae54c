// SPDX-License-Identifier: Apache-2.0

//! Squeeze-and-attention block.
//!
//! The attention branch pools the input by 2, applies a linear transform
//! (3x3 convolution to `sa_channels`, then 1x1 back to the input width),
//! rectifies, and bilinearly upsamples back to the input grid:
//!
//! ```text
//! attention = upsample(relu(F(avgpool2(x))))
//! output    = x + attention
//! ```

use rand::Rng;

use crate::error::Result;
use crate::model::layers::Conv2d;
use crate::model::params::ParamStore;
use crate::ops::{self, UpsampleMode};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SaBlock {
    pub squeeze: Conv2d,
    pub expand: Conv2d,
}

/// Intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct SaCache<T> {
    pooled: Tensor<T>,
    squeezed: Tensor<T>,
    rectified: Tensor<T>,
    /// The upsampled attention branch that was added to the input.
    pub attention: Tensor<T>,
}

impl SaBlock {
    pub fn new(prefix: &str, width: usize, sa_channels: usize) -> Self {
        SaBlock {
            squeeze: Conv2d::new(format!("{prefix}.squeeze"), width, sa_channels, 3),
            expand: Conv2d::new(format!("{prefix}.expand"), sa_channels, width, 1),
        }
    }

    pub fn init<T: Real, R: Rng>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        self.squeeze.init(store, rng);
        self.expand.init(store, rng);
    }

    /// Fails with a shape error unless both spatial dims are even.
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, SaCache<T>)> {
        let pooled = ops::avg_pool2(x)?;
        let squeezed = self.squeeze.forward(store, &pooled)?;
        let expanded = self.expand.forward(store, &squeezed)?;
        let rectified = ops::relu(&expanded);
        let attention = ops::resize(&rectified, x.height(), x.width(), UpsampleMode::Bilinear);
        let mut out = x.clone();
        out.add_assign(&attention);
        Ok((
            out,
            SaCache {
                pooled,
                squeezed,
                rectified,
                attention,
            },
        ))
    }

    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        cache: &SaCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>> {
        let [_, _, ph, pw] = cache.pooled.shape();
        let g_rect = ops::resize_backward(grad_out, ph, pw, UpsampleMode::Bilinear);
        let g_expanded = ops::relu_backward(&cache.rectified, &g_rect);
        let g_squeezed = self.expand.backward(store, &cache.squeezed, &g_expanded, grads)?;
        let g_pooled = self.squeeze.backward(store, &cache.pooled, &g_squeezed, grads)?;
        let mut gx = ops::avg_pool2_backward(&g_pooled);
        gx.add_assign(grad_out);
        Ok(gx)
    }
}
