// SPDX-License-Identifier: Apache-2.0

//! Parameterized layers. A layer only knows its name and shape; the
//! arrays live in a [`ParamStore`] under `<name>.<array>`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::params::ParamStore;
use crate::ops::{self, BatchNormCache};
use crate::tensor::{Real, Tensor};

/// Which statistics batch normalization uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Statistics of the current batch (training).
    Batch,
    /// Stored running statistics (evaluation and Monte Carlo sampling).
    Running,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conv2d {
    name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new(name: impl Into<String>, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Conv2d {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn weight_key(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_key(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    /// Fan-in scaled uniform initialization.
    pub fn init<T: Real, R: Rng>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        let fan_in = (self.in_channels * self.kernel * self.kernel) as f64;
        let w_bound = (6.0 / fan_in).sqrt();
        let b_bound = 1.0 / fan_in.sqrt();
        let shape = self.weight_shape();
        let weights = (0..shape.iter().product::<usize>())
            .map(|_| T::from_f64_lossy(rng.random_range(-w_bound..w_bound)))
            .collect();
        let bias = (0..self.out_channels)
            .map(|_| T::from_f64_lossy(rng.random_range(-b_bound..b_bound)))
            .collect();
        store.insert(self.weight_key(), Tensor::from_vec(shape, weights).unwrap());
        store.insert(
            self.bias_key(),
            Tensor::from_vec([1, self.out_channels, 1, 1], bias).unwrap(),
        );
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "layer `{}` expects {} channels, got {}",
                self.name,
                self.in_channels,
                x.channels()
            )));
        }
        let weight = store.get(&self.weight_key())?;
        let bias = store.get(&self.bias_key())?;
        Ok(ops::conv2d(x, weight, bias.data()))
    }

    /// Accumulates parameter gradients into `grads`; returns the input gradient.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>> {
        let weight = store.get(&self.weight_key())?;
        let (gx, gw, gb) = ops::conv2d_backward(x, weight, grad_out);
        grads.accumulate(&self.weight_key(), gw);
        grads.accumulate(
            &self.bias_key(),
            Tensor::from_vec([1, self.out_channels, 1, 1], gb)?,
        );
        Ok(gx)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchNorm {
    name: String,
    pub channels: usize,
}

pub const RUNNING_MOMENTUM: f64 = 0.1;

impl BatchNorm {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        BatchNorm {
            name: name.into(),
            channels,
        }
    }

    pub fn gamma_key(&self) -> String {
        format!("{}.gamma", self.name)
    }

    pub fn beta_key(&self) -> String {
        format!("{}.beta", self.name)
    }

    pub fn mean_key(&self) -> String {
        format!("{}.running_mean", self.name)
    }

    pub fn var_key(&self) -> String {
        format!("{}.running_var", self.name)
    }

    pub fn init<T: Real>(&self, weights: &mut ParamStore<T>, buffers: &mut ParamStore<T>) {
        let shape = [1, self.channels, 1, 1];
        weights.insert(self.gamma_key(), Tensor::full(shape, T::one()));
        weights.insert(self.beta_key(), Tensor::zeros(shape));
        buffers.insert(self.mean_key(), Tensor::zeros(shape));
        buffers.insert(self.var_key(), Tensor::full(shape, T::one()));
    }

    pub fn forward<T: Real>(
        &self,
        weights: &ParamStore<T>,
        buffers: &ParamStore<T>,
        x: &Tensor<T>,
        mode: BnMode,
    ) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let gamma = weights.get(&self.gamma_key())?.data();
        let beta = weights.get(&self.beta_key())?.data();
        Ok(match mode {
            BnMode::Batch => ops::batch_norm_train(x, gamma, beta),
            BnMode::Running => ops::batch_norm_eval(
                x,
                gamma,
                beta,
                buffers.get(&self.mean_key())?.data(),
                buffers.get(&self.var_key())?.data(),
            ),
        })
    }

    pub fn backward<T: Real>(
        &self,
        weights: &ParamStore<T>,
        cache: &BatchNormCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Result<Tensor<T>> {
        let gamma = weights.get(&self.gamma_key())?.data();
        let (gx, gg, gb) = ops::batch_norm_backward(cache, gamma, grad_out);
        let shape = [1, self.channels, 1, 1];
        grads.accumulate(&self.gamma_key(), Tensor::from_vec(shape, gg)?);
        grads.accumulate(&self.beta_key(), Tensor::from_vec(shape, gb)?);
        Ok(gx)
    }

    /// Exponential moving average of the batch statistics in `cache`.
    pub fn update_running<T: Real>(
        &self,
        buffers: &mut ParamStore<T>,
        cache: &BatchNormCache<T>,
    ) -> Result<()> {
        if !cache.batch_stats {
            return Ok(());
        }
        let m = T::from_f64_lossy(RUNNING_MOMENTUM);
        let keep = T::one() - m;
        for (r, &b) in buffers
            .get_mut(&self.mean_key())?
            .data_mut()
            .iter_mut()
            .zip(&cache.batch_mean)
        {
            *r = keep * *r + m * b;
        }
        for (r, &b) in buffers
            .get_mut(&self.var_key())?
            .data_mut()
            .iter_mut()
            .zip(&cache.batch_var_unbiased)
        {
            *r = keep * *r + m * b;
        }
        Ok(())
    }
}
