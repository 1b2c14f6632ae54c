// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::tensor::{Real, Tensor};

/// Named arrays keyed by layer path, e.g. `fuse.0.bn.gamma`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    arrays: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            arrays: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.arrays.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.arrays
            .get_mut(name)
            .ok_or_else(|| Error::Format(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }

    /// Adds `delta` into the array called `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, delta: Tensor<T>) {
        match self.arrays.get_mut(name) {
            Some(existing) => existing.add_assign(&delta),
            None => {
                self.arrays.insert(name.to_string(), delta);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.arrays.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.arrays.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.arrays.keys()
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.arrays.values().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays.values().all(Tensor::is_finite)
    }

    pub fn zeros_like(&self) -> Self {
        ParamStore {
            arrays: self
                .arrays
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            arrays: self.arrays.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Trainable weights plus normalization running statistics for one
/// network. `seed` is the seed the weights were drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    pub seed: u64,
    pub weights: ParamStore<T>,
    pub buffers: ParamStore<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            seed: self.seed,
            weights: self.weights.cast(),
            buffers: self.buffers.cast(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.buffers.is_finite()
    }
}
