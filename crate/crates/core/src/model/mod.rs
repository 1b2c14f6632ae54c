// SPDX-License-Identifier: Apache-2.0

//! The segmentation network and its parameters.

pub mod attention;
pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod fusion;
pub mod layers;
pub mod network;
pub mod params;

pub use attention::SaBlock;
pub use backbone::{FeaturePyramid, PyramidLevel};
pub use config::ModelConfig;
pub use fusion::GatedFusion;
pub use layers::BnMode;
pub use network::{Decoder, Network};
pub use params::{ModelParams, ParamStore};

use crate::error::{Error, Result};
use crate::frame::ImageTensor;
use crate::tensor::{Grid, Real, Tensor};

/// Pre-sigmoid vehicle scores, one per input pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits(pub Grid<f32>);

impl Logits {
    pub fn grid(&self) -> &Grid<f32> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub(crate) fn from_tensor<T: Real>(t: &Tensor<T>, n: usize) -> Result<Self> {
        let data = t.plane(n, 0).iter().map(|v| v.to_f64_lossy() as f32).collect();
        Ok(Logits(Grid::from_vec(t.height(), t.width(), data)?))
    }
}

/// Draws parameters from `config.seed`. Equal configs give bit-identical
/// parameters.
pub fn init_model(config: &ModelConfig) -> Result<ModelParams<f32>> {
    Ok(Network::new(config)?.init())
}

pub fn backbone_forward<T: Real>(
    params: &ModelParams<T>,
    image: &ImageTensor,
) -> Result<FeaturePyramid<T>> {
    let network = Network::new(&params.config)?;
    let (pyramid, _) = network
        .backbone
        .forward(&params.weights, &image.tensor().cast())?;
    Ok(pyramid)
}

/// Single-image inference. Batch normalization uses running statistics;
/// with `dropout_enabled` the dropout masks are drawn from `sample_seed`,
/// otherwise the result depends on `(params, image)` only.
pub fn forward(
    params: &ModelParams<f32>,
    image: &ImageTensor,
    dropout_enabled: bool,
    sample_seed: u64,
) -> Result<Logits> {
    let network = Network::new(&params.config)?;
    let seed = dropout_enabled.then_some(sample_seed);
    let (logits, _) = network.forward(params, image.tensor(), BnMode::Running, seed)?;
    if !logits.is_finite() {
        return Err(Error::Argument("forward pass produced non-finite logits".into()));
    }
    Logits::from_tensor(&logits, 0)
}
