// SPDX-License-Identifier: Apache-2.0

//! Few-shot vehicle segmentation for oblique UAV video.
//!
//! The crate holds the whole pipeline:
//!
//! * [`model`]: a reduced-width multi-resolution backbone, squeeze-and-attention
//!   blocks, gated top-down fusion and a one-convolution decoder, with
//!   hand-written backward passes.
//! * [`uncertainty`]: Monte Carlo dropout sampling, decayed temporal
//!   aggregation over a frame window and binary predictive entropy.
//! * [`metrics`]: confusion counts, Dice, Jaccard and the doubled-overlap
//!   score, grouped into per-set reports.
//! * [`data`]: UAVid-style sequence loading, palette decoding, a synthetic
//!   oblique-scene generator and the few-shot episode sampler.
//! * [`train`]: loss, Adam training, checkpoints, evaluation and latency
//!   benchmarking.

pub mod config;
pub mod data;
pub mod error;
pub mod frame;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod seed;
pub mod tensor;
pub mod train;
pub mod uncertainty;

pub use error::{Error, Result};
pub use frame::{ImageTensor, Mask};
pub use model::{init_model, Logits, ModelConfig, ModelParams};
pub use tensor::{Grid, Real, Tensor};
