// SPDX-License-Identifier: Apache-2.0

//! Few-shot training, evaluation and latency measurement.

pub mod bench;
pub mod config;
pub mod evaluate;
pub mod harness;
pub mod loss;
pub mod optim;

pub use bench::{benchmark_inference, LatencyReport};
pub use config::TrainConfig;
pub use evaluate::{evaluate, EvalFrame, EvalSet, FrameOutcome, UncertaintySettings};
pub use harness::{train, Checkpoint, EpochRecord, Sample, TrainLog};
pub use loss::bce_loss;
pub use optim::Adam;
