// SPDX-License-Identifier: Apache-2.0

//! The few-shot training loop and its artifacts.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Episode;
use crate::error::{Error, Result};
use crate::frame::{ImageTensor, Mask};
use crate::metrics::{confusion, dice};
use crate::model::checkpoint::{load_archive, save_archive};
use crate::model::{self, BnMode, ModelParams, Network};
use crate::seed::{derive_seed, rng_for};
use crate::tensor::Tensor;
use crate::train::loss::{bce_loss_grad, bce_loss_tensor};
use crate::train::optim::Adam;
use crate::train::TrainConfig;

/// Training stops once the support dice reaches this.
pub const EARLY_STOP_DICE: f64 = 0.99;

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// A labelled support item.
pub type Sample = (ImageTensor, Mask);

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub train: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Mean loss of the last completed epoch; `None` before any training.
    pub loss: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    train: TrainConfig,
    epoch: usize,
    loss: Option<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            train: self.train.clone(),
            epoch: self.epoch,
            loss: self.loss,
        };
        let meta = serde_json::to_value(meta).map_err(|e| Error::Format(e.to_string()))?;
        save_archive(path, &self.params, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = load_archive(path)?;
        let meta: CheckpointMeta = serde_json::from_value(meta)
            .map_err(|e| Error::Format(format!("{}: bad checkpoint metadata: {e}", path.display())))?;
        Ok(Checkpoint {
            params,
            train: meta.train,
            epoch: meta.epoch,
            loss: meta.loss,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub dice: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,loss,dice,seconds";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.epochs {
            let _ = writeln!(out, "{},{:.6},{:.4},{:.3}", r.epoch, r.loss, r.dice, r.seconds);
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Mean per-image dice of thresholded single-pass predictions.
pub fn support_dice(params: &ModelParams<f32>, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for (image, mask) in samples {
        let logits = model::forward(params, image, false, 0)?;
        let pred = logits.grid().map(|z| u8::from(z >= 0.0));
        total += dice(&confusion(&pred, mask)?);
    }
    Ok(total / samples.len().max(1) as f64)
}

fn stack_batch(samples: &[Sample], order: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let images: Vec<Tensor<f32>> = order.iter().map(|&i| samples[i].0.tensor().clone()).collect();
    let targets = order
        .iter()
        .map(|&i| {
            let m = &samples[i].1;
            Tensor::from_vec([1, 1, m.height(), m.width()], m.data().iter().map(|&v| v as f32).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Tensor::stack(&images)?, Tensor::stack(&targets)?))
}

/// Adam on the mean pixelwise cross-entropy over shuffled support batches,
/// with batch-statistics normalization and dropout active. Each epoch ends
/// with an evaluation-mode dice over the whole support set.
pub fn train(config: &TrainConfig, episode: &Episode<Sample>) -> Result<(Checkpoint, TrainLog)> {
    config.validate()?;
    let support = &episode.support;
    if support.is_empty() {
        return Err(Error::Argument("episode has no support items".into()));
    }
    if support.len() != config.k_shot {
        return Err(Error::Argument(format!(
            "episode has {} support items, k_shot is {}",
            support.len(),
            config.k_shot
        )));
    }
    for (image, mask) in support {
        if image.dims() != mask.dims() {
            return Err(Error::Shape(format!(
                "support image is {:?}, its mask is {:?}",
                image.dims(),
                mask.dims()
            )));
        }
    }

    let network = Network::new(&config.effective_model())?;
    let mut params: ModelParams<f32> = network.init();
    let mut adam = Adam::new(&params.weights, config.learning_rate);
    let mut log = TrainLog::default();
    let mut last_loss = None;
    let mut order: Vec<usize> = (0..support.len()).collect();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng_for(derive_seed(config.seed, SHUFFLE_STREAM), epoch as u64));
        let mut loss_sum = 0.0;
        let mut pixels = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = stack_batch(support, batch)?;
            let dropout_seed = derive_seed(
                derive_seed(config.seed, DROPOUT_STREAM),
                ((epoch as u64) << 32) | b as u64,
            );
            let (logits, tape) = network.forward(&params, &x, BnMode::Batch, Some(dropout_seed))?;
            let loss = bce_loss_tensor(&logits, &y) as f64;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("loss became {loss} on batch {b}"),
                });
            }
            loss_sum += loss * y.len() as f64;
            pixels += y.len();
            let grads = network.backward(&params, &tape, &bce_loss_grad(&logits, &y))?;
            adam.step(&mut params.weights, &grads)?;
            network.update_running_stats(&mut params.buffers, &tape)?;
        }
        if !params.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: "parameters became non-finite".into(),
            });
        }
        let loss = loss_sum / pixels as f64;
        let dice = support_dice(&params, support)?;
        last_loss = Some(loss);
        log.epochs.push(EpochRecord {
            epoch,
            loss,
            dice,
            seconds: started.elapsed().as_secs_f64(),
        });
        if dice >= EARLY_STOP_DICE {
            break;
        }
    }

    Ok((
        Checkpoint {
            params,
            train: config.clone(),
            epoch: log.epochs.len(),
            loss: last_loss,
        },
        log,
    ))
}
