// SPDX-License-Identifier: Apache-2.0

//! End-to-end evaluation: Monte Carlo mean per frame, trailing temporal
//! window per sequence, threshold, scores and entropy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ImageTensor, Mask};
use crate::metrics::{evaluate_sets, EntropySummary, FrameEvaluation, SetReport};
use crate::model::ModelParams;
use crate::seed::derive_seed;
use crate::uncertainty::{
    entropy_map, mc_sample, mean_prob, summarize_uncertainty, temporal_aggregate, ProbMap,
    TemporalWindow, UncertaintyReport, DEFAULT_DECAY, DEFAULT_WINDOW,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySettings {
    pub mc_samples: usize,
    pub window: usize,
    pub decay: f64,
    /// Overrides the checkpoint's dropout rate when set.
    pub dropout_rate: Option<f64>,
    pub seed: u64,
}

impl Default for UncertaintySettings {
    fn default() -> Self {
        UncertaintySettings {
            mc_samples: 8,
            window: DEFAULT_WINDOW,
            decay: DEFAULT_DECAY,
            dropout_rate: None,
            seed: 0,
        }
    }
}

/// One frame of a sequence; `mask` is the ground truth if labelled.
#[derive(Clone, Debug)]
pub struct EvalFrame {
    pub index: u64,
    pub image: ImageTensor,
    pub mask: Option<Mask>,
}

/// A named group of frames in temporal order.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub name: String,
    pub frames: Vec<EvalFrame>,
}

#[derive(Clone, Debug)]
pub struct FrameOutcome {
    pub set: String,
    pub index: u64,
    pub prob: ProbMap,
    pub pred: Mask,
    pub uncertainty: UncertaintyReport,
}

/// Temporally aggregated predictive map for every frame of every set, in
/// input order. Ground truth is not consulted.
pub fn predict_sets(
    params: &ModelParams<f32>,
    sets: &[EvalSet],
    settings: &UncertaintySettings,
) -> Result<Vec<Vec<ProbMap>>> {
    let mut params = params.clone();
    if let Some(rate) = settings.dropout_rate {
        params.config.dropout_rate = rate;
        params.config.validate()?;
    }
    let mut out = Vec::with_capacity(sets.len());
    for (s, set) in sets.iter().enumerate() {
        let set_seed = derive_seed(settings.seed, s as u64);
        let means = set
            .frames
            .par_iter()
            .map(|f| {
                mc_sample(&params, &f.image, settings.mc_samples, derive_seed(set_seed, f.index))
                    .map(|stack| mean_prob(&stack))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut window = TemporalWindow::new(settings.window, settings.decay)?;
        let mut aggregated = Vec::with_capacity(means.len());
        for (frame, mean) in set.frames.iter().zip(means) {
            window.push(frame.index, mean)?;
            aggregated.push(temporal_aggregate(&window)?);
        }
        out.push(aggregated);
    }
    Ok(out)
}

/// Scores every labelled frame and groups the results per set. Any
/// unlabelled frame is rejected before work starts.
pub fn evaluate(
    params: &ModelParams<f32>,
    sets: &[EvalSet],
    settings: &UncertaintySettings,
) -> Result<(SetReport, Vec<FrameOutcome>)> {
    for set in sets {
        if let Some(f) = set.frames.iter().find(|f| f.mask.is_none()) {
            return Err(Error::Argument(format!(
                "frame {} of set `{}` has no label; evaluation needs ground truth",
                f.index, set.name
            )));
        }
    }
    let probs = predict_sets(params, sets, settings)?;
    let mut groups = Vec::with_capacity(sets.len());
    let mut outcomes = Vec::new();
    for (set, maps) in sets.iter().zip(probs) {
        let mut frames = Vec::with_capacity(maps.len());
        for (frame, prob) in set.frames.iter().zip(maps) {
            let gt = frame.mask.clone().expect("checked above");
            let pred = prob.threshold();
            let uncertainty = summarize_uncertainty(&entropy_map(&prob), &pred)?;
            frames.push(FrameEvaluation {
                pred: pred.clone(),
                gt,
                entropy: EntropySummary {
                    image: uncertainty.mean_entropy_image,
                    vehicle_region: uncertainty.mean_entropy_vehicle_region,
                },
            });
            outcomes.push(FrameOutcome {
                set: set.name.clone(),
                index: frame.index,
                prob,
                pred,
                uncertainty,
            });
        }
        groups.push((set.name.clone(), frames));
    }
    Ok((evaluate_sets(&groups)?, outcomes))
}
