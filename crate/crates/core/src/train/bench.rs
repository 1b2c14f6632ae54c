// SPDX-License-Identifier: Apache-2.0

//! Single-pass inference latency.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::ImageTensor;
use crate::model::{self, backbone::check_input_dims, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyReport {
    pub height: usize,
    pub width: usize,
    pub branch_widths: Vec<usize>,
    /// Stochastic passes per frame; always 1 here.
    pub mc_samples: usize,
    /// Recorded timings in milliseconds, warm-up excluded.
    pub timings_ms: Vec<f64>,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub frames_per_second: f64,
}

impl LatencyReport {
    pub fn summary_line(&self) -> String {
        format!(
            "{}x{} widths={:?} T={} median={:.3} ms p95={:.3} ms fps={:.2} (n={})",
            self.height,
            self.width,
            self.branch_widths,
            self.mc_samples,
            self.median_ms,
            self.p95_ms,
            self.frames_per_second,
            self.timings_ms.len()
        )
    }
}

pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Times `trials` deterministic forward passes on a fixed mid-grey gradient
/// image; the first is a warm-up and is dropped.
pub fn benchmark_inference(
    params: &ModelParams<f32>,
    dims: (usize, usize),
    trials: usize,
) -> Result<LatencyReport> {
    if trials < 3 {
        return Err(Error::Argument(format!("need at least 3 trials, got {trials}")));
    }
    let (h, w) = dims;
    check_input_dims(h, w)?;
    let hwc: Vec<f32> = (0..h * w * 3)
        .map(|i| 0.25 + 0.5 * ((i / 3) % w) as f32 / w as f32)
        .collect();
    let image = ImageTensor::from_hwc(h, w, &hwc)?;
    let mut timings = Vec::with_capacity(trials - 1);
    for t in 0..trials {
        let start = Instant::now();
        let logits = model::forward(params, &image, false, 0)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(logits);
        if t > 0 {
            timings.push(ms);
        }
    }
    let mut sorted = timings.clone();
    sorted.sort_by(f64::total_cmp);
    let median_ms = median(&sorted);
    Ok(LatencyReport {
        height: h,
        width: w,
        branch_widths: params.config.branch_widths.clone(),
        mc_samples: 1,
        timings_ms: timings,
        median_ms,
        p95_ms: percentile(&sorted, 95.0),
        frames_per_second: 1e3 / median_ms,
    })
}
