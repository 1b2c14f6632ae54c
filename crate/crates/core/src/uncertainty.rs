// SPDX-License-Identifier: Apache-2.0

//! Monte Carlo dropout sampling, temporal aggregation of per-frame
//! predictive maps and binary predictive entropy.

use std::collections::VecDeque;
use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{ImageTensor, Mask};
use crate::model::{self, ModelParams};
use crate::ops::sigmoid_scalar;
use crate::seed::derive_seed;
use crate::tensor::Grid;

/// Probabilities at or above this are predicted as vehicle.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Per-pixel vehicle probability.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap(Grid<f64>);

impl ProbMap {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if let Some(bad) = grid.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Argument(format!(
                "probabilities must be finite and in [0, 1], found {bad}"
            )));
        }
        Ok(ProbMap(grid))
    }

    pub fn filled(height: usize, width: usize, p: f64) -> Result<Self> {
        Self::new(Grid::filled(height, width, p))
    }

    pub fn from_logits(logits: &model::Logits) -> Self {
        ProbMap(logits.grid().map(|z| sigmoid_scalar(z as f64)))
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    /// Binarizes at [`DECISION_THRESHOLD`]; exact ties count as vehicle.
    pub fn threshold(&self) -> Mask {
        self.0.map(|p| u8::from(p >= DECISION_THRESHOLD))
    }
}

/// `T` stochastic forward passes of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStack {
    samples: Vec<ProbMap>,
    sample_seeds: Vec<u64>,
}

impl SampleStack {
    pub fn new(samples: Vec<ProbMap>, sample_seeds: Vec<u64>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Argument("a sample stack needs at least one sample".into()))?;
        if samples.len() != sample_seeds.len() {
            return Err(Error::Argument("one seed per sample is required".into()));
        }
        if samples.iter().any(|s| s.dims() != first.dims()) {
            return Err(Error::Shape("stack samples differ in shape".into()));
        }
        Ok(SampleStack {
            samples,
            sample_seeds,
        })
    }

    pub fn samples(&self) -> &[ProbMap] {
        &self.samples
    }

    pub fn sample_seeds(&self) -> &[u64] {
        &self.sample_seeds
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Runs `t` dropout-enabled forward passes. Sample `i` uses the seed
/// `derive_seed(base_seed, i)`, so the passes can run in parallel without
/// changing the result.
pub fn mc_sample(
    params: &ModelParams<f32>,
    image: &ImageTensor,
    t: usize,
    base_seed: u64,
) -> Result<SampleStack> {
    if t < 1 {
        return Err(Error::Argument("Monte Carlo sampling needs T >= 1".into()));
    }
    let seeds: Vec<u64> = (0..t as u64).map(|i| derive_seed(base_seed, i)).collect();
    let samples = seeds
        .par_iter()
        .map(|&s| model::forward(params, image, true, s).map(|l| ProbMap::from_logits(&l)))
        .collect::<Result<Vec<_>>>()?;
    SampleStack::new(samples, seeds)
}

/// Per-pixel arithmetic mean over the stack.
pub fn mean_prob(stack: &SampleStack) -> ProbMap {
    let (h, w) = stack.samples[0].dims();
    let mut acc = vec![0.0; h * w];
    for s in &stack.samples {
        for (a, &p) in acc.iter_mut().zip(s.grid().data()) {
            *a += p;
        }
    }
    let t = stack.samples.len() as f64;
    // Rounding can push a mean of ones a hair above 1.
    let data = acc.into_iter().map(|v| (v / t).clamp(0.0, 1.0)).collect();
    ProbMap(Grid::from_vec(h, w, data).expect("dims preserved"))
}

/// Sliding window of per-frame probability maps, newest last.
#[derive(Clone, Debug)]
pub struct TemporalWindow {
    entries: VecDeque<(u64, ProbMap)>,
    decay: f64,
    max_len: usize,
}

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_DECAY: f64 = 0.7;

impl TemporalWindow {
    pub fn new(max_len: usize, decay: f64) -> Result<Self> {
        if max_len < 1 {
            return Err(Error::Argument("window length must be at least 1".into()));
        }
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::Argument(format!("decay must lie in (0, 1], got {decay}")));
        }
        Ok(TemporalWindow {
            entries: VecDeque::with_capacity(max_len),
            decay,
            max_len,
        })
    }

    /// Builds a window holding exactly `entries` (oldest first).
    pub fn from_entries(entries: Vec<(u64, ProbMap)>, decay: f64) -> Result<Self> {
        let mut window = Self::new(entries.len().max(1), decay)?;
        for (index, prob) in entries {
            window.push(index, prob)?;
        }
        Ok(window)
    }

    /// Appends the newest frame, evicting the oldest when full.
    pub fn push(&mut self, frame_index: u64, prob: ProbMap) -> Result<()> {
        if let Some((last, newest)) = self.entries.back() {
            if frame_index <= *last {
                return Err(Error::Argument(format!(
                    "frame index {frame_index} does not follow {last}"
                )));
            }
            if newest.dims() != prob.dims() {
                return Err(Error::Shape(format!(
                    "window maps are {:?}, new map is {:?}",
                    newest.dims(),
                    prob.dims()
                )));
            }
        }
        if self.entries.len() == self.max_len {
            self.entries.pop_front();
        }
        self.entries.push_back((frame_index, prob));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn frame_indices(&self) -> Vec<u64> {
        self.entries.iter().map(|(i, _)| *i).collect()
    }
}

/// Weighted per-pixel mean with weight `decay^age`, where the newest map
/// has age 0 and ages count window positions. Maps are assumed
/// co-registered (no motion compensation).
pub fn temporal_aggregate(window: &TemporalWindow) -> Result<ProbMap> {
    let newest = window
        .entries
        .back()
        .ok_or_else(|| Error::Argument("cannot aggregate an empty window".into()))?;
    let (h, w) = newest.1.dims();
    if window.entries.len() == 1 {
        return Ok(newest.1.clone());
    }
    let n = window.entries.len();
    let weights: Vec<f64> = (0..n).map(|pos| window.decay.powi((n - 1 - pos) as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = vec![0.0; h * w];
    for ((_, map), wt) in window.entries.iter().zip(&weights) {
        if map.dims() != (h, w) {
            return Err(Error::Shape("window maps differ in shape".into()));
        }
        let wn = wt / total;
        for (a, &p) in acc.iter_mut().zip(map.grid().data()) {
            *a += wn * p;
        }
    }
    let data = acc.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(ProbMap(Grid::from_vec(h, w, data)?))
}

/// Entropy in nats of a Bernoulli(p) variable, with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    (term(p) + term(1.0 - p)).clamp(0.0, LN_2)
}

pub fn entropy_map(prob: &ProbMap) -> Grid<f64> {
    prob.grid().map(binary_entropy)
}

/// Entropy field with its image-wide and predicted-vehicle-region means.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyReport {
    pub entropy_map: Grid<f64>,
    pub mean_entropy_image: f64,
    /// Mean over pixels predicted as vehicle; 0 when none are.
    pub mean_entropy_vehicle_region: f64,
}

pub fn summarize_uncertainty(entropy: &Grid<f64>, pred_mask: &Mask) -> Result<UncertaintyReport> {
    if !entropy.same_dims(pred_mask) {
        return Err(Error::Shape(format!(
            "entropy map is {:?}, mask is {:?}",
            entropy.dims(),
            pred_mask.dims()
        )));
    }
    let n = entropy.len().max(1) as f64;
    let mean_image = entropy.data().iter().sum::<f64>() / n;
    let (sum, count) = entropy
        .data()
        .iter()
        .zip(pred_mask.data())
        .filter(|(_, &m)| m != 0)
        .fold((0.0, 0usize), |(s, c), (&e, _)| (s + e, c + 1));
    let mean_region = if count == 0 { 0.0 } else { sum / count as f64 };
    Ok(UncertaintyReport {
        entropy_map: entropy.clone(),
        mean_entropy_image: mean_image,
        mean_entropy_vehicle_region: mean_region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(h: usize, w: usize, p: f64) -> ProbMap {
        ProbMap::filled(h, w, p).unwrap()
    }

    #[test]
    fn prob_map_validation() {
        assert!(ProbMap::filled(2, 2, 1.2).is_err());
        assert!(ProbMap::filled(2, 2, f64::NAN).is_err());
        assert!(ProbMap::filled(2, 2, 1.0).is_ok());
    }

    #[test]
    fn threshold_ties_go_to_vehicle() {
        let m = ProbMap::new(Grid::from_vec(1, 3, vec![0.4999, 0.5, 0.9]).unwrap()).unwrap();
        assert_eq!(m.threshold().data(), &[0, 1, 1]);
    }

    #[test]
    fn mean_of_identical_and_of_pair() {
        let a = pm(3, 3, 0.37);
        let stack = SampleStack::new(vec![a.clone(); 4], vec![0, 1, 2, 3]).unwrap();
        assert_eq!(mean_prob(&stack), a);
        let pair = SampleStack::new(vec![pm(2, 2, 0.2), pm(2, 2, 0.8)], vec![0, 1]).unwrap();
        for &v in mean_prob(&pair).grid().data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert!(SampleStack::new(vec![], vec![]).is_err());
        assert!(SampleStack::new(vec![pm(2, 2, 0.1), pm(2, 3, 0.1)], vec![0, 1]).is_err());
    }

    #[test]
    fn aggregate_hand_case() {
        let w = TemporalWindow::from_entries(vec![(0, pm(2, 2, 0.2)), (1, pm(2, 2, 0.8))], 0.5)
            .unwrap();
        for &v in temporal_aggregate(&w).unwrap().grid().data() {
            assert!((v - 0.6).abs() < 1e-9);
        }
    }

    #[test]
    fn window_evicts_and_validates() {
        let mut w = TemporalWindow::new(2, 0.7).unwrap();
        assert!(matches!(temporal_aggregate(&w), Err(Error::Argument(_))));
        w.push(0, pm(2, 2, 0.1)).unwrap();
        w.push(3, pm(2, 2, 0.2)).unwrap();
        w.push(4, pm(2, 2, 0.3)).unwrap();
        assert_eq!(w.frame_indices(), vec![3, 4]);
        assert!(w.push(4, pm(2, 2, 0.3)).is_err());
        assert!(matches!(w.push(9, pm(3, 2, 0.3)), Err(Error::Shape(_))));
        assert!(TemporalWindow::new(0, 0.5).is_err());
        assert!(TemporalWindow::new(2, 0.0).is_err());
        assert!(TemporalWindow::new(2, 1.5).is_err());
    }

    #[test]
    fn entropy_values() {
        assert!((binary_entropy(0.5) - LN_2).abs() < 1e-15);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        let direct = -0.9 * 0.9f64.ln() - 0.1 * 0.1f64.ln();
        assert!((binary_entropy(0.9) - direct).abs() < 1e-15);
        assert!((binary_entropy(0.9) - 0.3251).abs() < 1e-4);
    }

    #[test]
    fn summary_conventions() {
        let e = Grid::filled(4, 4, 0.3);
        let r = summarize_uncertainty(&e, &Grid::filled(4, 4, 1u8)).unwrap();
        assert!((r.mean_entropy_image - 0.3).abs() < 1e-15);
        assert!((r.mean_entropy_vehicle_region - 0.3).abs() < 1e-15);
        let empty = summarize_uncertainty(&e, &Grid::filled(4, 4, 0u8)).unwrap();
        assert_eq!(empty.mean_entropy_vehicle_region, 0.0);

        // A quarter of the pixels on the mask with entropy 0.1, the rest 0.5.
        let mut mask = Grid::filled(4, 4, 0u8);
        let mut ent = Grid::filled(4, 4, 0.5);
        for y in 0..2 {
            for x in 0..2 {
                mask.set(y, x, 1);
                ent.set(y, x, 0.1);
            }
        }
        let r = summarize_uncertainty(&ent, &mask).unwrap();
        assert!((r.mean_entropy_image - 0.4).abs() < 1e-12);
        assert!((r.mean_entropy_vehicle_region - 0.1).abs() < 1e-12);
        assert!(summarize_uncertainty(&ent, &Grid::filled(2, 4, 0u8)).is_err());
    }
}
