// SPDX-License-Identifier: Apache-2.0

//! Confusion counts, overlap scores and per-set reports.
//!
//! Three scores are computed from the same counts:
//!
//! * [`doubled_overlap`] `= 2tp / (tp + fp + fn)`. This is the score the
//!   report's `paper_score` column carries. It is neither Dice nor IoU and
//!   reaches 2.0 on a perfect non-empty prediction.
//! * [`dice`] `= 2tp / (2tp + fp + fn)`.
//! * [`jaccard`] `= tp / (tp + fp + fn)`.
//!
//! All three are 1.0 when both masks are empty.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::Mask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn both_empty(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// Pixelwise tallies of `pred` against `gt`.
pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionCounts> {
    if !pred.same_dims(gt) {
        return Err(Error::Shape(format!(
            "prediction is {:?}, ground truth is {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    for (name, m) in [("prediction", pred), ("ground truth", gt)] {
        if let Some(v) = m.data().iter().find(|&&v| v > 1) {
            return Err(Error::Argument(format!("{name} mask holds non-binary value {v}")));
        }
    }
    let (mut pred_sum, mut gt_sum, mut tp) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        pred_sum += p as u64;
        gt_sum += g as u64;
        tp += (p & g) as u64;
    }
    let fp = pred_sum - tp;
    let fn_ = gt_sum - tp;
    Ok(ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: pred.len() as u64 - tp - fp - fn_,
    })
}

/// `2tp / (tp + fp + fn)`, unbounded above by 1.
pub fn doubled_overlap(c: &ConfusionCounts) -> f64 {
    if c.both_empty() {
        return 1.0;
    }
    2.0 * c.tp as f64 / (c.tp + c.fp + c.fn_) as f64
}

pub fn dice(c: &ConfusionCounts) -> f64 {
    if c.both_empty() {
        return 1.0;
    }
    2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64
}

pub fn jaccard(c: &ConfusionCounts) -> f64 {
    if c.both_empty() {
        return 1.0;
    }
    c.tp as f64 / (c.tp + c.fp + c.fn_) as f64
}

/// Entropy means attached to one evaluated frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EntropySummary {
    pub image: f64,
    pub vehicle_region: f64,
}

/// One frame to score: prediction, ground truth and its entropy summary.
#[derive(Clone, Debug)]
pub struct FrameEvaluation {
    pub pred: Mask,
    pub gt: Mask,
    pub entropy: EntropySummary,
}

/// Scores are fractions (the CSV prints them as percentages).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetRow {
    pub name: String,
    pub n_frames: usize,
    pub doubled_overlap: f64,
    pub dice: f64,
    pub jaccard: f64,
    /// Mean image entropy in nats.
    pub entropy: f64,
    pub entropy_vehicle_region: f64,
}

/// Arithmetic means of the set rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanRow {
    pub n_frames: f64,
    pub doubled_overlap: f64,
    pub dice: f64,
    pub jaccard: f64,
    pub entropy: f64,
    pub entropy_vehicle_region: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetReport {
    pub rows: Vec<SetRow>,
    pub mean: MeanRow,
}

pub const CSV_HEADER: &str = "set,n,paper_score,dice,jaccard,entropy";

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

/// Scores each set as the per-frame mean of every score and appends the
/// mean row. Sets keep the order they are given in.
pub fn evaluate_sets(groups: &[(String, Vec<FrameEvaluation>)]) -> Result<SetReport> {
    if groups.is_empty() {
        return Err(Error::Argument("no sets to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (name, frames) in groups {
        if frames.is_empty() {
            return Err(Error::Argument(format!("set `{name}` has no frames")));
        }
        let counts = frames
            .iter()
            .map(|f| confusion(&f.pred, &f.gt))
            .collect::<Result<Vec<_>>>()?;
        rows.push(SetRow {
            name: name.clone(),
            n_frames: frames.len(),
            doubled_overlap: mean(counts.iter().map(doubled_overlap)),
            dice: mean(counts.iter().map(dice)),
            jaccard: mean(counts.iter().map(jaccard)),
            entropy: mean(frames.iter().map(|f| f.entropy.image)),
            entropy_vehicle_region: mean(frames.iter().map(|f| f.entropy.vehicle_region)),
        });
    }
    let mean_row = MeanRow {
        n_frames: mean(rows.iter().map(|r| r.n_frames as f64)),
        doubled_overlap: mean(rows.iter().map(|r| r.doubled_overlap)),
        dice: mean(rows.iter().map(|r| r.dice)),
        jaccard: mean(rows.iter().map(|r| r.jaccard)),
        entropy: mean(rows.iter().map(|r| r.entropy)),
        entropy_vehicle_region: mean(rows.iter().map(|r| r.entropy_vehicle_region)),
    };
    Ok(SetReport {
        rows,
        mean: mean_row,
    })
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn fmt_count(n: f64) -> String {
    if n.fract() == 0.0 {
        format!("{}", n as u64)
    } else {
        format!("{n:.1}")
    }
}

impl SetReport {
    /// `set,n,paper_score,dice,jaccard,entropy` with a final `mean` row.
    /// Scores in percent to one decimal, entropy to two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.2}",
                r.name,
                r.n_frames,
                pct(r.doubled_overlap),
                pct(r.dice),
                pct(r.jaccard),
                r.entropy
            );
        }
        let m = &self.mean;
        let _ = writeln!(
            out,
            "mean,{},{},{},{},{:.2}",
            fmt_count(m.n_frames),
            pct(m.doubled_overlap),
            pct(m.dice),
            pct(m.jaccard),
            m.entropy
        );
        out
    }

    /// Human-readable three-column table: samples, score (Dice), entropy.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<24}{:>8}{:>10}\n", "Time series samples", "Dice", "Entropy");
        for r in &self.rows {
            let label = format!("{}, n={}", r.name, r.n_frames);
            let _ = writeln!(out, "{label:<24}{:>8}{:>10.2}", pct(r.dice), r.entropy);
        }
        let _ = writeln!(out, "{:<24}{:>8}{:>10.2}", "Mean", pct(self.mean.dice), self.mean.entropy);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Grid;

    fn counts(tp: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn: 0 }
    }

    #[test]
    fn identity_and_empty_prediction() {
        let gt = Grid::from_vec(2, 3, vec![1, 0, 1, 1, 0, 0]).unwrap();
        assert_eq!(confusion(&gt, &gt).unwrap(), ConfusionCounts { tp: 3, fp: 0, fn_: 0, tn: 3 });
        let zero = Grid::filled(2, 3, 0u8);
        assert_eq!(confusion(&zero, &gt).unwrap(), ConfusionCounts { tp: 0, fp: 0, fn_: 3, tn: 3 });
    }

    #[test]
    fn confusion_errors() {
        let a = Grid::filled(2, 2, 0u8);
        assert!(matches!(confusion(&a, &Grid::filled(2, 3, 0u8)), Err(Error::Shape(_))));
        assert!(matches!(confusion(&a, &Grid::filled(2, 2, 2u8)), Err(Error::Argument(_))));
    }

    #[test]
    fn score_arithmetic() {
        let c = counts(3, 2, 1);
        assert_eq!(doubled_overlap(&c), 1.0);
        assert!((dice(&c) - 6.0 / 9.0).abs() < 1e-15);
        assert_eq!(jaccard(&c), 0.5);
        // A perfect non-empty prediction doubles past 1.
        assert_eq!(doubled_overlap(&counts(3, 0, 0)), 2.0);
        assert_eq!(dice(&counts(3, 0, 0)), 1.0);
        assert_eq!(jaccard(&counts(3, 0, 0)), 1.0);
        assert_eq!(doubled_overlap(&counts(0, 4, 0)), 0.0);
        assert_eq!(doubled_overlap(&counts(0, 0, 2)), 0.0);
        for f in [doubled_overlap, dice, jaccard] {
            assert_eq!(f(&ConfusionCounts { tn: 9, ..Default::default() }), 1.0);
        }
    }

    fn frame(pred: Vec<u8>, gt: Vec<u8>, entropy: f64) -> FrameEvaluation {
        FrameEvaluation {
            pred: Grid::from_vec(2, 2, pred).unwrap(),
            gt: Grid::from_vec(2, 2, gt).unwrap(),
            entropy: EntropySummary { image: entropy, vehicle_region: entropy },
        }
    }

    #[test]
    fn perfect_set_scores_100() {
        let frames = vec![frame(vec![1, 0, 0, 1], vec![1, 0, 0, 1], 0.1); 3];
        let report = evaluate_sets(&[("Set1".into(), frames)]).unwrap();
        assert_eq!(report.rows[0].dice, 1.0);
        let csv = report.to_csv();
        assert!(csv.contains("Set1,3,200.0,100.0,100.0,0.10"), "{csv}");
    }

    #[test]
    fn mean_row_averages_rows() {
        // Set i predicts i of 4 ground-truth pixels: dice 2i / (i + 4).
        let groups: Vec<(String, Vec<FrameEvaluation>)> = (1..=4)
            .map(|i| {
                let pred = (0..4).map(|p| u8::from(p < i)).collect();
                (format!("Set{i}"), vec![frame(pred, vec![1; 4], 0.05 * i as f64)])
            })
            .collect();
        let report = evaluate_sets(&groups).unwrap();
        let expected = (1..=4).map(|i| 2.0 * i as f64 / (i as f64 + 4.0)).sum::<f64>() / 4.0;
        assert!((report.mean.dice - expected).abs() < 1e-15);
        assert!((report.mean.entropy - 0.125).abs() < 1e-15);
        assert_eq!(report.to_csv().lines().count(), 6);
    }

    #[test]
    fn empty_group_is_rejected() {
        assert!(matches!(evaluate_sets(&[("Set1".into(), vec![])]), Err(Error::Argument(_))));
        assert!(evaluate_sets(&[]).is_err());
    }
}
