// SPDX-License-Identifier: Apache-2.0

//! Central-difference checks of the hand-written backward passes, run in
//! `f64` on 4x4 inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{BnMode, GatedFusion, ParamStore, SaBlock};
use crate::ops::UpsampleMode;
use crate::tensor::Tensor;
use crate::train::loss::{bce_loss_grad, bce_loss_tensor};

pub const STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradReport {
    pub worst_rel_err: f64,
    pub entries: usize,
}

impl GradReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.worst_rel_err = self.worst_rel_err.max(rel_err(analytic, numeric));
        self.entries += 1;
    }

    fn merge(self, other: GradReport) -> GradReport {
        GradReport {
            worst_rel_err: self.worst_rel_err.max(other.worst_rel_err),
            entries: self.entries + other.entries,
        }
    }
}

fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

fn weighted(out: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Compares `grads` with central differences of `f` for every entry of
/// every array in `store`.
fn compare(
    f: &dyn Fn(&ParamStore<f64>) -> Result<f64>,
    store: &ParamStore<f64>,
    grads: &ParamStore<f64>,
) -> Result<GradReport> {
    let mut report = GradReport::default();
    for (key, t) in store.iter() {
        let g = grads.get(key)?;
        for i in 0..t.len() {
            let mut plus = store.clone();
            plus.get_mut(key)?.data_mut()[i] += STEP;
            let mut minus = store.clone();
            minus.get_mut(key)?.data_mut()[i] -= STEP;
            report.record(g.data()[i], (f(&plus)? - f(&minus)?) / (2.0 * STEP));
        }
    }
    Ok(report)
}

/// Squeeze-and-attention block on a `[1, 2, 4, 4]` input with a random
/// linear objective; covers parameters and the input.
pub fn check_sa_block(seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = SaBlock::new("sa", 2, 3);
    let mut store = ParamStore::new();
    block.init(&mut store, &mut rng);
    let x = random([1, 2, 4, 4], &mut rng);
    let w = random([1, 2, 4, 4], &mut rng);

    let (_, cache) = block.forward(&store, &x)?;
    let mut grads = ParamStore::new();
    let gx = block.backward(&store, &cache, &w, &mut grads)?;
    store.insert("input", x);
    grads.insert("input", gx);
    let f = |s: &ParamStore<f64>| Ok(weighted(&block.forward(s, s.get("input")?)?.0, &w));
    compare(&f, &store, &grads)
}

/// Gated fusion of a `[1, 2, 2, 2]` coarse map into a `[1, 2, 4, 4]` map,
/// for every gate, normalization and upsampling mode.
pub fn check_gated_fusion(seed: u64) -> Result<GradReport> {
    let mut report = GradReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for gate in [true, false] {
        for bn in [BnMode::Batch, BnMode::Running] {
            for up in [UpsampleMode::Bilinear, UpsampleMode::Nearest] {
                let fusion = GatedFusion::new("fuse", 2, 2, gate, up);
                let (mut store, mut buffers) = (ParamStore::new(), ParamStore::new());
                fusion.init(&mut store, &mut buffers, &mut rng);
                for v in buffers.get_mut(&fusion.norm.mean_key())?.data_mut() {
                    *v = rng.random_range(-0.5..0.5);
                }
                for v in buffers.get_mut(&fusion.norm.var_key())?.data_mut() {
                    *v = rng.random_range(0.5..2.0);
                }
                let lower = random([1, 2, 2, 2], &mut rng);
                let upper = random([1, 2, 4, 4], &mut rng);
                let w = random([1, 2, 4, 4], &mut rng);
                let (_, cache) = fusion.forward(&store, &buffers, &lower, &upper, bn)?;
                let mut grads = ParamStore::new();
                let (gl, gu) = fusion.backward(&store, &cache, &w, &mut grads)?;
                store.insert("lower", lower);
                store.insert("upper", upper);
                grads.insert("lower", gl);
                grads.insert("upper", gu);
                let f = |s: &ParamStore<f64>| {
                    let out = fusion.forward(s, &buffers, s.get("lower")?, s.get("upper")?, bn)?.0;
                    Ok(weighted(&out, &w))
                };
                report = report.merge(compare(&f, &store, &grads)?);
            }
        }
    }
    Ok(report)
}

/// Mean binary cross-entropy on 4x4 logits in `[-3, 3]`.
pub fn check_bce_loss(seed: u64) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = random([1, 1, 4, 4], &mut rng).map(|v| 3.0 * v);
    let targets = random([1, 1, 4, 4], &mut rng).map(|v| f64::from(u8::from(v > 0.0)));
    let mut store = ParamStore::new();
    store.insert("logits", logits.clone());
    let mut grads = ParamStore::new();
    grads.insert("logits", bce_loss_grad(&logits, &targets));
    let f = |s: &ParamStore<f64>| Ok(bce_loss_tensor(s.get("logits")?, &targets));
    compare(&f, &store, &grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_their_tolerances() {
        let sa = check_sa_block(1).unwrap();
        let fusion = check_gated_fusion(2).unwrap();
        let loss = check_bce_loss(3).unwrap();
        assert!(sa.worst_rel_err <= 1e-4, "{sa:?}");
        assert!(fusion.worst_rel_err <= 1e-4, "{fusion:?}");
        assert!(loss.worst_rel_err <= 1e-6, "{loss:?}");
        assert_eq!(loss.entries, 16);
        assert_eq!(sa.entries, 2 * 3 * 9 + 3 + 3 * 2 + 2 + 32);
    }
}
