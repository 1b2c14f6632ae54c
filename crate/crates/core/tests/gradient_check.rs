// SPDX-License-Identifier: Apache-2.0

//! Analytic gradients against central finite differences at 64-bit precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sanet_core::model::layers::BnMode;
use sanet_core::model::{GatedFusion, ModelConfig, ModelParams, Network, ParamStore, SaBlock};
use sanet_core::ops::UpsampleMode;
use sanet_core::train::loss::{bce_loss_grad, bce_loss_tensor};
use sanet_core::Tensor;

const STEP: f64 = 1e-5;
const LAYER_TOL: f64 = 1e-4;
const LOSS_TOL: f64 = 1e-6;

fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// |analytic - numeric| relative to the larger magnitude; gradients below
/// 1e-6 in both are compared absolutely against that floor.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn central_difference(f: &dyn Fn(&ParamStore<f64>) -> f64, store: &ParamStore<f64>, key: &str, i: usize) -> f64 {
    let mut plus = store.clone();
    plus.get_mut(key).unwrap().data_mut()[i] += STEP;
    let mut minus = store.clone();
    minus.get_mut(key).unwrap().data_mut()[i] -= STEP;
    (f(&plus) - f(&minus)) / (2.0 * STEP)
}

/// Checks every entry of every array in `store` (or `limit` random entries
/// per array when given). Returns the worst relative error.
fn check_store(
    f: &dyn Fn(&ParamStore<f64>) -> f64,
    store: &ParamStore<f64>,
    grads: &ParamStore<f64>,
    limit: Option<(usize, &mut ChaCha8Rng)>,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut limit = limit;
    for (key, t) in store.iter() {
        let g = grads.get(key).unwrap_or_else(|_| panic!("no gradient for {key}"));
        let indices: Vec<usize> = match limit.as_mut() {
            Some((n, rng)) if t.len() > *n => (0..*n).map(|_| rng.random_range(0..t.len())).collect(),
            _ => (0..t.len()).collect(),
        };
        for i in indices {
            let numeric = central_difference(f, store, key, i);
            let e = rel_err(g.data()[i], numeric);
            assert!(e <= LAYER_TOL, "{key}[{i}]: analytic {} numeric {numeric} rel {e:e}", g.data()[i]);
            worst = worst.max(e);
        }
    }
    worst
}

#[test]
fn sa_block_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let block = SaBlock::new("sa", 2, 3);
    let mut store = ParamStore::new();
    block.init(&mut store, &mut rng);
    let x = random([1, 2, 4, 4], &mut rng);

    let mut grads = ParamStore::new();
    let (out, cache) = block.forward(&store, &x).unwrap();
    let ones = Tensor::full(out.shape(), 1.0);
    let gx = block.backward(&store, &cache, &ones, &mut grads).unwrap();

    let loss = |s: &ParamStore<f64>| block.forward(s, &x).unwrap().0.sum();
    let worst = check_store(&loss, &store, &grads, None);

    // Input gradient, treating the input as one more array.
    let mut as_store = store.clone();
    as_store.insert("input", x.clone());
    let loss_x = |s: &ParamStore<f64>| block.forward(s, s.get("input").unwrap()).unwrap().0.sum();
    for i in 0..x.len() {
        let numeric = central_difference(&loss_x, &as_store, "input", i);
        assert!(rel_err(gx.data()[i], numeric) <= LAYER_TOL);
    }
    println!("sa_block worst relative error {worst:e}");
}

fn check_fusion(gate: bool, mode: BnMode, upsample: UpsampleMode, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fusion = GatedFusion::new("fuse", 2, 2, gate, upsample);
    let (mut weights, mut buffers) = (ParamStore::new(), ParamStore::new());
    fusion.init(&mut weights, &mut buffers, &mut rng);
    // Non-trivial running statistics for the evaluation path.
    for v in buffers.get_mut(&fusion.norm.mean_key()).unwrap().data_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    for v in buffers.get_mut(&fusion.norm.var_key()).unwrap().data_mut() {
        *v = rng.random_range(0.5..2.0);
    }
    let upper = random([1, 2, 4, 4], &mut rng);
    let lower = random([1, 2, 2, 2], &mut rng);
    let weighting = random([1, 2, 4, 4], &mut rng);

    let objective = |out: &Tensor<f64>| out.data().iter().zip(weighting.data()).map(|(a, b)| a * b).sum::<f64>();
    let (out, cache) = fusion.forward(&weights, &buffers, &lower, &upper, mode).unwrap();
    let mut grads = ParamStore::new();
    let (g_lower, g_upper) = fusion.backward(&weights, &cache, &weighting, &mut grads).unwrap();
    let _ = objective(&out);

    let loss = |s: &ParamStore<f64>| objective(&fusion.forward(s, &buffers, &lower, &upper, mode).unwrap().0);
    check_store(&loss, &weights, &grads, None);

    let mut inputs = weights.clone();
    inputs.insert("lower", lower.clone());
    inputs.insert("upper", upper.clone());
    let loss_in = |s: &ParamStore<f64>| {
        objective(&fusion.forward(s, &buffers, s.get("lower").unwrap(), s.get("upper").unwrap(), mode).unwrap().0)
    };
    for (key, g) in [("lower", &g_lower), ("upper", &g_upper)] {
        for i in 0..g.len() {
            let numeric = central_difference(&loss_in, &inputs, key, i);
            let e = rel_err(g.data()[i], numeric);
            assert!(e <= LAYER_TOL, "{key}[{i}] rel {e:e}");
        }
    }
}

#[test]
fn gated_fusion_gradients_all_modes() {
    for (i, gate) in [true, false].into_iter().enumerate() {
        for mode in [BnMode::Batch, BnMode::Running] {
            for up in [UpsampleMode::Bilinear, UpsampleMode::Nearest] {
                check_fusion(gate, mode, up, 100 + i as u64);
            }
        }
    }
}

#[test]
fn gated_fusion_sum_loss_gradients() {
    // Plain sum-of-outputs objective on a 4x4x2 upper map.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let fusion = GatedFusion::new("fuse", 2, 2, true, UpsampleMode::Bilinear);
    let (mut w, mut b) = (ParamStore::new(), ParamStore::new());
    fusion.init(&mut w, &mut b, &mut rng);
    let upper = random([1, 2, 4, 4], &mut rng);
    let lower = random([1, 2, 2, 2], &mut rng);
    let (out, cache) = fusion.forward(&w, &b, &lower, &upper, BnMode::Running).unwrap();
    let mut grads = ParamStore::new();
    fusion
        .backward(&w, &cache, &Tensor::full(out.shape(), 1.0), &mut grads)
        .unwrap();
    let loss = |s: &ParamStore<f64>| fusion.forward(s, &b, &lower, &upper, BnMode::Running).unwrap().0.sum();
    check_store(&loss, &w, &grads, None);
}

#[test]
fn bce_loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits = random([1, 1, 4, 4], &mut rng).map(|v| 3.0 * v);
    let mask = Tensor::from_vec([1, 1, 4, 4], (0..16).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect()).unwrap();
    let analytic = bce_loss_grad(&logits, &mask);
    for i in 0..16 {
        let mut plus = logits.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = logits.clone();
        minus.data_mut()[i] -= STEP;
        let numeric = (bce_loss_tensor(&plus, &mask) - bce_loss_tensor(&minus, &mask)) / (2.0 * STEP);
        let e = rel_err(analytic.data()[i], numeric);
        assert!(e <= LOSS_TOL, "logit {i}: rel {e:e}");
    }
}

#[test]
fn full_network_gradients_sampled() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = ModelConfig {
        branch_widths: vec![2, 3, 4],
        sa_channels: 2,
        dropout_rate: 0.3,
        seed: 9,
        ..Default::default()
    };
    let network = Network::new(&config).unwrap();
    let params: ModelParams<f64> = network.init();
    let x = Tensor::stack(&[random([1, 3, 32, 32], &mut rng).map(|v| 0.5 + 0.5 * v), random([1, 3, 32, 32], &mut rng).map(|v| 0.5 + 0.5 * v)]).unwrap();
    let mask = Tensor::from_vec([2, 1, 32, 32], (0..2048).map(|i| ((i / 7) % 2) as f64).collect()).unwrap();

    let (logits, tape) = network.forward(&params, &x, BnMode::Batch, Some(77)).unwrap();
    let grads = network.backward(&params, &tape, &bce_loss_grad(&logits, &mask)).unwrap();

    let loss = |w: &ParamStore<f64>| {
        let p = ModelParams { weights: w.clone(), ..params.clone() };
        let (z, _) = network.forward(&p, &x, BnMode::Batch, Some(77)).unwrap();
        bce_loss_tensor(&z, &mask)
    };
    let worst = check_store(&loss, &params.weights, &grads, Some((4, &mut rng)));
    println!("full network worst relative error {worst:e}");
}
