// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::LN_2;

use rand::Rng;
use sanet_core::seed::rng_for;
use sanet_core::uncertainty::{
    binary_entropy, entropy_map, mean_prob, summarize_uncertainty, temporal_aggregate, ProbMap,
    SampleStack, TemporalWindow,
};
use sanet_core::Grid;

fn map(values: Vec<f64>, w: usize) -> ProbMap {
    ProbMap::new(Grid::from_vec(values.len() / w, w, values).unwrap()).unwrap()
}

#[test]
fn entropy_is_bounded_on_random_probabilities() {
    let mut rng = rng_for(11, 0);
    let mut values: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..=1.0)).collect();
    values.extend([0.0, 1.0, 0.5, f64::MIN_POSITIVE, 1.0 - f64::EPSILON]);
    let w = values.len();
    let e = entropy_map(&map(values.clone(), w));
    for (&p, &h) in values.iter().zip(e.data()) {
        assert!((0.0..=LN_2).contains(&h), "p={p} h={h}");
        assert!((h - binary_entropy(1.0 - p)).abs() < 1e-12, "symmetry at {p}");
    }
}

#[test]
#[allow(clippy::approx_constant)]
fn entropy_reference_values() {
    assert!((binary_entropy(0.5) - 0.6931).abs() < 1e-4);
    // -0.9 ln 0.9 - 0.1 ln 0.1
    let expected = -(0.9f64 * 0.9f64.ln()) - 0.1 * 0.1f64.ln();
    assert!((binary_entropy(0.9) - expected).abs() < 1e-12);
    assert!((binary_entropy(0.9) - 0.3251).abs() < 1e-4);
    assert_eq!(binary_entropy(0.0), 0.0);
    assert_eq!(binary_entropy(1.0), 0.0);
}

#[test]
fn two_frame_hand_case() {
    // weights 0.5 (older) and 1 (newest): (0.5 * 0.2 + 0.8) / 1.5 = 0.6
    let w = TemporalWindow::from_entries(vec![(0, map(vec![0.2], 1)), (1, map(vec![0.8], 1))], 0.5)
        .unwrap();
    let p = temporal_aggregate(&w).unwrap().grid().data()[0];
    assert!((p - 0.6).abs() < 1e-9, "{p}");
}

#[test]
fn window_of_one_is_identity() {
    let mut rng = rng_for(3, 0);
    let mut window = TemporalWindow::new(1, 0.7).unwrap();
    for i in 0..20 {
        let m = map((0..64).map(|_| rng.random_range(0.0..=1.0)).collect(), 8);
        window.push(i * 10, m.clone()).unwrap();
        assert_eq!(temporal_aggregate(&window).unwrap(), m);
        assert_eq!(window.len(), 1);
    }
}

#[test]
fn aggregate_matches_weighted_sum_and_stays_in_hull() {
    let mut rng = rng_for(4, 0);
    for _ in 0..100 {
        let n = rng.random_range(1..=5);
        let decay: f64 = rng.random_range(0.05..=1.0);
        let maps: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.random_range(0.0..=1.0)).collect()).collect();
        let entries = maps.iter().enumerate().map(|(i, m)| (i as u64, map(m.clone(), 3))).collect();
        let agg = temporal_aggregate(&TemporalWindow::from_entries(entries, decay).unwrap()).unwrap();
        for px in 0..6 {
            let (mut num, mut den) = (0.0, 0.0);
            for (i, m) in maps.iter().enumerate() {
                let wt = decay.powi((n - 1 - i) as i32);
                num += wt * m[px];
                den += wt;
            }
            let got = agg.grid().data()[px];
            assert!((got - num / den).abs() < 1e-12);
            let lo = maps.iter().map(|m| m[px]).fold(f64::INFINITY, f64::min);
            let hi = maps.iter().map(|m| m[px]).fold(f64::NEG_INFINITY, f64::max);
            assert!(got >= lo - 1e-12 && got <= hi + 1e-12);
        }
    }
}

#[test]
fn window_evicts_oldest_and_rejects_bad_pushes() {
    let mut w = TemporalWindow::new(2, 0.5).unwrap();
    for i in 0..4 {
        w.push(i, map(vec![0.5; 4], 2)).unwrap();
    }
    assert_eq!(w.frame_indices(), vec![2, 3]);
    assert!(w.push(3, map(vec![0.5; 4], 2)).is_err());
    assert!(w.push(9, map(vec![0.5; 6], 2)).is_err());
    assert!(TemporalWindow::new(0, 0.5).is_err());
    assert!(TemporalWindow::new(3, 0.0).is_err());
    assert!(temporal_aggregate(&TemporalWindow::new(3, 0.5).unwrap()).is_err());
}

#[test]
fn mean_prob_matches_loop() {
    let mut rng = rng_for(8, 0);
    let t = 7;
    let raw: Vec<Vec<f64>> = (0..t).map(|_| (0..12).map(|_| rng.random_range(0.0..=1.0)).collect()).collect();
    let stack = SampleStack::new(raw.iter().map(|v| map(v.clone(), 4)).collect(), (0..t as u64).collect()).unwrap();
    let mean = mean_prob(&stack);
    for px in 0..12 {
        let mut s = 0.0;
        for v in &raw {
            s += v[px];
        }
        assert!((mean.grid().data()[px] - s / t as f64).abs() < 1e-15);
    }
}

#[test]
fn vehicle_region_summary() {
    let e = Grid::from_vec(1, 4, vec![0.1, 0.2, 0.3, 0.6]).unwrap();
    let m = Grid::from_vec(1, 4, vec![0, 1, 0, 1]).unwrap();
    let r = summarize_uncertainty(&e, &m).unwrap();
    assert!((r.mean_entropy_image - 0.3).abs() < 1e-12);
    assert!((r.mean_entropy_vehicle_region - 0.4).abs() < 1e-12);
    let r = summarize_uncertainty(&e, &Grid::filled(1, 4, 0)).unwrap();
    assert_eq!(r.mean_entropy_vehicle_region, 0.0);
}

#[test]
fn out_of_range_probabilities_are_rejected() {
    assert!(ProbMap::new(Grid::from_vec(1, 2, vec![0.5, 1.5]).unwrap()).is_err());
    assert!(ProbMap::new(Grid::from_vec(1, 2, vec![f64::NAN, 0.5]).unwrap()).is_err());
}
