// SPDX-License-Identifier: Apache-2.0

mod common;

use rand::Rng;
use sanet_core::model::{backbone_forward, forward};
use sanet_core::seed::rng_for;
use sanet_core::uncertainty::{entropy_map, mc_sample, mean_prob};
use sanet_core::{init_model, Error, ModelConfig};

#[test]
fn output_dims_follow_input_dims() {
    let params = init_model(&ModelConfig::default()).unwrap();
    for (h, w) in [(64, 64), (96, 64), (256, 256), (32, 160)] {
        let logits = forward(&params, &common::random_image(h, w, 0), true, 5).unwrap();
        assert_eq!(logits.dims(), (h, w));
    }
}

#[test]
fn non_multiple_dims_are_shape_errors() {
    let params = init_model(&ModelConfig::default()).unwrap();
    for (h, w) in [(50, 50), (64, 48), (16, 64)] {
        let err = forward(&params, &common::random_image(h, w, 0), false, 0).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{h}x{w}: {err}");
    }
}

#[test]
fn pyramid_strides_and_widths() {
    for widths in [vec![8, 16], vec![8, 16, 32], vec![3, 5, 7]] {
        let params = init_model(&ModelConfig::with_widths(&widths)).unwrap();
        let pyramid = backbone_forward(&params, &common::random_image(64, 96, 1)).unwrap();
        assert_eq!(pyramid.levels.len(), widths.len());
        for (i, level) in pyramid.levels.iter().enumerate() {
            assert_eq!(level.stride, 4 << i);
            assert_eq!(level.features.shape(), [1, widths[i], 64 / level.stride, 96 / level.stride]);
        }
    }
}

#[test]
fn random_inputs_and_configs_stay_finite() {
    let mut rng = rng_for(77, 0);
    for trial in 0..100 {
        let levels = rng.random_range(2..=3);
        let widths: Vec<usize> = (0..levels).map(|_| rng.random_range(1..=6)).collect();
        let config = ModelConfig {
            branch_widths: widths,
            sa_channels: rng.random_range(1..=4),
            gate_nonlinearity: rng.random_bool(0.5),
            dropout_rate: rng.random_range(0.0..0.9),
            seed: trial,
            ..Default::default()
        };
        let params = init_model(&config).unwrap();
        let h = 32 * rng.random_range(1..=3);
        let w = 32 * rng.random_range(1..=3);
        let image = common::random_image(h, w, trial);
        let logits = forward(&params, &image, true, trial).unwrap();
        assert!(logits.grid().data().iter().all(|v| v.is_finite()), "trial {trial}");
        let stack = mc_sample(&params, &image, 2, trial).unwrap();
        let e = entropy_map(&mean_prob(&stack));
        assert!(e.data().iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn invalid_model_configs_are_rejected() {
    let bad = [
        ModelConfig::with_widths(&[8]),
        ModelConfig::with_widths(&[8, 16, 32, 64]),
        ModelConfig::with_widths(&[8, 0]),
        ModelConfig { sa_channels: 0, ..Default::default() },
        ModelConfig { dropout_rate: 1.0, ..Default::default() },
    ];
    for config in bad {
        assert!(matches!(init_model(&config), Err(Error::Config(_))), "{config:?}");
    }
}
