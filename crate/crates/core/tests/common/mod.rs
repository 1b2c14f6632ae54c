// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use rand::Rng;
use sanet_core::data::{generate_synthetic, sample_episode, Episode, SyntheticSceneConfig};
use sanet_core::seed::rng_for;
use sanet_core::train::{Sample, TrainConfig};
use sanet_core::{ImageTensor, ModelConfig};

pub fn random_image(h: usize, w: usize, seed: u64) -> ImageTensor {
    let mut rng = rng_for(seed, 0);
    let hwc: Vec<f32> = (0..h * w * 3).map(|_| rng.random_range(0.0..=1.0)).collect();
    ImageTensor::from_hwc(h, w, &hwc).unwrap()
}

pub fn scenes(n: usize, seed: u64) -> Vec<Sample> {
    let config = SyntheticSceneConfig {
        image_dims: [64, 64],
        vehicle_count_range: [1, 3],
        scale_range: [10, 20],
        num_scenes: n,
        seed,
        ..Default::default()
    };
    generate_synthetic(&config).unwrap()
}

pub fn episode(n: usize, seed: u64) -> Episode<Sample> {
    sample_episode(&scenes(n, seed), n, 0, seed).unwrap()
}

/// Settings of the 10-image overfit run.
pub fn smoke_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        epochs: 200,
        batch_size: 2,
        k_shot: 10,
        seed: 3,
        model: ModelConfig::default(),
    }
}

pub fn tiny_config(epochs: usize, k: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        epochs,
        batch_size: 2,
        k_shot: k,
        seed: 1,
        model: ModelConfig::with_widths(&[4, 8]),
    }
}
