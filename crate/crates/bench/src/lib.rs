// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use sanet_core::{ImageTensor, Tensor};

/// Deterministic smooth test image.
pub fn gradient_image(h: usize, w: usize) -> ImageTensor {
    let hwc: Vec<f32> = (0..h * w * 3)
        .map(|i| {
            let (y, x) = ((i / 3) / w, (i / 3) % w);
            0.2 + 0.6 * ((x + y) % 64) as f32 / 64.0
        })
        .collect();
    ImageTensor::from_hwc(h, w, &hwc).expect("valid image")
}

pub fn ramp(shape: [usize; 4]) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|i| ((i % 17) as f32 - 8.0) / 8.0).collect()).expect("shape")
}
