// SPDX-License-Identifier: Apache-2.0

//! Pixelwise binary cross-entropy on logits.

use crate::error::{Error, Result};
use crate::frame::Mask;
use crate::model::Logits;
use crate::tensor::{Real, Tensor};

/// `-[y ln s(z) + (1 - y) ln(1 - s(z))]` written as
/// `max(z, 0) - z y + ln(1 + e^-|z|)`, which is finite for every finite `z`.
#[inline]
pub fn bce_with_logits<T: Real>(z: T, y: T) -> T {
    z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean loss over all entries of `[N, 1, H, W]` logits and targets.
pub fn bce_loss_tensor<T: Real>(logits: &Tensor<T>, targets: &Tensor<T>) -> T {
    assert_eq!(logits.shape(), targets.shape(), "loss shape mismatch");
    let n = T::from_usize(logits.len()).unwrap();
    logits
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&z, &y)| bce_with_logits(z, y))
        .sum::<T>()
        / n
}

/// Gradient of [`bce_loss_tensor`] with respect to the logits:
/// `(sigmoid(z) - y) / N`.
pub fn bce_loss_grad<T: Real>(logits: &Tensor<T>, targets: &Tensor<T>) -> Tensor<T> {
    let n = T::from_usize(logits.len()).unwrap();
    logits.zip_map(targets, |z, y| (crate::ops::sigmoid_scalar(z) - y) / n)
}

pub fn bce_loss(logits: &Logits, mask: &Mask) -> Result<f64> {
    if logits.grid().dims() != mask.dims() {
        return Err(Error::Shape(format!(
            "logits are {:?}, mask is {:?}",
            logits.dims(),
            mask.dims()
        )));
    }
    let n = mask.len().max(1) as f64;
    Ok(logits
        .grid()
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&z, &y)| bce_with_logits(z as f64, y as f64))
        .sum::<f64>()
        / n)
}
