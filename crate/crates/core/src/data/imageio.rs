// SPDX-License-Identifier: Apache-2.0

//! PNG reading and writing for frames, masks and entropy maps.

use std::f64::consts::LN_2;
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::frame::Mask;
use crate::tensor::Grid;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::Image {
            path: path.to_path_buf(),
            source: other,
        },
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(|e| image_err(path, e))?.to_rgb8())
}

/// `(height, width)` read from the file header only.
pub fn read_dims(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|e| image_err(path, e))?;
    Ok((h as usize, w as usize))
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    img.save(path).map_err(|e| image_err(path, e))
}

/// Masks are stored as 8-bit grayscale, 0 or 255.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let img = GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) != 0 { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Any grey level above 127 reads as vehicle.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    Grid::from_vec(
        h as usize,
        w as usize,
        img.pixels().map(|p| u8::from(p[0] > 127)).collect(),
    )
}

/// 16-bit grayscale with `value = entropy / ln 2 * 65535`.
pub fn write_entropy_png(path: &Path, entropy: &Grid<f64>) -> Result<()> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(entropy.width() as u32, entropy.height() as u32, |x, y| {
            let e = entropy.get(y as usize, x as usize);
            Luma([((e / LN_2).clamp(0.0, 1.0) * 65535.0).round() as u16])
        });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Little-endian `f64` array in NumPy `.npy` (version 1.0) format.
pub fn write_npy(path: &Path, grid: &Grid<f64>) -> Result<()> {
    let mut header = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        grid.height(),
        grid.width()
    );
    // Magic (6) + version (2) + length (2) + header must be a multiple of 64.
    let total = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - total % 64) % 64));
    header.push('\n');
    let mut bytes = Vec::with_capacity(10 + header.len() + grid.len() * 8);
    bytes.extend_from_slice(b"\x93NUMPY\x01\x00");
    bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    for v in grid.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
