// SPDX-License-Identifier: Apache-2.0

use image::{Rgb, RgbImage};
use sanet_core::Mask;

pub const OVERLAY_RED: [u8; 3] = [255, 0, 0];
pub const OVERLAY_BLEND: f32 = 0.5;

/// Blends `OVERLAY_RED` into every masked pixel; other pixels are copied.
pub fn overlay(frame: &RgbImage, mask: &Mask) -> RgbImage {
    assert_eq!(
        (frame.height() as usize, frame.width() as usize),
        mask.dims(),
        "overlay mask must match the frame"
    );
    let mut out = frame.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        if mask.get(y as usize, x as usize) != 0 {
            *px = Rgb(std::array::from_fn(|c| {
                ((1.0 - OVERLAY_BLEND) * px[c] as f32 + OVERLAY_BLEND * OVERLAY_RED[c] as f32).round() as u8
            }));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use sanet_core::Grid;

    fn frame() -> RgbImage {
        RgbImage::from_fn(4, 3, |x, y| Rgb([(x * 60) as u8, (y * 100) as u8, 7]))
    }

    #[test]
    fn empty_mask_copies_the_frame() {
        assert_eq!(overlay(&frame(), &Grid::filled(3, 4, 0)), frame());
    }

    #[test]
    fn full_mask_blends_every_pixel_towards_red() {
        let out = overlay(&frame(), &Grid::filled(3, 4, 1));
        for (a, b) in frame().pixels().zip(out.pixels()) {
            let expect: [u8; 3] = std::array::from_fn(|c| ((a[c] as f32 + OVERLAY_RED[c] as f32) / 2.0).round() as u8);
            assert_eq!(b.0, expect);
        }
        assert_eq!(out.get_pixel(0, 0).0, [128, 0, 4]);
    }
}
