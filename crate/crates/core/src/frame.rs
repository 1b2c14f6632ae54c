// SPDX-License-Identifier: Apache-2.0

//! Input images and binary masks.

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Grid, Tensor};

/// Per-pixel 0/1 vehicle labels.
pub type Mask = Grid<u8>;

/// An RGB frame with values in `[0, 1]`, stored channel-major as a
/// `[1, 3, H, W]` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    tensor: Tensor<f32>,
}

impl ImageTensor {
    /// Builds an image from interleaved `H x W x 3` values.
    pub fn from_hwc(height: usize, width: usize, hwc: &[f32]) -> Result<Self> {
        if hwc.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "{height}x{width}x3 image needs {} values, got {}",
                height * width * 3,
                hwc.len()
            )));
        }
        if let Some(bad) = hwc.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Argument(format!(
                "image values must be finite and in [0, 1], found {bad}"
            )));
        }
        let mut tensor = Tensor::zeros([1, 3, height, width]);
        let plane = height * width;
        for (i, px) in hwc.chunks_exact(3).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                tensor.data_mut()[c * plane + i] = v;
            }
        }
        Ok(ImageTensor { tensor })
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let (w, h) = (w as usize, h as usize);
        let mut tensor = Tensor::zeros([1, 3, h, w]);
        let plane = h * w;
        for (x, y, px) in img.enumerate_pixels() {
            let i = y as usize * w + x as usize;
            for c in 0..3 {
                tensor.data_mut()[c * plane + i] = px[c] as f32 / 255.0;
            }
        }
        ImageTensor { tensor }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let (h, w) = (self.height(), self.width());
        RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let p = self.pixel(y as usize, x as usize);
            Rgb(p.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8))
        })
    }

    pub fn height(&self) -> usize {
        self.tensor.height()
    }

    pub fn width(&self) -> usize {
        self.tensor.width()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        [0, 1, 2].map(|c| self.tensor.at(0, c, y, x))
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.tensor
    }
}

/// Offsets and size of a centred crop whose sides are multiples of
/// `multiple` and no larger than `max_tile` (when given).
pub fn center_crop_window(
    height: usize,
    width: usize,
    multiple: usize,
    max_tile: Option<(usize, usize)>,
) -> Result<(usize, usize, usize, usize)> {
    let (mut ch, mut cw) = (height, width);
    if let Some((th, tw)) = max_tile {
        ch = ch.min(th);
        cw = cw.min(tw);
    }
    ch -= ch % multiple;
    cw -= cw % multiple;
    if ch == 0 || cw == 0 {
        return Err(Error::Shape(format!(
            "a {height}x{width} frame is smaller than one {multiple}x{multiple} tile"
        )));
    }
    Ok(((height - ch) / 2, (width - cw) / 2, ch, cw))
}

/// Count of set pixels.
pub fn mask_area(mask: &Mask) -> usize {
    mask.data().iter().filter(|&&v| v != 0).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hwc_round_trip_and_validation() {
        let vals: Vec<f32> = (0..2 * 3 * 3).map(|i| i as f32 / 17.0).collect();
        let img = ImageTensor::from_hwc(2, 3, &vals).unwrap();
        assert_eq!(img.pixel(1, 2), [vals[15], vals[16], vals[17]]);
        assert!(matches!(ImageTensor::from_hwc(2, 3, &vals[1..]), Err(Error::Shape(_))));
        let mut bad = vals.clone();
        bad[4] = 1.5;
        assert!(matches!(ImageTensor::from_hwc(2, 3, &bad), Err(Error::Argument(_))));
    }

    #[test]
    fn rgb8_round_trip() {
        let img = RgbImage::from_fn(5, 4, |x, y| Rgb([x as u8 * 40, y as u8 * 50, 7]));
        assert_eq!(ImageTensor::from_rgb8(&img).to_rgb8(), img);
    }

    #[test]
    fn crop_window() {
        assert_eq!(center_crop_window(2160, 4096, 32, None).unwrap(), (8, 0, 2144, 4096));
        assert_eq!(
            center_crop_window(2160, 4096, 32, Some((512, 512))).unwrap(),
            (824, 1792, 512, 512)
        );
        assert_eq!(center_crop_window(64, 64, 32, Some((512, 512))).unwrap(), (0, 0, 64, 64));
        assert!(center_crop_window(20, 64, 32, None).is_err());
    }
}
