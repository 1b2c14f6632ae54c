// SPDX-License-Identifier: Apache-2.0

//! Seeded synthetic oblique scenes: textured ground clutter with
//! rectangular "vehicles" whose size grows from the top of the frame (far)
//! to the bottom (near).

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::imageio;
use crate::data::uavid::frame_index_of;
use crate::error::{Error, Result};
use crate::frame::{ImageTensor, Mask};
use crate::model::backbone::INPUT_MULTIPLE;
use crate::seed;
use crate::tensor::Grid;

/// Placement attempts per vehicle before giving up.
pub const PLACEMENT_RETRIES: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSceneConfig {
    /// `[height, width]`, both multiples of 32.
    pub image_dims: [usize; 2],
    /// Inclusive `[min, max]` number of vehicles per scene.
    pub vehicle_count_range: [usize; 2],
    /// Inclusive `[far, near]` length in pixels of a vehicle's long side.
    pub scale_range: [usize; 2],
    #[serde(default = "default_clutter")]
    pub clutter_density: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scenes")]
    pub num_scenes: usize,
}

fn default_clutter() -> f64 {
    0.3
}

fn default_scenes() -> usize {
    1
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        SyntheticSceneConfig {
            image_dims: [64, 64],
            vehicle_count_range: [1, 3],
            scale_range: [12, 20],
            clutter_density: default_clutter(),
            seed: 0,
            num_scenes: 1,
        }
    }
}

impl SyntheticSceneConfig {
    pub fn validate(&self) -> Result<()> {
        let [h, w] = self.image_dims;
        if h == 0 || w == 0 || !h.is_multiple_of(INPUT_MULTIPLE) || !w.is_multiple_of(INPUT_MULTIPLE) {
            return Err(Error::Config(format!(
                "image_dims {h}x{w} must be positive multiples of {INPUT_MULTIPLE}"
            )));
        }
        if self.vehicle_count_range[0] > self.vehicle_count_range[1] {
            return Err(Error::Config("vehicle_count_range is empty".into()));
        }
        let [lo, hi] = self.scale_range;
        if lo < 2 || lo > hi {
            return Err(Error::Config(format!(
                "scale_range [{lo}, {hi}] must be nonempty with a minimum of 2 pixels"
            )));
        }
        if hi > h.min(w) {
            return Err(Error::Config(format!("scale_range maximum {hi} exceeds the image")));
        }
        if !(0.0..=1.0).contains(&self.clutter_density) {
            return Err(Error::Config("clutter_density must lie in [0, 1]".into()));
        }
        if self.num_scenes == 0 {
            return Err(Error::Config("num_scenes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Axis-aligned vehicle rectangle in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Footprint {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Footprint {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    /// True if the rectangles overlap or touch (including diagonally).
    fn conflicts(&self, o: &Footprint) -> bool {
        self.top <= o.top + o.height
            && o.top <= self.top + self.height
            && self.left <= o.left + o.width
            && o.left <= self.left + self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub image: ImageTensor,
    pub mask: Mask,
    pub vehicles: Vec<Footprint>,
}

const VEHICLE_COLOURS: [[f32; 3]; 5] = [
    [0.92, 0.12, 0.10],
    [0.15, 0.30, 0.95],
    [0.95, 0.85, 0.15],
    [0.97, 0.97, 0.97],
    [0.10, 0.85, 0.90],
];

/// Generates `config.num_scenes` scenes; scene `i` draws from its own
/// stream derived from `config.seed`.
pub fn generate_synthetic(config: &SyntheticSceneConfig) -> Result<Vec<(ImageTensor, Mask)>> {
    config.validate()?;
    (0..config.num_scenes)
        .map(|i| generate_scene(config, i).map(|s| (s.image, s.mask)))
        .collect()
}

pub fn generate_scene(config: &SyntheticSceneConfig, index: usize) -> Result<SyntheticScene> {
    config.validate()?;
    let mut rng = seed::rng_for(config.seed, index as u64);
    let [h, w] = config.image_dims;
    let mut pixels = vec![[0f32; 3]; h * w];

    // Ground: a far-to-near brightness ramp with per-pixel grain.
    let base = [
        rng.random_range(0.30..0.40f32),
        rng.random_range(0.33..0.43f32),
        rng.random_range(0.28..0.36f32),
    ];
    for y in 0..h {
        let ramp = 0.85 + 0.15 * y as f32 / h as f32;
        for x in 0..w {
            let grain = rng.random_range(-0.03..0.03f32);
            pixels[y * w + x] = base.map(|c| c * ramp + grain);
        }
    }

    // Muted clutter patches (roofs, lawns, road markings).
    let patches = (config.clutter_density * (h * w) as f64 / 256.0).round() as usize;
    for _ in 0..patches {
        let ph = rng.random_range(3..=16.min(h));
        let pw = rng.random_range(3..=16.min(w));
        let top = rng.random_range(0..=h - ph);
        let left = rng.random_range(0..=w - pw);
        let grey = rng.random_range(0.2..0.55f32);
        let tint = [rng.random_range(-0.06..0.06f32), rng.random_range(-0.06..0.06f32), 0.0];
        for y in top..top + ph {
            for x in left..left + pw {
                pixels[y * w + x] = [grey + tint[0], grey + tint[1], grey + tint[2]];
            }
        }
    }

    let count = rng.random_range(config.vehicle_count_range[0]..=config.vehicle_count_range[1]);
    let [far, near] = config.scale_range;
    let mut vehicles: Vec<Footprint> = Vec::with_capacity(count);
    for v in 0..count {
        let mut placed = None;
        for _ in 0..PLACEMENT_RETRIES {
            let depth = rng.random_range(0.0..1.0f64);
            let long = (far as f64 + (near - far) as f64 * depth).round() as usize;
            let short = ((long as f64 * rng.random_range(0.45..0.65)).round() as usize).max(2);
            let (fh, fw) = if rng.random_bool(0.5) { (short, long) } else { (long, short) };
            if fh > h || fw > w {
                continue;
            }
            // Centre row follows depth so small vehicles sit near the top.
            let centre = depth * (h - fh) as f64;
            let jitter = rng.random_range(-0.1..0.1) * h as f64;
            let top = (centre + jitter).clamp(0.0, (h - fh) as f64).round() as usize;
            let left = rng.random_range(0..=w - fw);
            let candidate = Footprint { top, left, height: fh, width: fw };
            if vehicles.iter().all(|o| !candidate.conflicts(o)) {
                placed = Some(candidate);
                break;
            }
        }
        let fp = placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place vehicle {} of {count} without overlap after {PLACEMENT_RETRIES} attempts",
                v + 1
            ))
        })?;
        vehicles.push(fp);
    }

    let mut mask = Grid::filled(h, w, 0u8);
    for fp in &vehicles {
        let colour = VEHICLE_COLOURS[rng.random_range(0..VEHICLE_COLOURS.len())];
        let brightness = rng.random_range(0.85..1.0f32);
        for y in fp.top..fp.top + fp.height {
            for x in fp.left..fp.left + fp.width {
                let grain = rng.random_range(-0.02..0.02f32);
                pixels[y * w + x] = colour.map(|c| c * brightness + grain);
                mask.set(y, x, 1);
            }
        }
    }

    let hwc: Vec<f32> = pixels.iter().flat_map(|p| p.map(|c| c.clamp(0.0, 1.0))).collect();
    Ok(SyntheticScene {
        image: ImageTensor::from_hwc(h, w, &hwc)?,
        mask,
        vehicles,
    })
}

pub fn image_file_name(index: usize) -> String {
    format!("{index:04}_img.png")
}

pub fn mask_file_name(index: usize) -> String {
    format!("{index:04}_mask.png")
}

/// Writes `NNNN_img.png` / `NNNN_mask.png` pairs, numbered from 0.
pub fn write_synthetic_dir(dir: &Path, scenes: &[(ImageTensor, Mask)]) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(scenes.len() * 2);
    for (i, (image, mask)) in scenes.iter().enumerate() {
        let ip = dir.join(image_file_name(i));
        let mp = dir.join(mask_file_name(i));
        imageio::write_rgb(&ip, &image.to_rgb8())?;
        imageio::write_mask(&mp, mask)?;
        written.push(ip);
        written.push(mp);
    }
    Ok(written)
}

/// Labelled frame read from a synthetic directory.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFrame {
    pub index: u64,
    pub image: ImageTensor,
    pub mask: Mask,
}

/// Reads every `NNNN_img.png` in `dir` with its `NNNN_mask.png`, in index
/// order. A missing mask is a data error.
pub fn load_synthetic_dir(dir: &Path) -> Result<Vec<LabeledFrame>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indices = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with("_img.png") {
            if let Some(i) = frame_index_of(&path) {
                indices.push(i);
            }
        }
    }
    indices.sort_unstable();
    indices
        .into_iter()
        .map(|i| {
            let image_path = dir.join(image_file_name(i as usize));
            let mask_path = dir.join(mask_file_name(i as usize));
            if !mask_path.is_file() {
                return Err(Error::Data(format!("{} has no mask", image_path.display())));
            }
            let image = ImageTensor::from_rgb8(&imageio::read_rgb(&image_path)?);
            let mask = imageio::read_mask(&mask_path)?;
            if mask.dims() != image.dims() {
                return Err(Error::Data(format!("{} does not match its image size", mask_path.display())));
            }
            Ok(LabeledFrame { index: i, image, mask })
        })
        .collect()
}

/// True if `dir` directly holds synthetic image files.
pub fn is_synthetic_dir(dir: &Path) -> bool {
    std::fs::read_dir(dir).is_ok_and(|rd| {
        rd.flatten().any(|e| e.file_name().to_string_lossy().ends_with("_img.png"))
    })
}
