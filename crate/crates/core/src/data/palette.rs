// SPDX-License-Identifier: Apache-2.0

//! Colour-coded label images and their decoding into vehicle masks.
//!
//! Palette files are JSON:
//!
//! ```json
//! { "classes": { "building": [r, g, b], "static car": [r, g, b], ... },
//!   "vehicle_classes": ["static car", "moving car"] }
//! ```
//!
//! No colours are built in. A class listed with an empty array is treated
//! as "not filled in yet" and rejected at load time.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Mask;
use crate::tensor::Grid;

pub const DEFAULT_VEHICLE_CLASSES: [&str; 2] = ["static car", "moving car"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelPalette {
    pub classes: BTreeMap<String, Vec<u8>>,
    #[serde(default = "default_vehicle_classes")]
    pub vehicle_classes: Vec<String>,
}

fn default_vehicle_classes() -> Vec<String> {
    DEFAULT_VEHICLE_CLASSES.iter().map(|s| s.to_string()).collect()
}

impl LabelPalette {
    pub fn new(classes: &[(&str, [u8; 3])], vehicle_classes: &[&str]) -> Result<Self> {
        let palette = LabelPalette {
            classes: classes.iter().map(|(n, c)| (n.to_string(), c.to_vec())).collect(),
            vehicle_classes: vehicle_classes.iter().map(|s| s.to_string()).collect(),
        };
        palette.validate()?;
        Ok(palette)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let palette: LabelPalette = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        palette.validate()?;
        Ok(palette)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: HashMap<[u8; 3], &str> = HashMap::new();
        for (name, rgb) in &self.classes {
            let rgb = self.rgb_of(name, rgb)?;
            if let Some(other) = seen.insert(rgb, name) {
                return Err(Error::Config(format!(
                    "classes `{other}` and `{name}` share colour {rgb:?}"
                )));
            }
        }
        if self.vehicle_classes.is_empty() {
            return Err(Error::Config("vehicle_classes must not be empty".into()));
        }
        if let Some(missing) = self.vehicle_classes.iter().find(|v| !self.classes.contains_key(*v)) {
            return Err(Error::Config(format!(
                "vehicle class `{missing}` is not defined in the palette"
            )));
        }
        if self.classes.len() < 2 {
            return Err(Error::Config("a palette needs at least two classes".into()));
        }
        Ok(())
    }

    fn rgb_of(&self, name: &str, rgb: &[u8]) -> Result<[u8; 3]> {
        match rgb {
            [] => Err(Error::Config(format!(
                "class `{name}` has no colour yet; fill the palette from the dataset documentation"
            ))),
            [r, g, b] => Ok([*r, *g, *b]),
            _ => Err(Error::Config(format!(
                "class `{name}` colour must have 3 components, got {}",
                rgb.len()
            ))),
        }
    }

    pub fn color(&self, class: &str) -> Option<[u8; 3]> {
        self.classes.get(class).and_then(|c| self.rgb_of(class, c).ok())
    }

    /// Colour to vehicle flag.
    pub fn lookup(&self) -> HashMap<[u8; 3], bool> {
        self.classes
            .iter()
            .filter_map(|(name, c)| {
                let rgb = self.rgb_of(name, c).ok()?;
                Some((rgb, self.vehicle_classes.contains(name)))
            })
            .collect()
    }
}

/// Maps every pixel to 1 if its colour belongs to a vehicle class, else 0.
/// Colours outside the palette are a data error.
pub fn decode_label(label: &RgbImage, palette: &LabelPalette) -> Result<Mask> {
    let lookup = palette.lookup();
    let (w, h) = label.dimensions();
    let mut mask = Grid::filled(h as usize, w as usize, 0u8);
    for (x, y, px) in label.enumerate_pixels() {
        match lookup.get(&px.0) {
            Some(&vehicle) => mask.set(y as usize, x as usize, u8::from(vehicle)),
            None => {
                return Err(Error::Data(format!(
                    "label colour ({}, {}, {}) at pixel ({x}, {y}) is not in the palette",
                    px[0], px[1], px[2]
                )))
            }
        }
    }
    Ok(mask)
}

/// Paints a mask with `vehicle_class` on set pixels and `background_class`
/// elsewhere.
pub fn encode_mask(
    mask: &Mask,
    palette: &LabelPalette,
    vehicle_class: &str,
    background_class: &str,
) -> Result<RgbImage> {
    let fg = palette
        .color(vehicle_class)
        .ok_or_else(|| Error::Argument(format!("unknown class `{vehicle_class}`")))?;
    let bg = palette
        .color(background_class)
        .ok_or_else(|| Error::Argument(format!("unknown class `{background_class}`")))?;
    Ok(RgbImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Rgb(if mask.get(y as usize, x as usize) != 0 { fg } else { bg })
    }))
}
