// SPDX-License-Identifier: Apache-2.0

//! Loader for UAVid-style sequence directories:
//!
//! ```text
//! root/
//!   seq1/
//!     Images/000000.png
//!     Images/000100.png
//!     Labels/000000.png      (optional, same file name as the image)
//!   seq2/
//!     ...
//! ```
//!
//! The frame index is the integer value of the file stem.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::imageio;
use crate::data::palette::{decode_label, LabelPalette};
use crate::error::{Error, Result};
use crate::frame::{center_crop_window, ImageTensor, Mask};
use crate::model::backbone::INPUT_MULTIPLE;
use crate::tensor::Grid;

pub const IMAGES_DIR: &str = "Images";
pub const LABELS_DIR: &str = "Labels";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameRecord {
    pub image_path: PathBuf,
    pub label_path: Option<PathBuf>,
    pub sequence_id: String,
    pub frame_index: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence {
    pub id: String,
    pub frames: Vec<FrameRecord>,
}

/// Orders `seq2` before `seq10`: compares the non-digit prefix, then the
/// trailing number, then the raw string.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (head, tail) = s.split_at(s.len() - digits);
        (head, tail.parse().ok())
    }
    let (ha, na) = split(a);
    let (hb, nb) = split(b);
    ha.cmp(hb).then(na.cmp(&nb)).then(a.cmp(b))
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    Ok(out)
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Frame index encoded in a file name such as `000120.png` or `0007_img.png`.
pub fn frame_index_of(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Enumerates every sequence under `root`. Each label is checked against
/// its image size and decoded through `palette`, so colour errors surface
/// here rather than mid-evaluation.
pub fn load_uavid_split(root: &Path, palette: &LabelPalette) -> Result<Vec<Sequence>> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root not found"),
        ));
    }
    let mut seq_dirs: Vec<PathBuf> = list_dir(root)?
        .into_iter()
        .filter(|p| p.join(IMAGES_DIR).is_dir())
        .collect();
    seq_dirs.sort_by(|a, b| natural_cmp(&file_name(a), &file_name(b)));

    let mut sequences = Vec::with_capacity(seq_dirs.len());
    for dir in seq_dirs {
        let id = file_name(&dir);
        let mut frames = Vec::new();
        for image_path in list_dir(&dir.join(IMAGES_DIR))?.into_iter().filter(|p| is_image_file(p)) {
            let frame_index = frame_index_of(&image_path).ok_or_else(|| {
                Error::Data(format!("{} has no numeric frame index", image_path.display()))
            })?;
            let label = dir.join(LABELS_DIR).join(image_path.file_name().unwrap());
            frames.push(FrameRecord {
                label_path: label.is_file().then_some(label),
                image_path,
                sequence_id: id.clone(),
                frame_index,
            });
        }
        frames.sort_by_key(|f| f.frame_index);
        if let Some(w) = frames.windows(2).find(|w| w[0].frame_index == w[1].frame_index) {
            return Err(Error::Data(format!(
                "sequence `{id}` has two frames with index {}",
                w[0].frame_index
            )));
        }
        frames
            .par_iter()
            .map(|f| validate_label(f, palette))
            .collect::<Result<Vec<()>>>()?;
        sequences.push(Sequence { id, frames });
    }
    Ok(sequences)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn validate_label(frame: &FrameRecord, palette: &LabelPalette) -> Result<()> {
    let Some(label_path) = &frame.label_path else {
        return Ok(());
    };
    let image_dims = imageio::read_dims(&frame.image_path)?;
    let label_dims = imageio::read_dims(label_path)?;
    if image_dims != label_dims {
        return Err(Error::Data(format!(
            "label {} is {}x{} but its image is {}x{}",
            label_path.display(),
            label_dims.0,
            label_dims.1,
            image_dims.0,
            image_dims.1
        )));
    }
    decode_label(&imageio::read_rgb(label_path)?, palette)
        .map_err(|e| Error::Data(format!("{}: {e}", label_path.display())))?;
    Ok(())
}

/// Cuts the centred `h x w` window out of an RGB buffer.
pub fn crop_rgb(img: &image::RgbImage, top: usize, left: usize, h: usize, w: usize) -> image::RgbImage {
    image::imageops::crop_imm(img, left as u32, top as u32, w as u32, h as u32).to_image()
}

pub fn crop_mask(mask: &Mask, top: usize, left: usize, h: usize, w: usize) -> Mask {
    let mut out = Grid::filled(h, w, 0u8);
    for y in 0..h {
        for x in 0..w {
            out.set(y, x, mask.get(top + y, left + x));
        }
    }
    out
}

/// Reads a frame (and its label, when present), centre-cropping both to
/// multiples of 32 no larger than `tile`.
pub fn load_frame(
    record: &FrameRecord,
    palette: &LabelPalette,
    tile: Option<(usize, usize)>,
) -> Result<(ImageTensor, Option<Mask>)> {
    let rgb = imageio::read_rgb(&record.image_path)?;
    let (h, w) = (rgb.height() as usize, rgb.width() as usize);
    let (top, left, ch, cw) = center_crop_window(h, w, INPUT_MULTIPLE, tile)?;
    let image = ImageTensor::from_rgb8(&crop_rgb(&rgb, top, left, ch, cw));
    let mask = match &record.label_path {
        Some(p) => {
            let m = decode_label(&imageio::read_rgb(p)?, palette)?;
            if m.dims() != (h, w) {
                return Err(Error::Data(format!("label {} does not match its image size", p.display())));
            }
            Some(crop_mask(&m, top, left, ch, cw))
        }
        None => None,
    };
    Ok((image, mask))
}
