// SPDX-License-Identifier: Apache-2.0

//! Resolves a `--data` directory into named frame sets.
//!
//! Recognized layouts, tried in order:
//! 1. a synthetic directory (`NNNN_img.png` + `NNNN_mask.png`): one set;
//! 2. a sequence directory holding `Images/` (and optionally `Labels/`): one set;
//! 3. a directory whose subdirectories are layout 1 or 2: one set each,
//!    in natural order;
//! 4. a directory of numbered PNG frames: one unlabelled set.

use std::path::{Path, PathBuf};

use sanet_core::data::imageio;
use sanet_core::data::synthetic::{is_synthetic_dir, load_synthetic_dir};
use sanet_core::data::uavid::{self, frame_index_of, natural_cmp, FrameRecord, IMAGES_DIR, LABELS_DIR};
use sanet_core::data::LabelPalette;
use sanet_core::frame::center_crop_window;
use sanet_core::model::backbone::INPUT_MULTIPLE;
use sanet_core::train::{EvalFrame, EvalSet};
use sanet_core::{Error, ImageTensor, Result};

use crate::args::DataArgs;

pub fn load_sets(args: &DataArgs) -> Result<Vec<EvalSet>> {
    let root = &args.data;
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "data directory not found"),
        ));
    }
    let palette = args.palette.as_deref().map(LabelPalette::load).transpose()?;
    if let Some(set) = load_one(root, palette.as_ref(), args.tile)? {
        return Ok(vec![set]);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort_by(|a, b| natural_cmp(&dir_name(a), &dir_name(b)));
    let mut sets = Vec::new();
    for dir in subdirs {
        if let Some(set) = load_one(&dir, palette.as_ref(), args.tile)? {
            sets.push(set);
        }
    }
    if sets.is_empty() {
        let frames = numbered_pngs(root)?;
        if frames.is_empty() {
            return Err(Error::Data(format!("{} holds no recognizable frames", root.display())));
        }
        sets.push(unlabelled_set(dir_name(root), frames, args.tile)?);
    }
    Ok(sets)
}

fn dir_name(p: &Path) -> String {
    p.canonicalize()
        .ok()
        .and_then(|c| c.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "data".into())
}

fn load_one(dir: &Path, palette: Option<&LabelPalette>, tile: Option<(usize, usize)>) -> Result<Option<EvalSet>> {
    if is_synthetic_dir(dir) {
        let frames = load_synthetic_dir(dir)?
            .into_iter()
            .map(|f| EvalFrame { index: f.index, image: f.image, mask: Some(f.mask) })
            .collect();
        return Ok(Some(EvalSet { name: dir_name(dir), frames }));
    }
    if !dir.join(IMAGES_DIR).is_dir() {
        return Ok(None);
    }
    let images = numbered_pngs(&dir.join(IMAGES_DIR))?;
    let has_labels = dir.join(LABELS_DIR).is_dir();
    let Some(palette) = palette.filter(|_| has_labels) else {
        return unlabelled_set(dir_name(dir), images, tile).map(Some);
    };
    let mut frames = Vec::with_capacity(images.len());
    for (index, image_path) in images {
        let label = dir.join(LABELS_DIR).join(image_path.file_name().expect("file"));
        let record = FrameRecord {
            label_path: label.is_file().then_some(label),
            image_path,
            sequence_id: dir_name(dir),
            frame_index: index,
        };
        let (image, mask) = uavid::load_frame(&record, palette, tile)?;
        frames.push(EvalFrame { index, image, mask });
    }
    Ok(Some(EvalSet { name: dir_name(dir), frames }))
}

fn numbered_pngs(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out: Vec<(u64, PathBuf)> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .filter_map(|p| frame_index_of(&p).map(|i| (i, p)))
        .collect();
    out.sort();
    if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Data(format!("{} has two frames with index {}", dir.display(), w[0].0)));
    }
    Ok(out)
}

fn unlabelled_set(name: String, frames: Vec<(u64, PathBuf)>, tile: Option<(usize, usize)>) -> Result<EvalSet> {
    let mut set = EvalSet { name, frames: Vec::with_capacity(frames.len()) };
    for (index, path) in frames {
        let rgb = imageio::read_rgb(&path)?;
        let (top, left, h, w) = center_crop_window(rgb.height() as usize, rgb.width() as usize, INPUT_MULTIPLE, tile)?;
        let image = ImageTensor::from_rgb8(&uavid::crop_rgb(&rgb, top, left, h, w));
        set.frames.push(EvalFrame { index, image, mask: None });
    }
    Ok(set)
}
