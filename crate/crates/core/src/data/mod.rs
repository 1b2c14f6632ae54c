// SPDX-License-Identifier: Apache-2.0

//! Dataset ingestion, synthetic scenes and few-shot episodes.

pub mod episode;
pub mod imageio;
pub mod palette;
pub mod synthetic;
pub mod uavid;

pub use episode::{sample_episode, Episode, TaskSpec};
pub use palette::{decode_label, encode_mask, LabelPalette};
pub use synthetic::{generate_synthetic, LabeledFrame, SyntheticSceneConfig};
pub use uavid::{load_frame, load_uavid_split, FrameRecord, Sequence};
