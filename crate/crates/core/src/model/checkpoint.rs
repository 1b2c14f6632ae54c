// SPDX-License-Identifier: Apache-2.0

//! Single-file parameter archive.
//!
//! Layout (all integers little-endian):
//!
//! | bytes            | content                                   |
//! |------------------|-------------------------------------------|
//! | 0..8             | magic `SANETCKP`                          |
//! | 8..12            | `u32` format version (currently 1)        |
//! | 12..20           | `u64` header length `L` in bytes          |
//! | 20..20+L         | UTF-8 JSON header                         |
//! | 20+L..           | `f32` payload, arrays back to back        |
//!
//! The JSON header carries `format_version`, the `model` config, the
//! init `seed`, free-form `metadata`, and an `arrays` index of
//! `{name, kind, shape, offset, len}` where `kind` is `weight` or
//! `buffer` and `offset`/`len` count `f32` values into the payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::network::Network;
use crate::model::params::{ModelParams, ParamStore};
use crate::tensor::Tensor;

pub const ARCHIVE_MAGIC: &[u8; 8] = b"SANETCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ArrayKind {
    Weight,
    Buffer,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    kind: ArrayKind,
    shape: [usize; 4],
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    seed: u64,
    metadata: serde_json::Value,
    arrays: Vec<ArrayEntry>,
}

pub fn write_archive<W: Write>(
    mut out: W,
    params: &ModelParams<f32>,
    metadata: &serde_json::Value,
) -> std::io::Result<()> {
    let mut arrays = Vec::new();
    let mut offset = 0;
    let stores = [
        (ArrayKind::Weight, &params.weights),
        (ArrayKind::Buffer, &params.buffers),
    ];
    for (kind, store) in stores {
        for (name, t) in store.iter() {
            arrays.push(ArrayEntry {
                name: name.clone(),
                kind,
                shape: t.shape(),
                offset,
                len: t.len(),
            });
            offset += t.len();
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        model: params.config.clone(),
        seed: params.seed,
        metadata: metadata.clone(),
        arrays,
    };
    let header = serde_json::to_vec(&header)?;
    out.write_all(ARCHIVE_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for (_, store) in stores {
        for (_, t) in store.iter() {
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()
}

pub fn read_archive<R: Read>(mut input: R) -> Result<(ModelParams<f32>, serde_json::Value)> {
    let fmt = |e: std::io::Error| Error::Format(format!("truncated archive: {e}"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(fmt)?;
    if &magic != ARCHIVE_MAGIC {
        return Err(Error::Format("not a checkpoint archive (bad magic)".into()));
    }
    let mut u32buf = [0u8; 4];
    input.read_exact(&mut u32buf).map_err(fmt)?;
    let version = u32::from_le_bytes(u32buf);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported archive version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let mut u64buf = [0u8; 8];
    input.read_exact(&mut u64buf).map_err(fmt)?;
    let header_len = u64::from_le_bytes(u64buf) as usize;
    let mut header = vec![0u8; header_len];
    input.read_exact(&mut header).map_err(fmt)?;
    let header: Header = serde_json::from_slice(&header)
        .map_err(|e| Error::Format(format!("bad archive header: {e}")))?;
    header
        .model
        .validate()
        .map_err(|e| Error::Format(format!("archive holds an invalid model config: {e}")))?;

    let mut payload = Vec::new();
    input.read_to_end(&mut payload).map_err(fmt)?;
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let mut weights = ParamStore::new();
    let mut buffers = ParamStore::new();
    for entry in &header.arrays {
        let end = entry.offset + entry.len;
        if end > values.len() || entry.shape.iter().product::<usize>() != entry.len {
            return Err(Error::Format(format!("array `{}` is out of range", entry.name)));
        }
        let t = Tensor::from_vec(entry.shape, values[entry.offset..end].to_vec())?;
        match entry.kind {
            ArrayKind::Weight => weights.insert(entry.name.clone(), t),
            ArrayKind::Buffer => buffers.insert(entry.name.clone(), t),
        }
    }

    let params = ModelParams {
        config: header.model,
        seed: header.seed,
        weights,
        buffers,
    };
    check_layout(&params)?;
    Ok((params, header.metadata))
}

/// Every array the architecture expects is present with the right shape.
fn check_layout(params: &ModelParams<f32>) -> Result<()> {
    let reference: ModelParams<f32> = Network::new(&params.config)?.init();
    for (expected, actual) in [
        (&reference.weights, &params.weights),
        (&reference.buffers, &params.buffers),
    ] {
        if expected.len() != actual.len() {
            return Err(Error::Format(format!(
                "archive has {} arrays where the model config needs {}",
                actual.len(),
                expected.len()
            )));
        }
        for (name, t) in expected.iter() {
            let found = actual.get(name)?;
            if found.shape() != t.shape() {
                return Err(Error::Format(format!(
                    "array `{name}` has shape {:?}, model config needs {:?}",
                    found.shape(),
                    t.shape()
                )));
            }
        }
    }
    Ok(())
}

pub fn save_archive(
    path: &Path,
    params: &ModelParams<f32>,
    metadata: &serde_json::Value,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_archive(BufWriter::new(file), params, metadata).map_err(|e| Error::io(path, e))
}

pub fn load_archive(path: &Path) -> Result<(ModelParams<f32>, serde_json::Value)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_archive(BufReader::new(file))
}
