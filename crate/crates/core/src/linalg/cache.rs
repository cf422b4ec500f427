//! Gram cache files.
//!
//! A cache is a directory holding `manifest.json` and `grams.bin`:
//!
//! ```text
//! manifest.json  {"format_version": 1, "absorb_bias": false,
//!                 "entries": [{"layer_id": 2, "n": 128, "sample_count": 6735, "byte_offset": 0}, ...]}
//! grams.bin      per entry, n·(n+1)/2 little-endian f64 values: the upper triangle
//!                in row-major order (row 0 columns 0..n, row 1 columns 1..n, ...),
//!                starting at byte_offset.
//! ```
//!
//! Entries must tile the payload exactly; any gap, overlap or trailing byte is
//! rejected. With `absorb_bias` each Gram carries one extra trailing unit, the
//! constant 1 appended to the captured features.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GramMatrix, Tensor2D};
use crate::error::{Error, Result};

pub const CACHE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "grams.bin";

/// Grams for every weighted layer of one network, keyed by layer index.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSet {
    pub absorb_bias: bool,
    pub grams: Vec<GramMatrix>,
}

impl GramSet {
    pub fn get(&self, layer_id: usize) -> Option<&GramMatrix> {
        self.grams.iter().find(|g| g.layer_id == layer_id)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    absorb_bias: bool,
    entries: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    layer_id: usize,
    n: usize,
    sample_count: u64,
    byte_offset: u64,
}

fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn write_cache(dir: &Path, set: &GramSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(set.grams.len());
    for g in &set.grams {
        entries.push(Entry {
            layer_id: g.layer_id,
            n: g.n(),
            sample_count: g.sample_count(),
            byte_offset: payload.len() as u64,
        });
        let c = g.matrix();
        for i in 0..g.n() {
            for j in i..g.n() {
                payload.extend_from_slice(&c.get(i, j).to_le_bytes());
            }
        }
    }
    let manifest = Manifest {
        format_version: CACHE_FORMAT_VERSION,
        absorb_bias: set.absorb_bias,
        entries,
    };
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&mpath, e))?;
    let ppath = dir.join(PAYLOAD_FILE);
    fs::write(&ppath, payload).map_err(|e| Error::io(&ppath, e))?;
    Ok(())
}

pub fn read_cache(dir: &Path) -> Result<GramSet> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("{}:{}", mpath.display(), e.line()), e.to_string()))?;
    if manifest.format_version != CACHE_FORMAT_VERSION {
        return Err(Error::parse(
            mpath.display().to_string(),
            format!("unsupported cache format_version {}", manifest.format_version),
        ));
    }
    let ppath = dir.join(PAYLOAD_FILE);
    let payload = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;

    let mut expected_offset = 0u64;
    let mut grams = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        if e.byte_offset != expected_offset {
            return Err(Error::parse(
                format!("{} entry for layer {}", mpath.display(), e.layer_id),
                format!("byte_offset {} but previous entry ends at {expected_offset}", e.byte_offset),
            ));
        }
        let bytes = packed_len(e.n) as u64 * 8;
        let end = expected_offset + bytes;
        if end > payload.len() as u64 {
            return Err(Error::parse(
                format!("{} byte {}", ppath.display(), payload.len()),
                format!("payload truncated: layer {} needs bytes up to {end}", e.layer_id),
            ));
        }
        let mut vals = payload[expected_offset as usize..end as usize]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
        let mut c = Tensor2D::zeros(e.n, e.n);
        for i in 0..e.n {
            for j in i..e.n {
                let v = vals.next().expect("sized above");
                c.set(i, j, v);
                c.set(j, i, v);
            }
        }
        grams.push(GramMatrix::from_parts(e.layer_id, c, e.sample_count)?);
        expected_offset = end;
    }
    if expected_offset != payload.len() as u64 {
        return Err(Error::parse(
            format!("{} byte {expected_offset}", ppath.display()),
            format!("{} trailing bytes after last entry", payload.len() as u64 - expected_offset),
        ));
    }
    Ok(GramSet {
        absorb_bias: manifest.absorb_bias,
        grams,
    })
}
