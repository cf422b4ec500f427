//! `.snm` model directories.
//!
//! A model is a directory with two files:
//!
//! - `manifest.json`: `format_version`, `dtype` (always `"f32"`), `input_shape`
//!   (`[features]` or `[channels, height, width]`) and the ordered `layers`.
//!   Weighted layers carry `weight` and `bias` tensor references
//!   `{"byte_offset": .., "shape": [..]}`.
//! - `tensors.bin`: little-endian f32 values, row-major. Dense weights are
//!   `(out, in)`, conv kernels `(out_ch, in_ch, kH, kW)`. Tensors are laid out
//!   back to back in layer order, weight before bias, with no padding.
//!
//! ```json
//! {"format_version": 1, "dtype": "f32", "input_shape": [64],
//!  "layers": [{"kind": "dense", "in_features": 64, "out_features": 128,
//!              "weight": {"byte_offset": 0, "shape": [128, 64]},
//!              "bias": {"byte_offset": 32768, "shape": [128]}},
//!             {"kind": "relu"}]}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{ActShape, Conv2d, Dense, Layer};
use super::network::{compose, Network};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.json";
const TENSORS_FILE: &str = "tensors.bin";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    dtype: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayerEntry {
    Dense {
        in_features: usize,
        out_features: usize,
        weight: TensorRef,
        bias: TensorRef,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: [usize; 2],
        stride: usize,
        padding: usize,
        weight: TensorRef,
        bias: TensorRef,
    },
    Relu,
    Flatten,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRef {
    byte_offset: u64,
    shape: Vec<usize>,
}

struct Payload {
    bytes: Vec<u8>,
}

impl Payload {
    fn push(&mut self, values: &[f32], shape: Vec<usize>) -> TensorRef {
        let r = TensorRef {
            byte_offset: self.bytes.len() as u64,
            shape,
        };
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        r
    }
}

pub fn save_model(net: &Network, dir: &Path) -> Result<()> {
    let mut payload = Payload { bytes: Vec::new() };
    let layers = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => LayerEntry::Dense {
                in_features: d.in_features,
                out_features: d.out_features,
                weight: payload.push(&d.weight, vec![d.out_features, d.in_features]),
                bias: payload.push(&d.bias, vec![d.out_features]),
            },
            Layer::Conv2d(c) => LayerEntry::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel_size: c.kernel,
                stride: c.stride,
                padding: c.padding,
                weight: payload.push(
                    &c.weight,
                    vec![c.out_channels, c.in_channels, c.kernel[0], c.kernel[1]],
                ),
                bias: payload.push(&c.bias, vec![c.out_channels]),
            },
            Layer::Relu => LayerEntry::Relu,
            Layer::Flatten => LayerEntry::Flatten,
        })
        .collect();
    let manifest = Manifest {
        format_version: MODEL_FORMAT_VERSION,
        dtype: "f32".into(),
        input_shape: net.input_shape().into(),
        layers,
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&mpath, e))?;
    let tpath = dir.join(TENSORS_FILE);
    fs::write(&tpath, &payload.bytes).map_err(|e| Error::io(&tpath, e))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    cursor: u64,
}

impl Reader<'_> {
    fn take(&mut self, layer: usize, what: &str, r: &TensorRef, expect: &[usize]) -> Result<Vec<f32>> {
        if r.shape != expect {
            return Err(Error::load(
                Some(layer),
                format!("{what} shape {:?} disagrees with declared dims {:?}", r.shape, expect),
            ));
        }
        if r.byte_offset != self.cursor {
            return Err(Error::load(
                Some(layer),
                format!("{what} byte_offset {} but expected {}", r.byte_offset, self.cursor),
            ));
        }
        let count = expect.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let end = count
            .and_then(|c| c.checked_mul(4))
            .and_then(|b| self.cursor.checked_add(b as u64))
            .filter(|&e| e <= self.bytes.len() as u64)
            .ok_or_else(|| {
                Error::load(
                    Some(layer),
                    format!("{what} runs past the end of tensors.bin ({} bytes)", self.bytes.len()),
                )
            })?;
        let vals: Vec<f32> = self.bytes[self.cursor as usize..end as usize]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
            .collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::load(Some(layer), format!("{what} value {i} is not finite")));
        }
        self.cursor = end;
        Ok(vals)
    }
}

pub fn load_model(dir: &Path) -> Result<Network> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::load(None, format!("malformed manifest: {e}")))?;
    if manifest.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::load(
            None,
            format!("unsupported format_version {}", manifest.format_version),
        ));
    }
    if manifest.dtype != "f32" {
        return Err(Error::load(None, format!("unsupported dtype {:?}", manifest.dtype)));
    }
    if manifest.layers.is_empty() {
        return Err(Error::load(None, "model has no layers"));
    }
    let input_shape = ActShape::try_from(manifest.input_shape).map_err(|m| Error::load(None, m))?;
    let tpath = dir.join(TENSORS_FILE);
    let bytes = fs::read(&tpath).map_err(|e| Error::io(&tpath, e))?;
    let mut rd = Reader {
        bytes: &bytes,
        cursor: 0,
    };

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, entry) in manifest.layers.iter().enumerate() {
        let layer = match entry {
            LayerEntry::Dense {
                in_features,
                out_features,
                weight,
                bias,
            } => {
                let w = rd.take(i, "weight", weight, &[*out_features, *in_features])?;
                let b = rd.take(i, "bias", bias, &[*out_features])?;
                Layer::Dense(Dense::new(*in_features, *out_features, w, b).map_err(|e| Error::load(Some(i), e.to_string()))?)
            }
            LayerEntry::Conv2d {
                in_channels,
                out_channels,
                kernel_size,
                stride,
                padding,
                weight,
                bias,
            } => {
                let w = rd.take(
                    i,
                    "weight",
                    weight,
                    &[*out_channels, *in_channels, kernel_size[0], kernel_size[1]],
                )?;
                let b = rd.take(i, "bias", bias, &[*out_channels])?;
                Layer::Conv2d(
                    Conv2d::new(*in_channels, *out_channels, *kernel_size, *stride, *padding, w, b)
                        .map_err(|e| Error::load(Some(i), e.to_string()))?,
                )
            }
            LayerEntry::Relu => Layer::Relu,
            LayerEntry::Flatten => Layer::Flatten,
        };
        layers.push(layer);
    }
    if rd.cursor != bytes.len() as u64 {
        return Err(Error::load(
            None,
            format!(
                "tensors.bin has {} bytes but the manifest accounts for {}",
                bytes.len(),
                rd.cursor
            ),
        ));
    }
    compose(input_shape, &layers).map_err(|(i, m)| Error::load(Some(i), m))?;
    Network::new(input_shape, layers)
}
