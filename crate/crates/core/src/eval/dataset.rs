use std::path::Path;

use rand::{seq::index, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tensor2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Calibration,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, num_classes: usize },
    Regression(Vec<f64>),
    /// Synthetic inputs such as white noise.
    None,
}

impl Targets {
    fn len(&self) -> Option<usize> {
        match self {
            Targets::Classes { labels, .. } => Some(labels.len()),
            Targets::Regression(v) => Some(v.len()),
            Targets::None => None,
        }
    }

    fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes { labels, num_classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Targets::Regression(v) => Targets::Regression(idx.iter().map(|&i| v[i]).collect()),
            Targets::None => Targets::None,
        }
    }
}

/// Sample-major inputs (`samples x features`) with optional targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Tensor2D,
    targets: Targets,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: Tensor2D, targets: Targets, split: Split) -> Result<Self> {
        if let Some(n) = targets.len() {
            if n != inputs.rows() {
                return Err(Error::Shape(format!("{} samples but {n} targets", inputs.rows())));
            }
        }
        if let Targets::Classes { labels, num_classes } = &targets {
            if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= *num_classes) {
                return Err(Error::Data(format!(
                    "sample {i}: label {l} outside {num_classes} classes"
                )));
            }
        }
        Ok(Self { inputs, targets, split })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Tensor2D {
        &self.inputs
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            inputs: self.inputs.select_rows(idx)?,
            targets: self.targets.select(idx),
            split: self.split,
        })
    }

    /// `x ← (x·scale − mean) / std` on every input value.
    pub fn normalize(&mut self, p: &Preprocess) -> Result<()> {
        if !(p.std > 0.0) || !p.scale.is_finite() || !p.mean.is_finite() {
            return Err(Error::Contract(format!("invalid preprocessing {p:?}")));
        }
        for v in self.inputs.data_mut() {
            *v = (*v * p.scale - p.mean) / p.std;
        }
        Ok(())
    }
}

/// Scalar input normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocess {
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub std: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            scale: 1.0,
            mean: 0.0,
            std: 1.0,
        }
    }
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug)]
struct IdxArray {
    dims: Vec<usize>,
    data: Vec<u8>,
}

fn at_byte(pos: usize, message: impl Into<String>) -> Error {
    Error::parse(format!("byte {pos}"), message)
}

fn be_u32(bytes: &[u8], pos: usize) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| at_byte(pos, "unexpected end of header"))
}

fn parse_idx(bytes: &[u8], magic: u32) -> Result<IdxArray> {
    let found = be_u32(bytes, 0)?;
    if found != magic {
        return Err(at_byte(0, format!("bad magic 0x{found:08x}, expected 0x{magic:08x}")));
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    let mut total: usize = 1;
    for d in 0..ndims {
        let pos = 4 + 4 * d;
        let v = be_u32(bytes, pos)? as usize;
        total = total
            .checked_mul(v)
            .ok_or_else(|| at_byte(pos, "dimension product overflows"))?;
        dims.push(v);
    }
    let start = 4 + 4 * ndims;
    let end = start
        .checked_add(total)
        .ok_or_else(|| at_byte(start, "dimension product overflows"))?;
    if bytes.len() < end {
        return Err(at_byte(
            bytes.len(),
            format!("payload truncated: header declares {total} bytes, {} present", bytes.len() - start),
        ));
    }
    if bytes.len() > end {
        return Err(at_byte(end, "trailing bytes after payload"));
    }
    Ok(IdxArray {
        dims,
        data: bytes[start..end].to_vec(),
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { position, message } => Error::Parse {
            position: format!("{} {position}", path.display()),
            message,
        },
        other => other,
    }
}

/// Raw IDX images (pixel values 0..=255, one flattened image per row) and,
/// when given, their labels.
pub fn load_idx(images: &Path, labels: Option<&Path>, num_classes: usize, split: Split) -> Result<Dataset> {
    let img = parse_idx(&read_file(images)?, IDX_IMAGES_MAGIC).map_err(|e| with_path(images, e))?;
    let (count, features) = (img.dims[0], img.dims[1] * img.dims[2]);
    let inputs = Tensor2D::new(count, features, img.data.iter().map(|&b| b as f64).collect())?;
    let targets = match labels {
        None => Targets::None,
        Some(p) => {
            let lab = parse_idx(&read_file(p)?, IDX_LABELS_MAGIC).map_err(|e| with_path(p, e))?;
            if lab.dims[0] != count {
                return Err(Error::Data(format!(
                    "{} holds {} labels for {count} images",
                    p.display(),
                    lab.dims[0]
                )));
            }
            if let Some(i) = lab.data.iter().position(|&l| l as usize >= num_classes) {
                return Err(with_path(
                    p,
                    at_byte(8 + i, format!("label {} outside {num_classes} classes", lab.data[i])),
                ));
            }
            Targets::Classes {
                labels: lab.data.iter().map(|&l| l as usize).collect(),
                num_classes,
            }
        }
    };
    Dataset::new(inputs, targets, split)
}

/// One sample per line, target in the first column. With `num_classes` the
/// target is a class index, otherwise a regression value.
pub fn load_csv(path: &Path, num_classes: Option<usize>, split: Split) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(file);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let bad = |msg: String| Error::parse(format!("{} line {line}", path.display()), msg);
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() < 2 {
            return Err(bad("need a target and at least one feature".into()));
        }
        match width {
            None => width = Some(rec.len() - 1),
            Some(w) if w != rec.len() - 1 => {
                return Err(bad(format!("{} features, earlier lines have {w}", rec.len() - 1)))
            }
            _ => {}
        }
        let target = rec[0].trim();
        match num_classes {
            Some(k) => {
                let l: usize = target.parse().map_err(|_| bad(format!("label {target:?} is not a class index")))?;
                if l >= k {
                    return Err(bad(format!("label {l} outside {k} classes")));
                }
                labels.push(l);
            }
            None => values.push(target.parse::<f64>().map_err(|_| bad(format!("target {target:?} is not a number")))?),
        }
        for (c, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("column {}: {field:?} is not a number", c + 1)))?;
            if !v.is_finite() {
                return Err(bad(format!("column {}: non-finite value", c + 1)));
            }
            data.push(v);
        }
    }
    let rows = labels.len().max(values.len());
    let inputs = Tensor2D::new(rows, width.unwrap_or(0), data)?;
    let targets = match num_classes {
        Some(num_classes) => Targets::Classes { labels, num_classes },
        None => Targets::Regression(values),
    };
    Dataset::new(inputs, targets, split)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleCount {
    All,
    Count(usize),
}

/// Seeded subset without replacement, kept in the parent's order. The parent is untouched.
pub fn sample_calibration(ds: &Dataset, n: SampleCount, seed: u64) -> Result<Dataset> {
    match n {
        SampleCount::All => Ok(ds.clone()),
        SampleCount::Count(k) if k > ds.len() => Err(Error::Contract(format!(
            "requested {k} calibration samples from a dataset of {}",
            ds.len()
        ))),
        SampleCount::Count(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = index::sample(&mut rng, ds.len(), k).into_vec();
            idx.sort_unstable();
            let mut out = ds.select(&idx)?;
            out.split = Split::Calibration;
            Ok(out)
        }
    }
}

/// `n x features` standard-normal inputs, for calibrating without data.
pub fn white_noise(n: usize, features: usize, seed: u64) -> Tensor2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * features).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor2D::new(n, features, data).expect("finite by construction")
}
