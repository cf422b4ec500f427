use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Preprocess, SampleCount};
use crate::linalg::DEFAULT_RIDGE_SCALE;
use crate::pruning::{PruneMode, PruneSpec, ScoreMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Idx,
    Csv,
}

/// IDX: `path` holds images and `labels` the label file. CSV: `path` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub path: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub format: DataFormat,
    /// Class count; omit for regression targets (CSV only).
    #[serde(default)]
    pub num_classes: Option<usize>,
    #[serde(default)]
    pub preprocess: Preprocess,
    #[serde(default)]
    pub calibration: Option<DataSource>,
    #[serde(default)]
    pub test: Option<DataSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "all_samples", with = "sample_count")]
    pub samples: SampleCount,
    #[serde(default)]
    pub white_noise: bool,
}

fn all_samples() -> SampleCount {
    SampleCount::All
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            samples: SampleCount::All,
            white_noise: false,
        }
    }
}

/// `"all"` or a sample count.
mod sample_count {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    use crate::eval::SampleCount;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Count(usize),
        Word(String),
    }

    pub fn serialize<S: Serializer>(v: &SampleCount, s: S) -> Result<S::Ok, S::Error> {
        match v {
            SampleCount::All => Raw::Word("all".into()),
            SampleCount::Count(n) => Raw::Count(*n),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SampleCount, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(SampleCount::Count(n)),
            Raw::Word(w) if w == "all" => Ok(SampleCount::All),
            Raw::Word(w) => Err(de::Error::custom(format!("samples must be \"all\" or a count, got {w:?}"))),
        }
    }
}

pub fn parse_sample_count(s: &str) -> Result<SampleCount> {
    if s == "all" {
        return Ok(SampleCount::All);
    }
    s.parse()
        .map(SampleCount::Count)
        .map_err(|_| Error::Contract(format!("--samples must be \"all\" or a count, got {s:?}")))
}

fn default_method() -> ScoreMethod {
    ScoreMethod::UnnormZca
}

fn default_spec() -> PruneSpec {
    PruneSpec::uniform(0.5).expect("valid ratio")
}

fn default_true() -> bool {
    true
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE_SCALE
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_batch() -> usize {
    256
}

/// One JSON document describing a run. Relative paths resolve against the
/// directory of the config file; command-line flags override fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default = "default_method")]
    pub method: ScoreMethod,
    #[serde(default = "default_spec")]
    pub spec: PruneSpec,
    #[serde(default = "default_true")]
    pub reconstruct: bool,
    #[serde(default = "default_ridge")]
    pub ridge_scale: f64,
    #[serde(default)]
    pub absorb_bias: bool,
    /// Drives calibration subsampling, white noise and random scores.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub method: Option<ScoreMethod>,
    pub mode: Option<String>,
    pub ratio: Option<f64>,
    pub tau: Option<f64>,
    pub samples: Option<SampleCount>,
    pub white_noise: bool,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::parse(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(m) = cfg.model.as_mut() {
            resolve(base, m);
        }
        if let Some(d) = cfg.data.as_mut() {
            for src in [d.calibration.as_mut(), d.test.as_mut()].into_iter().flatten() {
                resolve(base, &mut src.path);
                if let Some(l) = src.labels.as_mut() {
                    resolve(base, l);
                }
            }
        }
        resolve(base, &mut cfg.out);
        Ok(cfg)
    }

    /// Flags win over the file. `--ratio` or `--tau` alone imply their mode.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(s) = o.samples {
            self.calibration.samples = s;
        }
        if o.white_noise {
            self.calibration.white_noise = true;
        }
        if let Some(m) = &o.model {
            self.model = Some(m.clone());
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        let mode = o.mode.as_deref().or(if o.ratio.is_some() {
            Some("uniform")
        } else if o.tau.is_some() {
            Some("variance_cutoff")
        } else {
            None
        });
        let min_keep = self.spec.min_keep;
        match mode {
            None => {}
            Some("uniform") => {
                let ratio = match (o.ratio, &self.spec.mode) {
                    (Some(r), _) => r,
                    (None, PruneMode::Uniform { ratio }) => *ratio,
                    (None, _) => return Err(Error::Contract("--mode uniform needs --ratio".into())),
                };
                self.spec = PruneSpec::new(PruneMode::Uniform { ratio }, min_keep)?;
            }
            Some("variance_cutoff") => {
                let tau = match (o.tau, &self.spec.mode) {
                    (Some(t), _) => t,
                    (None, PruneMode::VarianceCutoff { tau }) => *tau,
                    (None, _) => return Err(Error::Contract("--mode variance_cutoff needs --tau".into())),
                };
                self.spec = PruneSpec::new(PruneMode::VarianceCutoff { tau }, min_keep)?;
            }
            Some("explicit") => {
                if !matches!(self.spec.mode, PruneMode::Explicit { .. }) {
                    return Err(Error::Contract("explicit keep counts can only come from the config file".into()));
                }
            }
            Some(other) => {
                return Err(Error::Contract(format!(
                    "unknown mode {other:?} (expected uniform, variance_cutoff or explicit)"
                )))
            }
        }
        if (o.ratio.is_some() && mode != Some("uniform")) || (o.tau.is_some() && mode != Some("variance_cutoff")) {
            return Err(Error::Contract("--ratio goes with uniform mode and --tau with variance_cutoff".into()));
        }
        Ok(())
    }

    pub fn model_path(&self) -> Result<&Path> {
        self.model
            .as_deref()
            .ok_or_else(|| Error::Contract("no model given (set \"model\" in the config or pass --model)".into()))
    }

    /// Cheap checks run before any heavy work.
    pub fn validate(&self, needs_calibration: bool, needs_test: bool) -> Result<()> {
        let model = self.model_path()?;
        if !model.exists() {
            return Err(Error::io(model, std::io::ErrorKind::NotFound.into()));
        }
        if !(self.ridge_scale >= 0.0 && self.ridge_scale.is_finite()) {
            return Err(Error::Contract(format!("ridge_scale must be >= 0, got {}", self.ridge_scale)));
        }
        if self.batch_size == 0 {
            return Err(Error::Contract("batch_size must be positive".into()));
        }
        let mut sources = Vec::new();
        if needs_calibration && !self.calibration.white_noise {
            let d = self.data.as_ref().ok_or_else(|| {
                Error::Contract("calibration needs \"data.calibration\" or white noise".into())
            })?;
            sources.push(d.calibration.as_ref().ok_or_else(|| {
                Error::Contract("calibration needs \"data.calibration\" or white noise".into())
            })?);
        }
        if needs_test {
            if let Some(t) = self.data.as_ref().and_then(|d| d.test.as_ref()) {
                sources.push(t);
            }
        }
        for src in sources {
            for p in std::iter::once(&src.path).chain(src.labels.as_ref()) {
                if !p.exists() {
                    return Err(Error::io(p, std::io::ErrorKind::NotFound.into()));
                }
            }
        }
        if let Some(d) = &self.data {
            if d.format == DataFormat::Idx && d.num_classes.is_none() {
                return Err(Error::Contract("IDX data needs \"num_classes\"".into()));
            }
        }
        Ok(())
    }
}
