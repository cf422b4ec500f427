use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scores::{ImportanceScores, ScoreMethod};
use crate::error::{Error, Result};
use crate::linalg::{ldl_decompose_permuted, GramMatrix, Permutation, SubspaceFactor};

/// How many units each prunable layer keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum PruneMode {
    /// Prune the same fraction of units from every layer.
    Uniform { ratio: f64 },
    /// Keep the shortest prefix whose trailing subspace variance is below `tau`.
    VarianceCutoff { tau: f64 },
    /// Fixed keep counts per layer id; unlisted layers keep everything.
    Explicit { keep: BTreeMap<usize, usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct PruneSpec {
    pub mode: PruneMode,
    pub min_keep: usize,
}

/// JSON form: `{"mode": "uniform", "ratio": 0.5}`, `{"mode": "variance_cutoff", "tau": 0.05}`
/// or `{"mode": "explicit", "keep": {"2": 64}}`, each with optional `min_keep` (default 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keep: Option<BTreeMap<usize, usize>>,
    #[serde(default = "default_min_keep")]
    min_keep: usize,
}

fn default_min_keep() -> usize {
    1
}

impl TryFrom<RawSpec> for PruneSpec {
    type Error = Error;

    fn try_from(r: RawSpec) -> Result<Self> {
        let extra = |name: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::Contract(format!("field `{name}` is not used by mode {:?}", r.mode)))
            } else {
                Ok(())
            }
        };
        let missing = |name: &str| Error::Contract(format!("mode {:?} requires `{name}`", r.mode));
        let mode = match r.mode.as_str() {
            "uniform" => {
                extra("tau", r.tau.is_some())?;
                extra("keep", r.keep.is_some())?;
                PruneMode::Uniform {
                    ratio: r.ratio.ok_or_else(|| missing("ratio"))?,
                }
            }
            "variance_cutoff" => {
                extra("ratio", r.ratio.is_some())?;
                extra("keep", r.keep.is_some())?;
                PruneMode::VarianceCutoff {
                    tau: r.tau.ok_or_else(|| missing("tau"))?,
                }
            }
            "explicit" => {
                extra("ratio", r.ratio.is_some())?;
                extra("tau", r.tau.is_some())?;
                PruneMode::Explicit {
                    keep: r.keep.clone().ok_or_else(|| missing("keep"))?,
                }
            }
            other => {
                return Err(Error::Contract(format!(
                    "unknown mode {other:?} (expected uniform, variance_cutoff or explicit)"
                )))
            }
        };
        PruneSpec::new(mode, r.min_keep)
    }
}

impl From<PruneSpec> for RawSpec {
    fn from(s: PruneSpec) -> Self {
        let mut raw = RawSpec {
            mode: s.mode_name().into(),
            ratio: None,
            tau: None,
            keep: None,
            min_keep: s.min_keep,
        };
        match s.mode {
            PruneMode::Uniform { ratio } => raw.ratio = Some(ratio),
            PruneMode::VarianceCutoff { tau } => raw.tau = Some(tau),
            PruneMode::Explicit { keep } => raw.keep = Some(keep),
        }
        raw
    }
}

impl PruneSpec {
    pub fn new(mode: PruneMode, min_keep: usize) -> Result<Self> {
        if min_keep == 0 {
            return Err(Error::Contract("min_keep must be at least 1".into()));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Contract(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        match &mode {
            PruneMode::Uniform { ratio } => unit("ratio", *ratio)?,
            PruneMode::VarianceCutoff { tau } => unit("tau", *tau)?,
            PruneMode::Explicit { .. } => {}
        }
        Ok(Self { mode, min_keep })
    }

    pub fn uniform(ratio: f64) -> Result<Self> {
        Self::new(PruneMode::Uniform { ratio }, 1)
    }

    pub fn variance_cutoff(tau: f64) -> Result<Self> {
        Self::new(PruneMode::VarianceCutoff { tau }, 1)
    }

    pub fn mode_name(&self) -> &'static str {
        match self.mode {
            PruneMode::Uniform { .. } => "uniform",
            PruneMode::VarianceCutoff { .. } => "variance_cutoff",
            PruneMode::Explicit { .. } => "explicit",
        }
    }

    /// Keep count for a layer of `n` units given its cumulative importance curve.
    pub fn keep_count(&self, layer_id: usize, n: usize, cumulative: &[f64]) -> Result<usize> {
        let floor = self.min_keep.min(n);
        match &self.mode {
            PruneMode::Uniform { ratio } => {
                // f64::round rounds half away from zero
                let k = ((1.0 - ratio) * n as f64).round() as usize;
                Ok(k.clamp(floor, n))
            }
            PruneMode::VarianceCutoff { tau } => Ok(keep_for_cutoff(cumulative, *tau).clamp(floor, n)),
            PruneMode::Explicit { keep } => match keep.get(&layer_id) {
                None => Ok(n),
                Some(&k) if k >= floor && k <= n => Ok(k),
                Some(&k) => Err(Error::Contract(format!(
                    "explicit keep {k} for layer {layer_id} outside [{floor}, {n}]"
                ))),
            },
        }
    }
}

/// `importance[i] = Σ_{j≥i} D_j / Σ_k D_k`: the share of subspace variance held
/// by unit `i` and every unit after it. Starts at exactly 1 and never increases.
pub fn cumulative_importance(d: &[f64]) -> Vec<f64> {
    let mut suffix = vec![0.0; d.len()];
    let mut acc = 0.0;
    for i in (0..d.len()).rev() {
        acc += d[i];
        suffix[i] = acc;
    }
    let total = acc;
    if total > 0.0 {
        suffix.iter().map(|s| s / total).collect()
    } else {
        vec![1.0; d.len()]
    }
}

/// Smallest `keep` with `importance[keep] < tau`, or `n` if no prefix qualifies.
pub fn keep_for_cutoff(cumulative: &[f64], tau: f64) -> usize {
    cumulative
        .iter()
        .position(|&c| c < tau)
        .unwrap_or(cumulative.len())
}

/// `Σ_{j<keep} D_j / Σ D`.
pub fn retained_fraction(d: &[f64], keep: usize) -> f64 {
    let total: f64 = d.iter().sum();
    if total > 0.0 {
        d[..keep].iter().sum::<f64>() / total
    } else {
        1.0
    }
}

/// Everything needed to prune one layer's inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPrunePlan {
    pub layer_id: usize,
    pub method: ScoreMethod,
    /// Importance order over the factorized units, most important first.
    pub perm: Permutation,
    /// Real units kept (excludes the constant unit when `bias_unit` is set).
    pub keep: usize,
    /// LDL factor of the permuted Gram.
    pub factor: SubspaceFactor,
    /// Over real units, in importance order.
    pub cumulative_importance: Vec<f64>,
    /// The Gram carries a constant-1 unit as its last index, placed first in `perm`.
    pub bias_unit: bool,
}

impl LayerPrunePlan {
    /// Number of real input units.
    pub fn units(&self) -> usize {
        self.factor.n() - self.bias_unit as usize
    }

    /// Subspace coordinates kept, including the constant unit if present.
    pub fn subspace_keep(&self) -> usize {
        self.keep + self.bias_unit as usize
    }

    /// Subspace variances of the real units, in importance order.
    pub fn unit_variances(&self) -> &[f64] {
        &self.factor.d[self.bias_unit as usize..]
    }

    pub fn retained_variance_fraction(&self) -> f64 {
        retained_fraction(self.unit_variances(), self.keep)
    }

    pub fn dump(&self) -> PlanDump {
        PlanDump {
            layer_id: self.layer_id,
            method: self.method,
            perm: self.perm.as_slice().to_vec(),
            keep: self.keep,
            d: self.factor.d.clone(),
            cumulative_importance: self.cumulative_importance.clone(),
        }
    }
}

/// Audit record written per layer as `plans/layer_<id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDump {
    pub layer_id: usize,
    pub method: ScoreMethod,
    pub perm: Vec<usize>,
    pub keep: usize,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    pub cumulative_importance: Vec<f64>,
}

/// Stable descending order; ties keep ascending original index.
fn importance_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

fn check_scores(scores: &ImportanceScores) -> Result<()> {
    if let Some(i) = scores.scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data(format!(
            "layer {}: score of unit {i} is not finite",
            scores.layer_id
        )));
    }
    Ok(())
}

/// Orders units by score, factorizes the reordered Gram and picks the keep count.
pub fn build_plan(
    scores: &ImportanceScores,
    gram: &GramMatrix,
    spec: &PruneSpec,
    ridge_scale: f64,
) -> Result<LayerPrunePlan> {
    check_scores(scores)?;
    let n = scores.len();
    if gram.n() != n {
        return Err(Error::Contract(format!(
            "layer {}: {n} scores but Gram has {} units",
            scores.layer_id,
            gram.n()
        )));
    }
    let perm = Permutation::new(importance_order(&scores.scores))?;
    let factor = ldl_decompose_permuted(gram, &perm, ridge_scale)?;
    let cumulative = cumulative_importance(&factor.d);
    let keep = spec.keep_count(scores.layer_id, n, &cumulative)?;
    Ok(LayerPrunePlan {
        layer_id: scores.layer_id,
        method: scores.method,
        perm,
        keep,
        factor,
        cumulative_importance: cumulative,
        bias_unit: false,
    })
}

/// Like [`build_plan`] for a Gram whose last unit is the constant 1. That unit
/// is placed first and always kept, so the reconstruction becomes affine.
pub fn build_plan_with_bias(
    scores: &ImportanceScores,
    gram: &GramMatrix,
    spec: &PruneSpec,
    ridge_scale: f64,
) -> Result<LayerPrunePlan> {
    check_scores(scores)?;
    let n = scores.len();
    if gram.n() != n + 1 {
        return Err(Error::Contract(format!(
            "layer {}: {n} scores but bias-augmented Gram has {} units",
            scores.layer_id,
            gram.n()
        )));
    }
    let mut order = vec![n];
    order.extend(importance_order(&scores.scores));
    let perm = Permutation::new(order)?;
    let factor = ldl_decompose_permuted(gram, &perm, ridge_scale)?;
    let cumulative = cumulative_importance(&factor.d[1..]);
    let keep = spec.keep_count(scores.layer_id, n, &cumulative)?;
    Ok(LayerPrunePlan {
        layer_id: scores.layer_id,
        method: scores.method,
        perm,
        keep,
        factor,
        cumulative_importance: cumulative,
        bias_unit: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Tensor2D;

    #[test]
    fn cutoff_example() {
        let cum = cumulative_importance(&[4.0, 3.0, 2.0, 1.0]);
        let expected = [1.0, 0.6, 0.3, 0.1];
        for (c, e) in cum.iter().zip(expected) {
            assert!((c - e).abs() < 1e-15);
        }
        assert_eq!(keep_for_cutoff(&cum, 0.35), 2);
        assert_eq!(keep_for_cutoff(&cum, 0.0), 4);
        let spec = PruneSpec::variance_cutoff(0.35).unwrap();
        assert_eq!(spec.keep_count(0, 4, &cum).unwrap(), 2);
        assert_eq!(PruneSpec::variance_cutoff(0.0).unwrap().keep_count(0, 4, &cum).unwrap(), 4);
        // tau = 1 would empty the layer without the min_keep floor
        assert_eq!(PruneSpec::variance_cutoff(1.0).unwrap().keep_count(0, 4, &cum).unwrap(), 1);
    }

    #[test]
    fn uniform_rounding() {
        let spec = PruneSpec::uniform(0.5).unwrap();
        assert_eq!(spec.keep_count(0, 8, &[]).unwrap(), 4);
        assert_eq!(spec.keep_count(0, 7, &[]).unwrap(), 4);
        assert_eq!(PruneSpec::uniform(1.0).unwrap().keep_count(0, 8, &[]).unwrap(), 1);
        assert_eq!(PruneSpec::uniform(0.0).unwrap().keep_count(0, 8, &[]).unwrap(), 8);
        assert_eq!(PruneSpec::uniform(0.3).unwrap().keep_count(0, 10, &[]).unwrap(), 7);
    }

    #[test]
    fn explicit_bounds() {
        let spec = PruneSpec::new(PruneMode::Explicit { keep: [(2, 3)].into() }, 1).unwrap();
        assert_eq!(spec.keep_count(2, 5, &[]).unwrap(), 3);
        assert_eq!(spec.keep_count(4, 5, &[]).unwrap(), 5);
        assert!(spec.keep_count(2, 2, &[]).is_err());
    }

    #[test]
    fn spec_json_requires_mode_fields() {
        let s: PruneSpec = serde_json::from_str(r#"{"mode":"uniform","ratio":0.25}"#).unwrap();
        assert_eq!(s, PruneSpec::uniform(0.25).unwrap());
        let s: PruneSpec = serde_json::from_str(r#"{"mode":"explicit","keep":{"3":2},"min_keep":2}"#).unwrap();
        assert_eq!(s.min_keep, 2);
        assert!(serde_json::from_str::<PruneSpec>(r#"{"mode":"uniform"}"#).is_err());
        assert!(serde_json::from_str::<PruneSpec>(r#"{"mode":"uniform","ratio":0.5,"tau":0.1}"#).is_err());
        assert!(serde_json::from_str::<PruneSpec>(r#"{"mode":"uniform","ratio":1.5}"#).is_err());
        assert!(serde_json::from_str::<PruneSpec>(r#"{"mode":"uniform","ratio":0.5,"min_keep":0}"#).is_err());
        let back = serde_json::to_string(&PruneSpec::variance_cutoff(0.1).unwrap()).unwrap();
        assert_eq!(back, r#"{"mode":"variance_cutoff","tau":0.1,"min_keep":1}"#);
    }

    #[test]
    fn plan_orders_descending_with_stable_ties() {
        let gram = GramMatrix::from_parts(5, Tensor2D::from_diag(&[1.0, 2.0, 3.0, 4.0]), 1).unwrap();
        let scores = ImportanceScores {
            layer_id: 5,
            method: ScoreMethod::Saw,
            scores: vec![2.0, 5.0, 2.0, 1.0],
        };
        let plan = build_plan(&scores, &gram, &PruneSpec::uniform(0.5).unwrap(), 0.0).unwrap();
        assert_eq!(plan.perm.as_slice(), &[1, 0, 2, 3]);
        assert_eq!(plan.factor.d, vec![2.0, 1.0, 3.0, 4.0]);
        assert_eq!(plan.keep, 2);
        assert_eq!(plan.cumulative_importance[0], 1.0);
        assert!((plan.retained_variance_fraction() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn plan_rejects_mismatch() {
        let gram = GramMatrix::from_parts(0, Tensor2D::identity(3), 1).unwrap();
        let scores = ImportanceScores {
            layer_id: 0,
            method: ScoreMethod::Saw,
            scores: vec![1.0, 2.0],
        };
        assert!(matches!(
            build_plan(&scores, &gram, &PruneSpec::uniform(0.5).unwrap(), 0.0),
            Err(Error::Contract(_))
        ));
    }
}
