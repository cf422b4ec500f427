use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_inverse_sqrt, sym_sqrt, GramMatrix, Tensor2D, DEFAULT_EIG_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    /// Summed absolute consuming weights per unit.
    Saw,
    /// Residual power of each unit after regressing it on all other units.
    UnnormZca,
    /// Summed absolute weights of `W·C^{1/2}`.
    SawTilde,
    /// Seeded uniform noise, i.e. a random unit order.
    Random,
}

impl ScoreMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMethod::Saw => "saw",
            ScoreMethod::UnnormZca => "unnorm_zca",
            ScoreMethod::SawTilde => "saw_tilde",
            ScoreMethod::Random => "random",
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saw" => Ok(ScoreMethod::Saw),
            "unnorm_zca" | "zca" => Ok(ScoreMethod::UnnormZca),
            "saw_tilde" => Ok(ScoreMethod::SawTilde),
            "random" => Ok(ScoreMethod::Random),
            other => Err(Error::Contract(format!(
                "unknown method {other:?} (expected saw, unnorm_zca, saw_tilde or random)"
            ))),
        }
    }
}

/// One score per input unit of a layer; larger means more important.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub layer_id: usize,
    pub method: ScoreMethod,
    pub scores: Vec<f64>,
}

impl ImportanceScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn column_abs_sums(w: &Tensor2D) -> Vec<f64> {
    let mut s = vec![0.0; w.cols()];
    for r in 0..w.rows() {
        for (acc, v) in s.iter_mut().zip(w.row(r)) {
            *acc += v.abs();
        }
    }
    s
}

/// `score_j = Σ_i |W_ij|` over the weights consuming unit `j`.
pub fn score_saw(layer_id: usize, w: &Tensor2D) -> ImportanceScores {
    ImportanceScores {
        layer_id,
        method: ScoreMethod::Saw,
        scores: column_abs_sums(w),
    }
}

/// Unnormalized-ZCA redundancy scores.
///
/// With `Z = (C + λI)^{-1/2}` the score of unit `j` is `1 / Σ_k Z_jk²`, i.e.
/// `1 / (C + λI)⁻¹_jj`: the squared norm of unit `j`'s activity left after
/// projecting out every other unit. For uncorrelated units this is
/// `(1 / Z_jj)²`, the unit's own power.
pub fn score_unnorm_zca(gram: &GramMatrix, ridge_scale: f64) -> Result<ImportanceScores> {
    let z = sym_inverse_sqrt(&gram.ridged(ridge_scale), DEFAULT_EIG_FLOOR)?;
    let scores = (0..z.rows())
        .map(|j| 1.0 / z.row(j).iter().map(|v| v * v).sum::<f64>())
        .collect();
    Ok(ImportanceScores {
        layer_id: gram.layer_id,
        method: ScoreMethod::UnnormZca,
        scores,
    })
}

/// SAW measured in the whitened basis: column sums of `|W·(C + λI)^{1/2}|`.
pub fn score_saw_tilde(w: &Tensor2D, gram: &GramMatrix, ridge_scale: f64) -> Result<ImportanceScores> {
    if w.cols() != gram.n() {
        return Err(Error::Shape(format!(
            "weights consume {} units but Gram has {}",
            w.cols(),
            gram.n()
        )));
    }
    let root = sym_sqrt(&gram.ridged(ridge_scale))?;
    Ok(ImportanceScores {
        layer_id: gram.layer_id,
        method: ScoreMethod::SawTilde,
        scores: column_abs_sums(&w.matmul(&root)?),
    })
}

/// Seeded uniform scores in `[0, 1)`; the same `(layer_id, seed)` gives the same order.
pub fn score_random(layer_id: usize, n: usize, seed: u64) -> ImportanceScores {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (layer_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    ImportanceScores {
        layer_id,
        method: ScoreMethod::Random,
        scores: (0..n).map(|_| rng.random::<f64>()).collect(),
    }
}
