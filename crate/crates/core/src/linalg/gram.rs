use serde::{Deserialize, Serialize};

use super::Tensor2D;
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Uncentered second-moment matrix `X·Xᵀ` of one layer's input units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub layer_id: usize,
    c: Tensor2D,
    sample_count: u64,
}

impl GramMatrix {
    pub fn empty(layer_id: usize, n: usize) -> Self {
        Self {
            layer_id,
            c: Tensor2D::zeros(n, n),
            sample_count: 0,
        }
    }

    /// Wraps an existing matrix, checking squareness, finiteness and symmetry (1e-12 relative).
    pub fn from_parts(layer_id: usize, c: Tensor2D, sample_count: u64) -> Result<Self> {
        if !c.is_square() {
            return Err(Error::Shape(format!("Gram matrix must be square, got {:?}", c.shape())));
        }
        if !c.is_finite() {
            return Err(Error::Data("Gram matrix has non-finite entries".into()));
        }
        if c.asymmetry() > 1e-12 {
            return Err(Error::Data(format!(
                "Gram matrix is not symmetric (relative asymmetry {:e})",
                c.asymmetry()
            )));
        }
        Ok(Self {
            layer_id,
            c,
            sample_count,
        })
    }

    /// Gram of a `units x samples` feature matrix.
    pub fn from_features(layer_id: usize, features: &Tensor2D) -> Result<Self> {
        accumulate_gram(&GramMatrix::empty(layer_id, features.rows()), features)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.c.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &Tensor2D {
        &self.c
    }

    #[inline]
    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    /// Mean of the diagonal, the reference scale for ridge and pivot tolerances.
    /// Falls back to 1 for an all-zero diagonal so tolerances stay positive.
    pub fn diag_scale(&self) -> f64 {
        diag_scale(&self.c)
    }

    /// `C + ridge_scale · mean(diag C) · I`.
    pub fn ridged(&self, ridge_scale: f64) -> Tensor2D {
        ridge(&self.c, ridge_scale)
    }

    /// Restriction to the leading `k` units.
    pub fn leading(&self, k: usize) -> GramMatrix {
        GramMatrix {
            layer_id: self.layer_id,
            c: self.c.block(0, k, 0, k),
            sample_count: self.sample_count,
        }
    }
}

pub(crate) fn diag_scale(c: &Tensor2D) -> f64 {
    let n = c.rows();
    if n == 0 {
        return 1.0;
    }
    let mean = c.diag().iter().sum::<f64>() / n as f64;
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}

pub(crate) fn ridge(c: &Tensor2D, ridge_scale: f64) -> Tensor2D {
    let lambda = ridge_scale * diag_scale(c);
    let mut out = c.clone();
    for i in 0..out.rows() {
        out.set(i, i, out.get(i, i) + lambda);
    }
    out
}

/// `C' = C + B·Bᵀ` for a `units x samples` batch.
pub fn accumulate_gram(existing: &GramMatrix, batch: &Tensor2D) -> Result<GramMatrix> {
    accumulate_gram_with(existing, batch, Execution::default())
}

/// Like [`accumulate_gram`] with an explicit execution policy. Work is split
/// by Gram row; every entry is a left-to-right sum over the batch's samples,
/// so the result does not depend on the policy or thread count.
pub fn accumulate_gram_with(
    existing: &GramMatrix,
    batch: &Tensor2D,
    exec: Execution,
) -> Result<GramMatrix> {
    let n = existing.n();
    if batch.rows() != n {
        return Err(Error::Shape(format!(
            "batch has {} units, Gram for layer {} has {n}",
            batch.rows(),
            existing.layer_id
        )));
    }
    if !batch.is_finite() {
        return Err(Error::Data(format!(
            "non-finite activations in batch for layer {}",
            existing.layer_id
        )));
    }
    let s = batch.cols();
    let mut c = existing.c.clone();
    if s > 0 {
        let upper: Vec<Vec<f64>> = exec.map_range(n, |i| {
            let xi = batch.row(i);
            (i..n)
                .map(|j| xi.iter().zip(batch.row(j)).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        });
        for (i, row) in upper.iter().enumerate() {
            for (off, v) in row.iter().enumerate() {
                let j = i + off;
                let updated = c.get(i, j) + v;
                c.set(i, j, updated);
                c.set(j, i, updated);
            }
        }
    }
    Ok(GramMatrix {
        layer_id: existing.layer_id,
        c,
        sample_count: existing.sample_count + s as u64,
    })
}
