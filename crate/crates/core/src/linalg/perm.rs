use serde::{Deserialize, Serialize};

use super::Tensor2D;
use crate::error::{Error, Result};

/// A reordering of `n` units: position `i` holds original unit `order[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &p in &order {
            if p >= n {
                return Err(Error::Contract(format!("permutation entry {p} out of range {n}")));
            }
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::Contract(format!("permutation repeats entry {p}")));
            }
        }
        Ok(Self(order))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Original unit at position `i`.
    #[inline]
    pub fn at(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Permutation(inv)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Reorders rows (or columns) so that output index `i` takes input index `perm.at(i)`.
pub fn apply_permutation(t: &Tensor2D, perm: &Permutation, axis: Axis) -> Result<Tensor2D> {
    let len = match axis {
        Axis::Rows => t.rows(),
        Axis::Cols => t.cols(),
    };
    if perm.len() != len {
        return Err(Error::Contract(format!(
            "permutation of length {} applied to axis of length {len}",
            perm.len()
        )));
    }
    match axis {
        Axis::Rows => t.select_rows(perm.as_slice()),
        Axis::Cols => t.select_cols(perm.as_slice()),
    }
}

/// `P·C·Pᵀ`: entry `(i, j)` is `c[perm[i]][perm[j]]`.
pub fn permute_symmetric(c: &Tensor2D, perm: &Permutation) -> Result<Tensor2D> {
    if !c.is_square() || perm.len() != c.rows() {
        return Err(Error::Contract(format!(
            "cannot permute {:?} matrix with permutation of length {}",
            c.shape(),
            perm.len()
        )));
    }
    let p = perm.as_slice();
    Ok(Tensor2D::from_fn(c.rows(), c.cols(), |i, j| c.get(p[i], p[j])))
}
