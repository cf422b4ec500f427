use serde::{Deserialize, Serialize};

use super::gram::diag_scale;
use super::{permute_symmetric, GramMatrix, Permutation, Tensor2D};
use crate::error::{Error, Result};

/// Default ridge, relative to `mean(diag C)`.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-8;
/// Pivots below this fraction of `mean(diag C)` are clamped up to it.
pub const PIVOT_FLOOR: f64 = 1e-12;
/// Pivots below `-NEGATIVE_PIVOT_TOL · mean(diag C)` mean the input is not PSD.
pub const NEGATIVE_PIVOT_TOL: f64 = 1e-8;

/// Unit-diagonal LDL factor `P·C·Pᵀ = M⁻¹·diag(D)·M⁻ᵀ` of a (ridged) Gram matrix.
///
/// `m_inv` maps subspace coordinates back to (permuted) units; its inverse `M`
/// is the lower-triangular orthogonalizing transform. `d` holds the variance
/// left in each unit after removing everything explained by earlier units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceFactor {
    pub m_inv: Tensor2D,
    pub d: Vec<f64>,
    pub perm: Permutation,
}

impl SubspaceFactor {
    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// The orthogonalizing transform `M = (M⁻¹)⁻¹`.
    pub fn m(&self) -> Result<Tensor2D> {
        invert_unit_lower_triangular(&self.m_inv)
    }

    /// `M⁻¹·diag(D)·M⁻ᵀ`, i.e. the permuted ridged Gram this factor came from.
    pub fn reconstruct(&self) -> Tensor2D {
        let n = self.n();
        let mut out = Tensor2D::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let li = self.m_inv.row(i);
                let lj = self.m_inv.row(j);
                let v: f64 = (0..=j).map(|k| li[k] * self.d[k] * lj[k]).sum();
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }
}

/// LDL decomposition of `C + ridge_scale·mean(diag C)·I` in the given unit order.
pub fn ldl_decompose(c: &GramMatrix, ridge_scale: f64) -> Result<SubspaceFactor> {
    ldl_decompose_permuted(c, &Permutation::identity(c.n()), ridge_scale)
}

/// LDL decomposition of the ridged Gram after reordering units by `perm`.
///
/// No pivoting: the order is fixed by the caller. Pivots below
/// [`PIVOT_FLOOR`] are clamped and the clamped value is stored in `D`.
pub fn ldl_decompose_permuted(
    c: &GramMatrix,
    perm: &Permutation,
    ridge_scale: f64,
) -> Result<SubspaceFactor> {
    if !(ridge_scale >= 0.0 && ridge_scale.is_finite()) {
        return Err(Error::Contract(format!("ridge scale must be >= 0, got {ridge_scale}")));
    }
    let scale = diag_scale(c.matrix());
    let ridged = c.ridged(ridge_scale);
    let a = if perm.is_identity() {
        if perm.len() != c.n() {
            return Err(Error::Contract(format!(
                "permutation of length {} for {} units",
                perm.len(),
                c.n()
            )));
        }
        ridged
    } else {
        permute_symmetric(&ridged, perm)?
    };

    let n = a.rows();
    let neg_tol = NEGATIVE_PIVOT_TOL * scale;
    let floor = PIVOT_FLOOR * scale;
    let mut l = Tensor2D::identity(n);
    let mut d = vec![0.0; n];
    let mut v = vec![0.0; n];
    for j in 0..n {
        let lj = l.row(j);
        for k in 0..j {
            v[k] = lj[k] * d[k];
        }
        let mut pivot = a.get(j, j) - lj[..j].iter().zip(&v[..j]).map(|(x, y)| x * y).sum::<f64>();
        if pivot < -neg_tol {
            return Err(Error::NotPsd {
                index: perm.at(j),
                pivot,
            });
        }
        if pivot < floor {
            pivot = floor;
        }
        d[j] = pivot;
        for i in j + 1..n {
            let li = l.row(i);
            let s = a.get(i, j) - li[..j].iter().zip(&v[..j]).map(|(x, y)| x * y).sum::<f64>();
            l.set(i, j, s / pivot);
        }
    }
    Ok(SubspaceFactor {
        m_inv: l,
        d,
        perm: perm.clone(),
    })
}

/// Inverse of a unit-diagonal lower-triangular matrix by forward substitution.
pub fn invert_unit_lower_triangular(l: &Tensor2D) -> Result<Tensor2D> {
    if !l.is_square() {
        return Err(Error::Contract(format!("expected square matrix, got {:?}", l.shape())));
    }
    let n = l.rows();
    for i in 0..n {
        if l.get(i, i) != 1.0 {
            return Err(Error::Contract(format!(
                "diagonal entry {i} is {}, expected 1",
                l.get(i, i)
            )));
        }
        if let Some(j) = (i + 1..n).find(|&j| l.get(i, j) != 0.0) {
            return Err(Error::Contract(format!("entry ({i}, {j}) above the diagonal is nonzero")));
        }
    }
    let mut x = Tensor2D::identity(n);
    for i in 1..n {
        let li = l.row(i);
        for j in 0..i {
            let mut s = li[j];
            for (k, lik) in li.iter().enumerate().take(i).skip(j + 1) {
                s += lik * x.get(k, j);
            }
            x.set(i, j, -s);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gram(rows: &[[f64; 2]]) -> GramMatrix {
        GramMatrix::from_parts(0, Tensor2D::from_rows(rows), 1).unwrap()
    }

    fn random_spd(n: usize, seed: u64) -> GramMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor2D::from_fn(n, 2 * n, |_, _| rng.random_range(-1.0..1.0));
        GramMatrix::from_features(0, &x).unwrap()
    }

    #[test]
    fn two_by_two_example() {
        let f = ldl_decompose(&gram(&[[1.0, 1.0], [1.0, 2.0]]), 0.0).unwrap();
        assert_eq!(f.m_inv, Tensor2D::from_rows(&[[1.0, 0.0], [1.0, 1.0]]));
        assert_eq!(f.d, vec![1.0, 1.0]);
        assert!(f.perm.is_identity());
    }

    #[test]
    fn diagonal_gives_identity_factor() {
        let f = ldl_decompose(&gram(&[[4.0, 0.0], [0.0, 9.0]]), 0.0).unwrap();
        assert_eq!(f.m_inv, Tensor2D::identity(2));
        assert_eq!(f.d, vec![4.0, 9.0]);
    }

    #[test]
    fn random_spd_reconstructs() {
        let c = random_spd(64, 3);
        let f = ldl_decompose(&c, DEFAULT_RIDGE_SCALE).unwrap();
        let err = f.reconstruct().relative_error(&c.ridged(DEFAULT_RIDGE_SCALE)).unwrap();
        assert!(err <= 1e-10, "reconstruction error {err}");
        assert!(f.d.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn not_psd_names_index() {
        let c = gram(&[[1.0, 2.0], [2.0, 1.0]]);
        match ldl_decompose(&c, DEFAULT_RIDGE_SCALE) {
            Err(Error::NotPsd { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn redundant_unit_is_clamped() {
        // unit 1 duplicates unit 0 exactly: its pivot is ~0 and gets floored
        let c = gram(&[[1.0, 1.0], [1.0, 1.0]]);
        let f = ldl_decompose(&c, 0.0).unwrap();
        assert_eq!(f.d[1], PIVOT_FLOOR);
        assert_eq!(f.m_inv.get(1, 0), 1.0);
    }

    #[test]
    fn invert_examples() {
        let l = Tensor2D::from_rows(&[[1.0, 0.0], [1.0, 1.0]]);
        assert_eq!(
            invert_unit_lower_triangular(&l).unwrap(),
            Tensor2D::from_rows(&[[1.0, 0.0], [-1.0, 1.0]])
        );
        assert_eq!(invert_unit_lower_triangular(&Tensor2D::identity(5)).unwrap(), Tensor2D::identity(5));
        let bad = Tensor2D::from_rows(&[[2.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(invert_unit_lower_triangular(&bad), Err(Error::Contract(_))));
        let upper = Tensor2D::from_rows(&[[1.0, 0.5], [0.0, 1.0]]);
        assert!(invert_unit_lower_triangular(&upper).is_err());
    }

    #[test]
    fn invert_random_unit_lower() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = Tensor2D::from_fn(32, 32, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Greater => rng.random_range(-0.5..0.5),
            std::cmp::Ordering::Less => 0.0,
        });
        let inv = invert_unit_lower_triangular(&l).unwrap();
        let prod = l.matmul(&inv).unwrap();
        assert!(prod.relative_error(&Tensor2D::identity(32)).unwrap() < 1e-11);
        for i in 0..32 {
            assert_eq!(inv.get(i, i), 1.0);
            for j in i + 1..32 {
                assert_eq!(inv.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn subspace_is_orthogonal() {
        let c = random_spd(24, 21);
        let f = ldl_decompose(&c, DEFAULT_RIDGE_SCALE).unwrap();
        let m = f.m().unwrap();
        let ridged = c.ridged(DEFAULT_RIDGE_SCALE);
        let mcm = m.matmul(&ridged).unwrap().matmul(&m.transpose()).unwrap();
        let dmax = f.d.iter().cloned().fold(0.0, f64::max);
        for i in 0..24 {
            assert!((mcm.get(i, i) - f.d[i]).abs() <= 1e-9 * f.d[i]);
            for j in 0..24 {
                if i != j {
                    assert!(mcm.get(i, j).abs() <= 1e-8 * dmax);
                }
            }
        }
    }

    #[test]
    fn permuted_matches_prepermuted_gram() {
        let c = random_spd(10, 4);
        let perm = Permutation::new(vec![3, 7, 0, 9, 1, 2, 8, 5, 4, 6]).unwrap();
        let f = ldl_decompose_permuted(&c, &perm, 0.0).unwrap();
        let pc = GramMatrix::from_parts(0, permute_symmetric(c.matrix(), &perm).unwrap(), 1).unwrap();
        let g = ldl_decompose(&pc, 0.0).unwrap();
        assert_eq!(f.m_inv, g.m_inv);
        assert_eq!(f.d, g.d);
    }
}
