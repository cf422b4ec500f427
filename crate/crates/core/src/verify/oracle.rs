use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tensor2D;

pub const RELATIVE_ERROR_FLOOR: f64 = 1e-30;

/// One oracle-versus-method comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub quantity: String,
    pub oracle_value: Tensor2D,
    pub method_value: Tensor2D,
    pub relative_error: f64,
}

impl OracleResult {
    pub fn new(quantity: impl Into<String>, oracle_value: Tensor2D, method_value: Tensor2D) -> Result<Self> {
        let relative_error = relative_error(&oracle_value, &method_value)?;
        Ok(Self {
            quantity: quantity.into(),
            oracle_value,
            method_value,
            relative_error,
        })
    }
}

/// `‖oracle − method‖_F / max(‖oracle‖_F, 1e-30)`.
pub fn relative_error(oracle: &Tensor2D, method: &Tensor2D) -> Result<f64> {
    if oracle.shape() != method.shape() {
        return Err(Error::Shape(format!(
            "oracle is {:?} but method is {:?}",
            oracle.shape(),
            method.shape()
        )));
    }
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (o, m) in oracle.data().iter().zip(method.data()) {
        diff += (o - m) * (o - m);
        norm += o * o;
    }
    Ok(diff.sqrt() / norm.sqrt().max(RELATIVE_ERROR_FLOOR))
}

fn to_na(t: &Tensor2D) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn from_na(m: &DMatrix<f64>) -> Tensor2D {
    let mut data = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        data.extend(m.row(r).iter());
    }
    Tensor2D::new(m.nrows(), m.ncols(), data).expect("finite by construction")
}

/// `C + ridge_scale·mean(diag C)·I`, falling back to an absolute ridge for an all-zero diagonal.
fn ridged(c: &DMatrix<f64>, ridge_scale: f64) -> DMatrix<f64> {
    let n = c.nrows();
    c + DMatrix::identity(n, n) * ridge_lambda(c, ridge_scale)
}

fn ridge_lambda(c: &DMatrix<f64>, ridge_scale: f64) -> f64 {
    let n = c.nrows();
    let mean = if n == 0 { 0.0 } else { c.diagonal().sum() / n as f64 };
    ridge_scale * if mean > 0.0 { mean } else { 1.0 }
}

/// Inverse of a symmetric positive definite matrix through its eigendecomposition.
fn spd_inverse(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || min < max * 1e-15 {
        return Err(Error::Numeric(format!(
            "normal equations are singular (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    let inv = eig.eigenvalues.map(|v| 1.0 / v);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}

fn check_kept(n: usize, kept: &[usize]) -> Result<()> {
    if kept.is_empty() {
        return Err(Error::Contract("kept set is empty".into()));
    }
    let mut seen = vec![false; n];
    for &k in kept {
        if k >= n || std::mem::replace(&mut seen[k], true) {
            return Err(Error::Contract(format!("kept index {k} is out of range or repeated")));
        }
    }
    Ok(())
}

/// Least-squares recovery of every row of `x` (units x samples) from the kept
/// rows: `A = Cλ[:, K]·Cλ[K, K]⁻¹` with `Cλ` the ridged `X·Xᵀ`. Columns follow `kept`.
pub fn lls_recovery_oracle(x: &Tensor2D, kept: &[usize], ridge_scale: f64) -> Result<Tensor2D> {
    let xm = to_na(x);
    lls_from_na(&(&xm * xm.transpose()), kept, ridge_scale).map(|a| from_na(&a))
}

/// [`lls_recovery_oracle`] starting from an already accumulated Gram matrix.
pub fn lls_recovery_from_gram(c: &Tensor2D, kept: &[usize], ridge_scale: f64) -> Result<Tensor2D> {
    if !c.is_square() {
        return Err(Error::Shape(format!("Gram is {:?}", c.shape())));
    }
    lls_from_na(&to_na(c), kept, ridge_scale).map(|a| from_na(&a))
}

fn lls_from_na(c: &DMatrix<f64>, kept: &[usize], ridge_scale: f64) -> Result<DMatrix<f64>> {
    check_kept(c.nrows(), kept)?;
    let cr = ridged(c, ridge_scale);
    let cross = cr.select_columns(kept);
    let kk = cross.select_rows(kept);
    Ok(cross * spd_inverse(kk)?)
}

/// Per unit, the squared residual of regressing row `j` on every other row.
///
/// The ridge enters as data augmentation: `X` is extended with `√λ·I`, so the
/// normal equations become the ridged Gram and the residual includes the
/// augmented columns. This is the same ridge policy the recovery oracle uses.
pub fn residual_score_oracle(x: &Tensor2D, ridge_scale: f64) -> Result<Vec<f64>> {
    let xm = to_na(x);
    let n = xm.nrows();
    let s = xm.ncols();
    let lambda = ridge_lambda(&(&xm * xm.transpose()), ridge_scale);
    let mut aug = DMatrix::zeros(n, s + n);
    aug.view_mut((0, 0), (n, s)).copy_from(&xm);
    for j in 0..n {
        aug[(j, s + j)] = lambda.sqrt();
    }
    if n == 1 {
        return Ok(vec![aug.norm_squared()]);
    }
    (0..n)
        .map(|j| {
            let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
            let xo = aug.select_rows(&others);
            let target = aug.row(j);
            let rhs = &xo * target.transpose();
            let beta = spd_inverse(&xo * xo.transpose())? * rhs;
            Ok((target - beta.transpose() * xo).norm_squared())
        })
        .collect()
}

/// `‖X − A·X_K‖²_F`.
pub fn reconstruction_error(x: &Tensor2D, a: &Tensor2D, kept: &[usize]) -> Result<f64> {
    check_kept(x.rows(), kept)?;
    if a.rows() != x.rows() || a.cols() != kept.len() {
        return Err(Error::Shape(format!(
            "A is {:?}, expected {}x{}",
            a.shape(),
            x.rows(),
            kept.len()
        )));
    }
    let xm = to_na(x);
    let r = &xm - to_na(a) * xm.select_rows(kept);
    Ok(r.norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn x_dup() -> Tensor2D {
        Tensor2D::from_rows(&[[1.0, 2.0, -1.0, 0.5], [1.0, 2.0, -1.0, 0.5], [0.0, 1.0, 1.0, 3.0]])
    }

    #[test]
    fn keep_all_is_identity() {
        let x = Tensor2D::from_rows(&[[1.0, 2.0, -1.0, 0.5], [0.5, 2.0, 1.0, 0.5], [0.0, 1.0, 1.0, 3.0]]);
        let a = lls_recovery_oracle(&x, &[0, 1, 2], 1e-8).unwrap();
        assert!(relative_error(&Tensor2D::identity(3), &a).unwrap() < 1e-12);
        assert_eq!(reconstruction_error(&x_dup(), &Tensor2D::identity(3), &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn duplicate_row_maps_with_unit_coefficients() {
        let a = lls_recovery_oracle(&x_dup(), &[0, 2], 0.0).unwrap();
        assert_relative_eq!(a.get(1, 0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(a.get(1, 1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_rows() {
        let x = Tensor2D::from_rows(&[[2.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 1.0]]);
        let s = residual_score_oracle(&x, 0.0).unwrap();
        assert_eq!(s, vec![4.0, 9.0, 1.0]);
        let a = lls_recovery_oracle(&x, &[1], 0.0).unwrap();
        assert_eq!(reconstruction_error(&x, &a, &[1]).unwrap(), 5.0);
    }

    #[test]
    fn duplicated_pair_scores_vanish() {
        let s = residual_score_oracle(&x_dup(), 1e-8).unwrap();
        let power = 1.0 + 4.0 + 1.0 + 0.25;
        assert!(s[0] < 1e-6 * power && s[1] < 1e-6 * power);
        assert!(s[2] > 1.0);
    }

    #[test]
    fn rejects_bad_kept_sets() {
        assert!(lls_recovery_oracle(&x_dup(), &[], 0.0).is_err());
        assert!(lls_recovery_oracle(&x_dup(), &[0, 0], 0.0).is_err());
        assert!(lls_recovery_oracle(&x_dup(), &[3], 0.0).is_err());
        // singular without ridge
        assert!(matches!(lls_recovery_oracle(&x_dup(), &[0, 1], 0.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn relative_error_floor() {
        let z = Tensor2D::zeros(1, 2);
        assert_eq!(relative_error(&z, &z).unwrap(), 0.0);
        let m = Tensor2D::from_rows(&[[1e-20, 0.0]]);
        assert_eq!(relative_error(&z, &m).unwrap(), 1e-20 / 1e-30);
    }
}
