use super::Tensor2D;
use crate::error::{Error, Result};

/// Eigenvalues below `DEFAULT_EIG_FLOOR · λ_max` are clamped in the inverse square root.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-12;

const MAX_SWEEPS: usize = 64;

/// Eigen-decomposition `A = V·diag(values)·Vᵀ` of a symmetric matrix.
/// Column `k` of `vectors` pairs with `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Tensor2D,
}

impl SymEigen {
    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `V·diag(f(λ))·Vᵀ`, assembled on the upper triangle and mirrored so the
    /// result is exactly symmetric.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Tensor2D {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        let mut out = Tensor2D::zeros(n, n);
        for i in 0..n {
            let vi = v.row(i);
            for j in i..n {
                let vj = v.row(j);
                let s: f64 = (0..n).map(|k| vi[k] * fv[k] * vj[k]).sum();
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
///
/// Rotations skip entries that are already negligible against both diagonal
/// entries, so small eigenvalues keep high relative accuracy.
pub fn sym_eigen(a: &Tensor2D) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::Shape(format!("eigen-decomposition of {:?} matrix", a.shape())));
    }
    if !a.is_finite() {
        return Err(Error::Data("eigen-decomposition of non-finite matrix".into()));
    }
    let n = a.rows();
    let mut a = a.clone();
    let mut v = Tensor2D::identity(n);
    let idx = |i: usize, j: usize| i * n + j;

    for sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a.get(p, q).abs())
            .sum();
        if off == 0.0 {
            let values = a.diag();
            return Ok(SymEigen { values, vectors: v });
        }
        let thresh = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                let g = 100.0 * apq.abs();
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    let d = a.data_mut();
                    d[idx(p, q)] = 0.0;
                    d[idx(q, p)] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let d = a.data_mut();
                d[idx(p, p)] = app - t * apq;
                d[idx(q, q)] = aqq + t * apq;
                d[idx(p, q)] = 0.0;
                d[idx(q, p)] = 0.0;
                for j in 0..n {
                    if j == p || j == q {
                        continue;
                    }
                    let gj = d[idx(j, p)];
                    let hj = d[idx(j, q)];
                    let np = gj - s * (hj + gj * tau);
                    let nq = hj + s * (gj - hj * tau);
                    d[idx(j, p)] = np;
                    d[idx(p, j)] = np;
                    d[idx(j, q)] = nq;
                    d[idx(q, j)] = nq;
                }
                let vd = v.data_mut();
                for j in 0..n {
                    let gj = vd[idx(j, p)];
                    let hj = vd[idx(j, q)];
                    vd[idx(j, p)] = gj - s * (hj + gj * tau);
                    vd[idx(j, q)] = hj + s * (gj - hj * tau);
                }
            }
        }
    }
    Err(Error::Numeric(format!(
        "Jacobi eigen-decomposition of {n}x{n} matrix did not converge in {MAX_SWEEPS} sweeps"
    )))
}

/// Symmetric inverse square root `Z` with `Z·C·Z = I` on the unclamped eigenspace.
/// Eigenvalues below `eig_floor · λ_max` (including negative ones) are raised to it.
pub fn sym_inverse_sqrt(c: &Tensor2D, eig_floor: f64) -> Result<Tensor2D> {
    let eig = sym_eigen(c)?;
    let lmax = eig.max_value();
    if !(lmax > 0.0) {
        return Err(Error::Numeric(format!(
            "inverse square root needs a positive eigenvalue, largest is {lmax:e}"
        )));
    }
    let floor = eig_floor * lmax;
    Ok(eig.map_spectrum(|l| 1.0 / l.max(floor).sqrt()))
}

/// Symmetric PSD square root; negative eigenvalues are treated as zero.
pub fn sym_sqrt(c: &Tensor2D) -> Result<Tensor2D> {
    let eig = sym_eigen(c)?;
    Ok(eig.map_spectrum(|l| l.max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> Tensor2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor2D::from_fn(n, 3 * n, |_, _| rng.random_range(-1.0..1.0));
        x.matmul(&x.transpose()).unwrap()
    }

    #[test]
    fn diagonal_and_identity() {
        let z = sym_inverse_sqrt(&Tensor2D::from_diag(&[4.0, 9.0]), DEFAULT_EIG_FLOOR).unwrap();
        assert_eq!(z, Tensor2D::from_diag(&[0.5, 1.0 / 3.0]));
        let z = sym_inverse_sqrt(&Tensor2D::identity(4), DEFAULT_EIG_FLOOR).unwrap();
        assert_eq!(z, Tensor2D::identity(4));
    }

    #[test]
    fn eigen_reconstructs() {
        let c = random_spd(20, 1);
        let e = sym_eigen(&c).unwrap();
        let back = e.map_spectrum(|l| l);
        assert!(back.relative_error(&c).unwrap() < 1e-13);
        let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
        assert!(vtv.relative_error(&Tensor2D::identity(20)).unwrap() < 1e-13);
    }

    #[test]
    fn whitening_identity_on_random_spd() {
        let c = random_spd(16, 2);
        let z = sym_inverse_sqrt(&c, DEFAULT_EIG_FLOOR).unwrap();
        let zcz = z.matmul(&c).unwrap().matmul(&z).unwrap();
        assert!(zcz.relative_error(&Tensor2D::identity(16)).unwrap() < 1e-8);
        assert_eq!(z.asymmetry(), 0.0);
        let zc = z.matmul(&c).unwrap();
        let cz = c.matmul(&z).unwrap();
        assert!(zc.relative_error(&cz).unwrap() < 1e-8);
    }

    #[test]
    fn sqrt_squares_back() {
        let c = random_spd(12, 3);
        let r = sym_sqrt(&c).unwrap();
        assert!(r.matmul(&r).unwrap().relative_error(&c).unwrap() < 1e-12);
    }

    #[test]
    fn zero_matrix_fails() {
        assert!(matches!(
            sym_inverse_sqrt(&Tensor2D::zeros(3, 3), DEFAULT_EIG_FLOOR),
            Err(Error::Numeric(_))
        ));
    }
}
