use super::plan::LayerPrunePlan;
use crate::error::{Error, Result};
use crate::linalg::{invert_unit_lower_triangular, SubspaceFactor, Tensor2D};

/// Linear map from kept units back to every unit: `x ≈ A·x_kept (+ bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    /// `n x keep`, rows in original unit order, columns follow `kept`.
    pub a: Tensor2D,
    /// Kept original unit indices, ascending.
    pub kept: Vec<usize>,
    /// Constant term per unit when the plan carries a bias unit.
    pub bias: Option<Vec<f64>>,
}

fn check_keep(n: usize, keep: usize) -> Result<()> {
    if keep == 0 || keep > n {
        return Err(Error::Contract(format!("keep must lie in [1, {n}], got {keep}")));
    }
    Ok(())
}

/// `B = M⁻¹[:, :k]·M[:k, :k]` in the factor's (permuted) unit order.
///
/// Row `i` expresses unit `i` through the first `k` units; the top `k x k`
/// block is the identity.
pub fn subspace_recovery(factor: &SubspaceFactor, keep: usize) -> Result<Tensor2D> {
    let n = factor.n();
    check_keep(n, keep)?;
    let m_kk = invert_unit_lower_triangular(&factor.m_inv.block(0, keep, 0, keep))?;
    let mut b = Tensor2D::zeros(n, keep);
    for i in 0..keep {
        b.set(i, i, 1.0);
    }
    if keep < n {
        let tail = factor.m_inv.block(keep, n, 0, keep).matmul(&m_kk)?;
        for i in keep..n {
            b.row_mut(i).copy_from_slice(tail.row(i - keep));
        }
    }
    Ok(b)
}

/// `W·B` for weights already laid out in the factor's unit order.
pub fn prune_layer_unpermuted(w: &Tensor2D, factor: &SubspaceFactor, keep: usize) -> Result<Tensor2D> {
    if w.cols() != factor.n() {
        return Err(Error::Shape(format!(
            "weights consume {} units but factor has {}",
            w.cols(),
            factor.n()
        )));
    }
    w.matmul(&subspace_recovery(factor, keep)?)
}

/// Scatters the permuted recovery back to original unit order.
pub fn recovery(plan: &LayerPrunePlan) -> Result<Recovery> {
    let n = plan.units();
    check_keep(n, plan.keep)?;
    let lead = plan.bias_unit as usize;
    let b = subspace_recovery(&plan.factor, plan.subspace_keep())?;
    let perm = plan.perm.as_slice();

    let mut kept: Vec<usize> = perm[lead..lead + plan.keep].to_vec();
    kept.sort_unstable();
    // subspace column -> column of A
    let mut col_of = vec![0usize; n];
    for (c, &u) in kept.iter().enumerate() {
        col_of[u] = c;
    }

    let mut a = Tensor2D::zeros(n, plan.keep);
    let mut bias = plan.bias_unit.then(|| vec![0.0; n]);
    for i in lead..perm.len() {
        let unit = perm[i];
        let row = b.row(i);
        for c in lead..plan.subspace_keep() {
            a.set(unit, col_of[perm[c]], row[c]);
        }
        if let Some(bias) = bias.as_mut() {
            bias[unit] = row[0];
        }
    }
    Ok(Recovery { a, kept, bias })
}

/// Reparameterized consumer weights `Ŵ = W·A`, one column per kept unit.
pub fn prune_layer(w: &Tensor2D, plan: &LayerPrunePlan) -> Result<Tensor2D> {
    if w.cols() != plan.units() {
        return Err(Error::Shape(format!(
            "weights consume {} units but plan covers {}",
            w.cols(),
            plan.units()
        )));
    }
    w.matmul(&recovery(plan)?.a)
}
