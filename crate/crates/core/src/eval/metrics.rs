use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::Network;

pub const DEFAULT_EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    /// Top-1 accuracy; absent for regression targets.
    pub accuracy: Option<f64>,
    /// Mean cross-entropy for classes, mean squared error for regression.
    pub mean_loss: f64,
}

#[derive(Default)]
struct Tally {
    correct: usize,
    loss: f64,
}

/// Stable `-log softmax(z)[label]`.
fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

/// First index of the maximum, so ties resolve to the lowest class.
fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Accuracy and mean loss over the whole dataset. Batches are tallied in
/// order, so the result is a pure function of `(net, ds)`.
pub fn evaluate(net: &Network, ds: &Dataset, exec: Execution) -> Result<Metrics> {
    let n = ds.len();
    let classes = match ds.targets() {
        Targets::None => return Err(Error::Contract("dataset has no targets to evaluate against".into())),
        Targets::Classes { num_classes, .. } => Some(*num_classes),
        Targets::Regression(_) => None,
    };
    let out_dim = net.output_shape().numel();
    match classes {
        Some(k) if k != out_dim => {
            return Err(Error::Shape(format!("network has {out_dim} outputs for {k} classes")))
        }
        None if out_dim != 1 => {
            return Err(Error::Shape(format!("regression needs 1 output, network has {out_dim}")))
        }
        _ => {}
    }
    let mut total = Tally::default();
    for start in (0..n).step_by(DEFAULT_EVAL_BATCH) {
        let idx: Vec<usize> = (start..(start + DEFAULT_EVAL_BATCH).min(n)).collect();
        let out = net.forward_with(&ds.inputs().select_rows(&idx)?, false, exec)?.outputs;
        for (r, &i) in idx.iter().enumerate() {
            let z = out.row(r);
            match ds.targets() {
                Targets::Classes { labels, .. } => {
                    total.correct += (argmax(z) == labels[i]) as usize;
                    total.loss += cross_entropy(z, labels[i]);
                }
                Targets::Regression(y) => total.loss += (z[0] - y[i]).powi(2),
                Targets::None => unreachable!(),
            }
        }
    }
    let denom = n.max(1) as f64;
    Ok(Metrics {
        samples: n,
        accuracy: classes.map(|_| total.correct as f64 / denom),
        mean_loss: total.loss / denom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::dataset::Split;
    use crate::linalg::Tensor2D;
    use crate::model::{ActShape, Dense, Layer};

    fn classes(labels: Vec<usize>, k: usize) -> Targets {
        Targets::Classes { labels, num_classes: k }
    }

    #[test]
    fn memorizer_scores_one() {
        // identity on one-hot inputs
        let eye: Vec<f32> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        let net = Network::new(ActShape::Flat(4), vec![Layer::Dense(Dense::new(4, 4, eye, vec![0.0; 4]).unwrap())]).unwrap();
        let ds = Dataset::new(Tensor2D::identity(4), classes(vec![0, 1, 2, 3], 4), Split::Test).unwrap();
        assert_eq!(evaluate(&net, &ds, Execution::default()).unwrap().accuracy, Some(1.0));
    }

    #[test]
    fn constant_net_on_balanced_pair() {
        let net = Network::new(
            ActShape::Flat(1),
            vec![Layer::Dense(Dense::new(1, 2, vec![0.0, 0.0], vec![1.0, 0.0]).unwrap())],
        )
        .unwrap();
        let x = Tensor2D::from_rows(&[[0.1], [0.2], [0.3], [0.4]]);
        let ds = Dataset::new(x, classes(vec![0, 1, 1, 0], 2), Split::Test).unwrap();
        let m = evaluate(&net, &ds, Execution::default()).unwrap();
        assert_eq!(m.accuracy, Some(0.5));
        let ce = (1.0f64.exp() + 1.0).ln();
        assert!((m.mean_loss - (ce + (ce - 1.0)) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn order_invariant_and_repeatable() {
        let net = Network::new(
            ActShape::Flat(2),
            vec![Layer::Dense(Dense::new(2, 3, vec![1.0, -1.0, 0.5, 0.5, -1.0, 2.0], vec![0.0, 0.1, 0.0]).unwrap())],
        )
        .unwrap();
        let x = Tensor2D::from_fn(300, 2, |r, c| ((r * 7 + c * 3) % 11) as f64 - 5.0);
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let ds = Dataset::new(x, classes(labels, 3), Split::Test).unwrap();
        let a = evaluate(&net, &ds, Execution::Parallel).unwrap();
        assert_eq!(a, evaluate(&net, &ds, Execution::Sequential).unwrap());
        let rev: Vec<usize> = (0..300).rev().collect();
        let b = evaluate(&net, &ds.select(&rev).unwrap(), Execution::default()).unwrap();
        assert_eq!(a.accuracy, b.accuracy);
        assert!((a.mean_loss - b.mean_loss).abs() < 1e-12);
    }

    #[test]
    fn class_count_must_match() {
        let net = Network::new(ActShape::Flat(1), vec![Layer::Dense(Dense::new(1, 2, vec![0.0; 2], vec![0.0; 2]).unwrap())]).unwrap();
        let ds = Dataset::new(Tensor2D::zeros(1, 1), classes(vec![0], 3), Split::Test).unwrap();
        assert!(matches!(evaluate(&net, &ds, Execution::default()), Err(Error::Shape(_))));
    }
}
