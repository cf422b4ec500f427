use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::Tensor2D;

/// `n x s` activations with graded redundancy.
///
/// Each unit is a random mix of the units built before it plus its own
/// innovation, whose scale is log-uniform in `[0.01, 1]`. Rows are rescaled to
/// unit RMS and shuffled so redundancy does not follow the row index.
pub fn correlated_rows(n: usize, s: usize, seed: u64) -> Tensor2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let innovation = 10f64.powf(-2.0 * rng.random::<f64>());
        let mut row: Vec<f64> = (0..s)
            .map(|_| innovation * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mix = 1.0 / (i.max(1) as f64).sqrt();
        for prev in &rows {
            let a = mix * rng.sample::<f64, _>(StandardNormal);
            for (r, p) in row.iter_mut().zip(prev) {
                *r += a * p;
            }
        }
        let rms = (row.iter().map(|v| v * v).sum::<f64>() / s.max(1) as f64).sqrt();
        if rms > 0.0 {
            row.iter_mut().for_each(|v| *v /= rms);
        }
        rows.push(row);
    }
    rows.shuffle(&mut rng);
    Tensor2D::new(n, s, rows.concat()).expect("finite by construction")
}
