use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::oracle::{lls_recovery_from_gram, lls_recovery_oracle, reconstruction_error, relative_error, residual_score_oracle};
use super::synth::correlated_rows;
use crate::error::Result;
use crate::exec::Execution;
use crate::linalg::cache::GramSet;
use crate::linalg::{GramMatrix, Tensor2D, DEFAULT_RIDGE_SCALE};
use crate::pruning::{build_plan, recovery, score_random, score_unnorm_zca, LayerPrunePlan, PruneMode, PruneSpec};

pub const LLS_TOLERANCE: f64 = 1e-8;
pub const ZCA_TOLERANCE: f64 = 1e-6;
/// Slack allowed when a perturbed recovery ties the optimum.
const OPTIMALITY_SLACK: f64 = 1e-12;

/// Deliberate corruption of the method side, used as a negative control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Adds this much to one off-block entry of every recovery matrix.
    PerturbRecovery(f64),
    /// Multiplies the first ZCA score by `1 + x`.
    PerturbScores(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    /// Recovery instances, cycled over `sizes`; each uses `8n` samples.
    pub instances: usize,
    pub zca_instances: usize,
    pub zca_units: usize,
    pub zca_samples: usize,
    /// Random perturbations per instance for the optimality probe.
    pub perturbations: usize,
    pub ridge_scale: f64,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![4, 8, 16, 32],
            instances: 200,
            zca_instances: 100,
            zca_units: 8,
            zca_samples: 64,
            perturbations: 100,
            ridge_scale: DEFAULT_RIDGE_SCALE,
            seed: 0,
            fault: None,
        }
    }
}

/// Enough to regenerate a failing instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub instance: usize,
    pub seed: u64,
    pub n: usize,
    pub samples: usize,
    pub keep: Option<usize>,
    pub perm: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub threshold: f64,
    pub evaluations: usize,
    pub max_value: f64,
    pub worst: Option<WorstCase>,
}

impl CheckSummary {
    fn new(name: &str, threshold: f64) -> Self {
        Self {
            name: name.into(),
            threshold,
            evaluations: 0,
            max_value: 0.0,
            worst: None,
        }
    }

    fn record(&mut self, value: f64, case: impl FnOnce() -> WorstCase) {
        self.evaluations += 1;
        // NaN counts as worst
        if !(value <= self.max_value) {
            self.max_value = value;
            self.worst = Some(case());
        }
    }

    fn merge(&mut self, other: CheckSummary) {
        self.evaluations += other.evaluations;
        if !(other.max_value <= self.max_value) {
            self.max_value = other.max_value;
            self.worst = other.worst;
        }
    }

    pub fn passed(&self) -> bool {
        self.max_value <= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub checks: Vec<CheckSummary>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckSummary::passed)
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<24} evaluations={:<6} max={:.3e} threshold={:.0e}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.evaluations,
                c.max_value,
                c.threshold
            )?;
            if let (false, Some(w)) = (c.passed(), &c.worst) {
                writeln!(
                    f,
                    "     worst: instance={} seed={} n={} samples={} keep={:?} perm={:?}",
                    w.instance, w.seed, w.n, w.samples, w.keep, w.perm
                )?;
            }
        }
        Ok(())
    }
}

fn instance_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64).wrapping_mul(0x2545_F491_4F6C_DD1D)
}

/// One synthetic instance: recovery equivalence for every keep, then the
/// optimality probe at `keep = n / 2`.
fn recovery_instance(cfg: &SweepConfig, i: usize) -> Result<(CheckSummary, CheckSummary)> {
    let n = cfg.sizes[i % cfg.sizes.len()];
    let s = 8 * n;
    let seed = instance_seed(cfg.seed, i);
    let x = correlated_rows(n, s, seed);
    let gram = GramMatrix::from_features(0, &x)?;
    // Alternate score orders so both identity-like and scrambled permutations occur.
    let scores = if i.is_multiple_of(2) {
        score_unnorm_zca(&gram, cfg.ridge_scale)?
    } else {
        score_random(0, n, seed)
    };
    let full = PruneSpec::new(PruneMode::Explicit { keep: Default::default() }, 1)?;
    let base = build_plan(&scores, &gram, &full, cfg.ridge_scale)?;
    let case = |keep: Option<usize>, value: f64| WorstCase {
        instance: i,
        seed,
        n,
        samples: s,
        keep,
        perm: base.perm.as_slice().to_vec(),
        value,
    };

    let mut lls = CheckSummary::new("lls_equivalence", LLS_TOLERANCE);
    let mut opt = CheckSummary::new("lls_optimality", OPTIMALITY_SLACK);
    for keep in 1..n {
        let plan = LayerPrunePlan { keep, ..base.clone() };
        let mut rec = recovery(&plan)?;
        if let Some(Fault::PerturbRecovery(eps)) = cfg.fault {
            let v = rec.a.get(n - 1, 0);
            rec.a.set(n - 1, 0, v + eps);
        }
        let oracle = lls_recovery_oracle(&x, &rec.kept, cfg.ridge_scale)?;
        let err = relative_error(&oracle, &rec.a)?;
        lls.record(err, || case(Some(keep), err));

        if keep == n / 2 {
            let best = reconstruction_error(&x, &rec.a, &rec.kept)?;
            let rms = (rec.a.data().iter().map(|v| v * v).sum::<f64>() / rec.a.data().len() as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
            let mut worst = 0.0f64;
            for _ in 0..cfg.perturbations {
                let mut p = rec.a.clone();
                for v in p.data_mut() {
                    *v += 1e-3 * rms * rng.sample::<f64, _>(StandardNormal);
                }
                let e = reconstruction_error(&x, &p, &rec.kept)?;
                // how far the perturbed recovery undercuts ours, relative
                worst = worst.max((best - e) / best.max(f64::MIN_POSITIVE));
            }
            opt.record(worst, || case(Some(keep), worst));
        }
    }
    Ok((lls, opt))
}

fn zca_instance(cfg: &SweepConfig, i: usize) -> Result<CheckSummary> {
    let seed = instance_seed(cfg.seed ^ 0x5A5A, i);
    let x = correlated_rows(cfg.zca_units, cfg.zca_samples, seed);
    let gram = GramMatrix::from_features(0, &x)?;
    let mut method = score_unnorm_zca(&gram, cfg.ridge_scale)?.scores;
    if let Some(Fault::PerturbScores(f)) = cfg.fault {
        method[0] *= 1.0 + f;
    }
    let oracle = residual_score_oracle(&x, cfg.ridge_scale)?;
    let as_row = |v: &[f64]| Tensor2D::new(1, v.len(), v.to_vec());
    let err = relative_error(&as_row(&oracle)?, &as_row(&method)?)?;
    let mut c = CheckSummary::new("zca_residual_equivalence", ZCA_TOLERANCE);
    c.record(err, || WorstCase {
        instance: i,
        seed,
        n: cfg.zca_units,
        samples: cfg.zca_samples,
        keep: None,
        perm: vec![],
        value: err,
    });
    Ok(c)
}

/// Runs every synthetic oracle check. Instances run in parallel under `exec`;
/// results are merged in instance order.
pub fn run_sweep(cfg: &SweepConfig, exec: Execution) -> Result<SweepReport> {
    let mut lls = CheckSummary::new("lls_equivalence", LLS_TOLERANCE);
    let mut opt = CheckSummary::new("lls_optimality", OPTIMALITY_SLACK);
    let mut zca = CheckSummary::new("zca_residual_equivalence", ZCA_TOLERANCE);
    if !cfg.sizes.is_empty() {
        for r in exec.map_range(cfg.instances, |i| recovery_instance(cfg, i)) {
            let (l, o) = r?;
            lls.merge(l);
            opt.merge(o);
        }
    }
    for r in exec.map_range(cfg.zca_instances, |i| zca_instance(cfg, i)) {
        zca.merge(r?);
    }
    Ok(SweepReport {
        checks: vec![lls, opt, zca],
    })
}

/// Recovery-versus-oracle agreement on one collected Gram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramCheck {
    pub layer_id: usize,
    pub n: usize,
    pub keeps: Vec<usize>,
    /// `None` when the oracle's normal equations were too ill-conditioned to solve.
    pub max_relative_error: Option<f64>,
}

/// Compares recoveries at quarter, half and three-quarter depth against the
/// oracle for each Gram of a cache, using the ZCA unit order.
pub fn verify_gram_set(set: &GramSet, ridge_scale: f64, exec: Execution) -> Result<Vec<GramCheck>> {
    exec.map(&set.grams, |gram| {
        let n = gram.n();
        let mut keeps: Vec<usize> = [n / 4, n / 2, 3 * n / 4].into_iter().filter(|&k| k >= 1 && k < n).collect();
        keeps.dedup();
        let scores = score_unnorm_zca(gram, ridge_scale)?;
        let full = PruneSpec::new(PruneMode::Explicit { keep: Default::default() }, 1)?;
        let base = build_plan(&scores, gram, &full, ridge_scale)?;
        let mut worst = Some(0.0f64);
        for &keep in &keeps {
            let rec = recovery(&LayerPrunePlan { keep, ..base.clone() })?;
            match lls_recovery_from_gram(gram.matrix(), &rec.kept, ridge_scale) {
                Ok(oracle) => {
                    let e = relative_error(&oracle, &rec.a)?;
                    worst = worst.map(|w| w.max(e));
                }
                Err(crate::Error::Numeric(_)) => worst = None,
                Err(e) => return Err(e),
            }
        }
        Ok(GramCheck {
            layer_id: gram.layer_id,
            n,
            keeps,
            max_relative_error: worst,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            instances: 8,
            zca_instances: 8,
            perturbations: 10,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn small_sweep_passes() {
        let r = run_sweep(&small(), Execution::default()).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.checks[0].evaluations, 2 * (3 + 7 + 15 + 31));
    }

    #[test]
    fn injected_faults_fail() {
        let cfg = SweepConfig {
            fault: Some(Fault::PerturbRecovery(1e-3)),
            ..small()
        };
        let r = run_sweep(&cfg, Execution::default()).unwrap();
        assert!(!r.checks[0].passed());
        assert!(r.checks[0].worst.is_some());
        assert!(r.to_string().contains("FAIL lls_equivalence"));

        let cfg = SweepConfig {
            fault: Some(Fault::PerturbScores(1e-3)),
            ..small()
        };
        assert!(!run_sweep(&cfg, Execution::default()).unwrap().checks[2].passed());
    }

    #[test]
    fn policies_agree() {
        let a = run_sweep(&small(), Execution::Sequential).unwrap();
        let b = run_sweep(&small(), Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
