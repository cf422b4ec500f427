use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{DataFormat, DataSource, RunConfig};
use super::{CliError, CliResult, EXIT_OTHER, EXIT_STALE, EXIT_VERIFY};
use crate::error::Error;
use crate::eval::{
    collect_grams, emit_report, evaluate, load_csv, load_idx, read_report, sample_calibration, white_noise,
    AccuracyDelta, Dataset, Metrics, PruneReport, ReportFormat, SampleCount, Split,
};
use crate::exec::Execution;
use crate::linalg::cache::{read_cache, write_cache, GramSet};
use crate::linalg::Tensor2D;
use crate::model::{load_model, save_model, Network};
use crate::pruning::{prune_network, PruneOptions};
use crate::verify::{run_sweep, verify_gram_set, Fault, SweepConfig};

pub const GRAMS_DIR: &str = "grams";
pub const PRUNED_MODEL: &str = "model.pruned.snm";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const PLANS_DIR: &str = "plans";
pub const LOCK_FILE: &str = ".subprune.lock";

/// White-noise calibration size when `samples` is "all".
const DEFAULT_NOISE_SAMPLES: usize = 1024;

/// Advisory lock on an output directory, released on drop.
struct OutputLock(PathBuf);

impl OutputLock {
    fn acquire(out: &Path) -> CliResult<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::new(
                EXIT_OTHER,
                format!("{} exists: another run is using this output directory (delete it if stale)", path.display()),
            )),
            Err(e) => Err(Error::io(&path, e).into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn load_source(cfg: &RunConfig, src: &DataSource, split: Split) -> CliResult<Dataset> {
    let data = cfg.data.as_ref().expect("validated");
    let mut ds = match data.format {
        DataFormat::Idx => load_idx(
            &src.path,
            src.labels.as_deref(),
            data.num_classes.expect("validated"),
            split,
        )?,
        DataFormat::Csv => load_csv(&src.path, data.num_classes, split)?,
    };
    ds.normalize(&data.preprocess)?;
    Ok(ds)
}

fn test_set(cfg: &RunConfig) -> CliResult<Option<Dataset>> {
    match cfg.data.as_ref().and_then(|d| d.test.as_ref()) {
        Some(src) => load_source(cfg, src, Split::Test).map(Some),
        None => Ok(None),
    }
}

fn calibration_inputs(cfg: &RunConfig, net: &Network) -> CliResult<Tensor2D> {
    if cfg.calibration.white_noise {
        let n = match cfg.calibration.samples {
            SampleCount::All => DEFAULT_NOISE_SAMPLES,
            SampleCount::Count(n) => n,
        };
        return Ok(white_noise(n, net.input_shape().numel(), cfg.seed));
    }
    let src = cfg
        .data
        .as_ref()
        .and_then(|d| d.calibration.as_ref())
        .expect("validated");
    let ds = load_source(cfg, src, Split::Calibration)?;
    Ok(sample_calibration(&ds, cfg.calibration.samples, cfg.seed)?.inputs().clone())
}

pub fn cmd_collect(cfg: &RunConfig, grams_dir: &Path, exec: Execution) -> CliResult<()> {
    cfg.validate(true, false)?;
    let _lock = OutputLock::acquire(&cfg.out)?;
    let net = load_model(cfg.model_path()?)?;
    let inputs = calibration_inputs(cfg, &net)?;
    info!("collecting Grams from {} samples", inputs.rows());
    let set = collect_grams(&net, &inputs, cfg.batch_size, cfg.absorb_bias, exec)?;
    write_cache(grams_dir, &set)?;
    println!("collected {} Grams from {} samples into {}", set.grams.len(), inputs.rows(), grams_dir.display());
    for g in &set.grams {
        println!("  layer {:>3}: {:>5} units, {} samples", g.layer_id, g.n(), g.sample_count());
    }
    Ok(())
}

/// The cache must cover every prune site with a Gram of the right size.
fn check_cache(net: &Network, set: &GramSet, cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    let stale = |msg: String| CliError::new(EXIT_STALE, format!("stale Gram cache {}: {msg}", dir.display()));
    if set.absorb_bias != cfg.absorb_bias {
        return Err(stale(format!(
            "collected with absorb_bias={}, config says {}",
            set.absorb_bias, cfg.absorb_bias
        )));
    }
    for site in net.prune_sites() {
        let expected = site.units + set.absorb_bias as usize;
        match set.get(site.consumer) {
            None => return Err(stale(format!("no Gram for layer {}", site.consumer))),
            Some(g) if g.n() != expected => {
                return Err(stale(format!(
                    "layer {} has {} units in the cache, model has {expected}",
                    site.consumer,
                    g.n()
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

fn replace_dir(path: &Path) -> CliResult<()> {
    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_report(report: &PruneReport, out: &Path) -> CliResult<String> {
    let json = out.join(REPORT_JSON);
    emit_report(report, &json, ReportFormat::Json)?;
    emit_report(report, &out.join(REPORT_CSV), ReportFormat::Csv)?;
    let bytes = fs::read(&json).map_err(|e| Error::io(&json, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn accuracy(m: &Metrics) -> f64 {
    m.accuracy.unwrap_or(f64::NAN)
}

pub fn cmd_prune(cfg: &RunConfig, grams_dir: &Path, exec: Execution) -> CliResult<()> {
    cfg.validate(false, true)?;
    let _lock = OutputLock::acquire(&cfg.out)?;
    let net = load_model(cfg.model_path()?)?;
    let set = read_cache(grams_dir)?;
    check_cache(&net, &set, cfg, grams_dir)?;
    let opts = PruneOptions {
        method: cfg.method,
        spec: cfg.spec.clone(),
        reconstruct: cfg.reconstruct,
        ridge_scale: cfg.ridge_scale,
        seed: cfg.seed,
        exec,
    };
    let outcome = prune_network(&net, &set, &opts)?;

    let model_dir = cfg.out.join(PRUNED_MODEL);
    replace_dir(&model_dir)?;
    save_model(&outcome.network, &model_dir)?;
    let plans_dir = cfg.out.join(PLANS_DIR);
    replace_dir(&plans_dir)?;
    for plan in &outcome.plans {
        let p = plans_dir.join(format!("layer_{}.json", plan.layer_id));
        let mut bytes = serde_json::to_vec_pretty(&plan.dump()).map_err(Error::from)?;
        bytes.push(b'\n');
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }

    let mut report = PruneReport::new(cfg.method, cfg.spec.clone(), cfg.reconstruct, &net, &outcome);
    if let Some(test) = test_set(cfg)? {
        let before = evaluate(&net, &test, exec)?;
        let after = evaluate(&outcome.network, &test, exec)?;
        report.metrics = Some(AccuracyDelta::new(accuracy(&before), accuracy(&after)));
    }
    let hash = write_report(&report, &cfg.out)?;

    for l in &report.layers {
        println!(
            "layer {:>3}: {:>5} -> {:>5} units, retained variance {:.6}",
            l.layer_id, l.n_before, l.keep, l.retained_variance_fraction
        );
    }
    let t = &report.totals;
    println!(
        "flops {} -> {} ({:.3}x), params {} -> {}",
        t.flops_before, t.flops_after, t.speedup, t.params_before, t.params_after
    );
    if let Some(m) = &report.metrics {
        println!("accuracy {:.4} -> {:.4} (delta {:+.4})", m.acc_before, m.acc_after, m.delta);
    }
    println!("wrote {} (sha256 {hash})", cfg.out.join(REPORT_JSON).display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub original: Metrics,
    pub pruned: Option<Metrics>,
    pub delta: Option<f64>,
}

pub fn cmd_eval(cfg: &RunConfig, json: bool, exec: Execution) -> CliResult<EvalSummary> {
    cfg.validate(false, true)?;
    let test = test_set(cfg)?.ok_or_else(|| Error::Contract("eval needs \"data.test\" in the config".into()))?;
    let net = load_model(cfg.model_path()?)?;
    let original = evaluate(&net, &test, exec)?;
    let pruned_dir = cfg.out.join(PRUNED_MODEL);
    let pruned = if pruned_dir.exists() {
        Some(evaluate(&load_model(&pruned_dir)?, &test, exec)?)
    } else {
        None
    };
    let delta = pruned.as_ref().map(|p| accuracy(p) - accuracy(&original));
    let summary = EvalSummary { original, pruned, delta };

    if json {
        println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    } else {
        println!("original: accuracy {:.4}, loss {:.6}", accuracy(&original), original.mean_loss);
        if let (Some(p), Some(d)) = (&pruned, delta) {
            println!("pruned:   accuracy {:.4}, loss {:.6}", accuracy(p), p.mean_loss);
            println!("delta:    {d:+.4}");
        }
    }

    // Fold fresh metrics into an existing report.
    let report_path = cfg.out.join(REPORT_JSON);
    if let (Some(p), true) = (&pruned, report_path.exists()) {
        let _lock = OutputLock::acquire(&cfg.out)?;
        let mut report = read_report(&report_path)?;
        report.metrics = Some(AccuracyDelta::new(accuracy(&original), accuracy(p)));
        write_report(&report, &cfg.out)?;
    }
    Ok(summary)
}

pub fn cmd_verify(
    cfg: &RunConfig,
    real_grams: Option<&Path>,
    inject_fault: Option<f64>,
    json: bool,
    exec: Execution,
) -> CliResult<()> {
    let sweep_cfg = SweepConfig {
        seed: cfg.seed,
        ridge_scale: cfg.ridge_scale,
        fault: inject_fault.map(Fault::PerturbRecovery),
        ..SweepConfig::default()
    };
    let report = run_sweep(&sweep_cfg, exec)?;
    let real = match real_grams {
        Some(dir) => Some(verify_gram_set(&read_cache(dir)?, cfg.ridge_scale, exec)?),
        None => None,
    };
    if json {
        #[derive(Serialize)]
        struct Out<'a> {
            passed: bool,
            sweep: &'a crate::verify::SweepReport,
            real_grams: &'a Option<Vec<crate::verify::GramCheck>>,
        }
        let out = Out {
            passed: report.passed(),
            sweep: &report,
            real_grams: &real,
        };
        println!("{}", serde_json::to_string_pretty(&out).map_err(Error::from)?);
    } else {
        print!("{report}");
        for c in real.iter().flatten() {
            match c.max_relative_error {
                Some(e) => println!("real Gram layer {:>3} (n={}): max relative error {e:.3e}", c.layer_id, c.n),
                None => println!("real Gram layer {:>3} (n={}): oracle ill-conditioned, skipped", c.layer_id, c.n),
            }
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::new(EXIT_VERIFY, "oracle verification failed"))
    }
}

pub fn cmd_report(cfg: &RunConfig) -> CliResult<()> {
    let path = cfg.out.join(REPORT_JSON);
    let report = read_report(&path)?;
    emit_report(&report, &cfg.out.join(REPORT_CSV), ReportFormat::Csv)?;
    println!("method {} ({}), reconstruct {}", report.method, report.spec.mode_name(), report.reconstruct);
    println!("{:>6} {:>8} {:>6} {:>10}", "layer", "n_before", "keep", "retained");
    for l in &report.layers {
        println!(
            "{:>6} {:>8} {:>6} {:>10.6}",
            l.layer_id, l.n_before, l.keep, l.retained_variance_fraction
        );
    }
    let t = &report.totals;
    println!(
        "flops {} -> {} ({:.3}x), params {} -> {}",
        t.flops_before, t.flops_after, t.speedup, t.params_before, t.params_after
    );
    if let Some(m) = &report.metrics {
        println!("accuracy {:.4} -> {:.4} (delta {:+.4})", m.acc_before, m.acc_after, m.delta);
    }
    Ok(())
}
