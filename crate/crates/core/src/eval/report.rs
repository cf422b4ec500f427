use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{count_flops_params, Network};
use crate::pruning::{PruneOutcome, PruneSpec, ScoreMethod};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer_id: usize,
    pub producer: usize,
    pub n_before: usize,
    pub keep: usize,
    pub retained_variance_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub flops_before: u64,
    pub flops_after: u64,
    pub params_before: u64,
    pub params_after: u64,
    pub speedup: f64,
}

impl Totals {
    pub fn between(before: &Network, after: &Network) -> Self {
        let (flops_before, params_before) = count_flops_params(before);
        let (flops_after, params_after) = count_flops_params(after);
        Self {
            flops_before,
            flops_after,
            params_before,
            params_after,
            speedup: flops_before as f64 / flops_after.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDelta {
    pub acc_before: f64,
    pub acc_after: f64,
    pub delta: f64,
}

impl AccuracyDelta {
    pub fn new(acc_before: f64, acc_after: f64) -> Self {
        Self {
            acc_before,
            acc_after,
            delta: acc_after - acc_before,
        }
    }
}

/// Summary of one pruning run. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub schema_version: u32,
    pub method: ScoreMethod,
    pub spec: PruneSpec,
    pub reconstruct: bool,
    pub layers: Vec<LayerReport>,
    pub totals: Totals,
    pub metrics: Option<AccuracyDelta>,
}

impl PruneReport {
    pub fn new(
        method: ScoreMethod,
        spec: PruneSpec,
        reconstruct: bool,
        original: &Network,
        outcome: &PruneOutcome,
    ) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            method,
            spec,
            reconstruct,
            layers: outcome
                .layers
                .iter()
                .map(|l| LayerReport {
                    layer_id: l.layer_id,
                    producer: l.producer,
                    n_before: l.n_before,
                    keep: l.keep,
                    retained_variance_fraction: l.retained_variance_fraction,
                })
                .collect(),
            totals: Totals::between(original, &outcome.network),
            metrics: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "row",
    "layer_id",
    "producer",
    "n_before",
    "keep",
    "retained_variance_fraction",
    "flops_before",
    "flops_after",
    "params_before",
    "params_after",
    "speedup",
    "acc_before",
    "acc_after",
    "delta",
];

fn csv_bytes(report: &PruneReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Internal(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for l in &report.layers {
        let mut row = vec![
            "layer".to_string(),
            l.layer_id.to_string(),
            l.producer.to_string(),
            l.n_before.to_string(),
            l.keep.to_string(),
            l.retained_variance_fraction.to_string(),
        ];
        row.resize(CSV_COLUMNS.len(), String::new());
        w.write_record(&row).map_err(csv_err)?;
    }
    let t = &report.totals;
    let mut row = vec![String::from("totals")];
    row.resize(6, String::new());
    row.extend([
        t.flops_before.to_string(),
        t.flops_after.to_string(),
        t.params_before.to_string(),
        t.params_after.to_string(),
        t.speedup.to_string(),
    ]);
    match &report.metrics {
        Some(m) => row.extend([m.acc_before.to_string(), m.acc_after.to_string(), m.delta.to_string()]),
        None => row.resize(CSV_COLUMNS.len(), String::new()),
    }
    w.write_record(&row).map_err(csv_err)?;
    w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))
}

/// Serialized bytes; floats use the shortest representation that parses back exactly.
pub fn report_bytes(report: &PruneReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report)?;
            v.push(b'\n');
            Ok(v)
        }
        ReportFormat::Csv => csv_bytes(report),
    }
}

pub fn emit_report(report: &PruneReport, path: &Path, format: ReportFormat) -> Result<()> {
    fs::write(path, report_bytes(report, format)?).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<PruneReport> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let report: PruneReport = serde_json::from_slice(&bytes)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Contract(format!(
            "{}: report schema {} is not supported (expected {REPORT_SCHEMA_VERSION})",
            path.display(),
            report.schema_version
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PruneReport {
        PruneReport {
            schema_version: REPORT_SCHEMA_VERSION,
            method: ScoreMethod::UnnormZca,
            spec: PruneSpec::uniform(0.5).unwrap(),
            reconstruct: true,
            layers: vec![
                LayerReport {
                    layer_id: 2,
                    producer: 0,
                    n_before: 128,
                    keep: 64,
                    retained_variance_fraction: 0.1 + 0.2,
                },
                LayerReport {
                    layer_id: 4,
                    producer: 2,
                    n_before: 128,
                    keep: 64,
                    retained_variance_fraction: 1.0 / 3.0,
                },
            ],
            totals: Totals {
                flops_before: 100,
                flops_after: 30,
                params_before: 55,
                params_after: 20,
                speedup: 100.0 / 30.0,
            },
            metrics: Some(AccuracyDelta::new(0.97, 0.9612345678901234)),
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        emit_report(&sample(), &p, ReportFormat::Json).unwrap();
        assert_eq!(read_report(&p).unwrap(), sample());
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.find("schema_version").unwrap() < text.find("layers").unwrap());
    }

    #[test]
    fn csv_has_layer_rows_plus_totals() {
        let text = String::from_utf8(report_bytes(&sample(), ReportFormat::Csv).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 1);
        assert!(lines[3].starts_with("totals,,,,,,100,30,55,20,"));
        assert_eq!(lines[1], "layer,2,0,128,64,0.30000000000000004,,,,,,,,");
    }

    #[test]
    fn unwritable_path() {
        let err = emit_report(&sample(), Path::new("/nonexistent/dir/r.json"), ReportFormat::Json).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
