use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::runner::{IncrementalOutcome, OfflineOutcome, INCOMING_TEST, OFFLINE_TEST};
use super::stats::DatasetStats;
use crate::error::{Error, Result};
use crate::eval::{EvalSnapshot, ForgettingCurve};
use crate::jsonio::save_json;
use crate::models::TrainReport;
use crate::preprocess::ClassWeights;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub offline_train: usize,
    pub offline_test: usize,
    pub incoming_train: usize,
    pub incoming_test: usize,
    pub batches: usize,
}

/// One model's path through the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model_id: String,
    pub offline_train: TrainReport,
    /// Offline model on the offline and incoming test sets.
    pub offline_on_offline_test: EvalSnapshot,
    pub offline_on_incoming_test: EvalSnapshot,
    /// Incoming test set before and after incremental learning (last batch).
    pub incoming_before: EvalSnapshot,
    pub incoming_after: EvalSnapshot,
    pub offline_after: EvalSnapshot,
    pub final_forgetting: f64,
    pub curve: ForgettingCurve,
    pub stopped_early_at: Option<i64>,
    pub batches_run: usize,
    pub incremental_samples_seen: u64,
    pub checkpoints: Vec<String>,
}

impl RunReport {
    pub fn new(offline: &OfflineOutcome, run: &IncrementalOutcome) -> Self {
        let after_inc = run
            .last_snapshot(INCOMING_TEST)
            .cloned()
            .unwrap_or_else(|| offline.on_incoming_test.clone());
        let after_off = run
            .last_snapshot(OFFLINE_TEST)
            .cloned()
            .unwrap_or_else(|| offline.on_offline_test.clone());
        RunReport {
            model_id: run.model_id.clone(),
            offline_train: offline.train.clone(),
            offline_on_offline_test: offline.on_offline_test.clone(),
            offline_on_incoming_test: offline.on_incoming_test.clone(),
            incoming_before: EvalSnapshot {
                model_id: run.model_id.clone(),
                ..offline.on_incoming_test.clone()
            },
            incoming_after: after_inc,
            offline_after: after_off,
            final_forgetting: run.final_forgetting(),
            curve: run.curve.clone(),
            stopped_early_at: run.stopped_early_at,
            batches_run: run.batches_run,
            incremental_samples_seen: run.samples_seen,
            checkpoints: run.checkpoints.clone(),
        }
    }
}

/// Wall-clock costs; hardware-dependent, so kept out of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub model_id: String,
    pub offline_secs: f64,
    pub mean_batch_secs: f64,
    pub batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: BTreeMap<String, String>,
    pub splits: SplitSizes,
    pub offline_stats: DatasetStats,
    pub incoming_stats: DatasetStats,
    pub class_weights: ClassWeights,
    pub offline_checkpoint: Option<String>,
    pub runs: Vec<RunReport>,
    #[serde(skip)]
    pub timing: Vec<TimingRow>,
}

/// Percentage with two decimals, `NA` for undefined values.
pub fn pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}%", v * 100.0),
        None => "NA".into(),
    }
}

fn metric_row(out: &mut String, label: &str, set: &str, s: &EvalSnapshot) {
    let _ = writeln!(
        out,
        "{:<12} {:<22} {:>9} {:>9} {:>9} {:>9} {:>9}",
        label,
        set,
        pct(Some(s.accuracy)),
        pct(Some(s.f1)),
        pct(Some(s.precision)),
        pct(Some(s.recall)),
        pct(s.auroc)
    );
}

fn metric_header(out: &mut String, first: &str, second: &str) {
    let _ = writeln!(
        out,
        "{:<12} {:<22} {:>9} {:>9} {:>9} {:>9} {:>9}",
        first, second, "Accuracy", "F1", "Precision", "Recall", "AUROC"
    );
}

pub fn render_tables(report: &ExperimentReport) -> String {
    let mut out = String::new();

    let _ = writeln!(out, "Offline models before incremental learning");
    metric_header(&mut out, "model", "test set");
    let mut seen = std::collections::BTreeSet::new();
    for r in &report.runs {
        let kind = r.offline_on_offline_test.model_id.clone();
        if seen.insert(kind.clone()) {
            metric_row(&mut out, &kind, "offline", &r.offline_on_offline_test);
            metric_row(&mut out, &kind, "incoming", &r.offline_on_incoming_test);
        }
    }

    let _ = writeln!(out, "\nIncoming test set before and after incremental learning (last batch)");
    metric_header(&mut out, "model", "stage");
    for r in &report.runs {
        metric_row(&mut out, &r.model_id, "before", &r.incoming_before);
        metric_row(&mut out, &r.model_id, "after", &r.incoming_after);
    }

    let _ = writeln!(out, "\nForgetting");
    let _ = writeln!(
        out,
        "{:<12} {:>14} {:>14} {:>11} {:>8} {:>12}",
        "model", "offline before", "offline after", "forgetting", "batches", "early stop"
    );
    for r in &report.runs {
        let _ = writeln!(
            out,
            "{:<12} {:>14} {:>14} {:>11} {:>8} {:>12}",
            r.model_id,
            pct(Some(r.curve.baseline_accuracy())),
            pct(Some(r.offline_after.accuracy)),
            pct(Some(r.final_forgetting)),
            r.batches_run,
            r.stopped_early_at
                .map_or_else(|| "-".to_owned(), |b| b.to_string())
        );
    }

    if !report.timing.is_empty() {
        let _ = writeln!(out, "\nTime cost");
        let _ = writeln!(out, "{:<12} {:>16} {:>20}", "model", "offline (s)", "mean per batch (s)");
        for t in &report.timing {
            let _ = writeln!(
                out,
                "{:<12} {:>16.4} {:>20.6}",
                t.model_id, t.offline_secs, t.mean_batch_secs
            );
        }
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn curve_file_name(model_id: &str) -> String {
    format!("curve_{}.csv", model_id.replace('+', "_"))
}

/// Writes `report.json`, `tables.txt`, `timing.json` and one
/// `curve_<model>.csv` per run into `dir`. Returns the files written.
pub fn emit_reports(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let p = dir.join("report.json");
    save_json(report, &p)?;
    written.push(p);

    for r in &report.runs {
        let p = dir.join(curve_file_name(&r.model_id));
        r.curve.write_csv(&p)?;
        written.push(p);
    }

    let p = dir.join("tables.txt");
    write_text(&p, &render_tables(report))?;
    written.push(p);

    let p = dir.join("timing.json");
    save_json(&report.timing, &p)?;
    written.push(p);
    Ok(written)
}
