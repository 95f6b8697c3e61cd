//! Detection metrics, AUROC, forgetting rate and per-batch curves.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::OnlineClassifier;
use crate::preprocess::Example;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Malicious (1) is the positive class.
pub fn confusion(preds: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    if preds.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: preds.len(),
        });
    }
    check_binary(preds, "predictions")?;
    check_binary(labels, "labels")?;
    let mut c = ConfusionCounts::default();
    for (&p, &y) in preds.iter().zip(labels) {
        match (p == 1, y == 1) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn check_binary(v: &[u8], what: &str) -> Result<()> {
    match v.iter().find(|&&b| b > 1) {
        Some(b) => Err(Error::invalid(format!("{what} must be 0 or 1, found {b}"))),
        None => Ok(()),
    }
}

fn frac(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn accuracy(c: &ConfusionCounts) -> f64 {
    frac(c.tp + c.tn, c.total())
}

/// 0 when nothing was predicted positive.
pub fn precision(c: &ConfusionCounts) -> f64 {
    frac(c.tp, c.tp + c.fp)
}

/// 0 when there are no positives.
pub fn recall(c: &ConfusionCounts) -> f64 {
    frac(c.tp, c.tp + c.fn_)
}

pub fn f1(c: &ConfusionCounts) -> f64 {
    let (p, r) = (precision(c), recall(c));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Area under the ROC curve as the Mann–Whitney statistic with midranks
/// for tied scores. `None` when either class is absent.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    check_binary(labels, "labels")?;
    let n_pos = labels.iter().filter(|&&y| y != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j share their mean.
        let mid = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] != 0).count();
        rank_sum_pos += mid * pos_in_group as f64;
        i = j;
    }
    let p = n_pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(Some(u / (p * n_neg as f64)))
}

/// `(acc_before − acc_after) / acc_before`; negative when old-data
/// accuracy improved.
pub fn forgetting_rate(acc_before: f64, acc_after: f64) -> Result<f64> {
    if acc_before <= 0.0 || !acc_before.is_finite() || !acc_after.is_finite() {
        return Err(Error::invalid(format!(
            "forgetting rate needs a positive baseline accuracy, got {acc_before}"
        )));
    }
    Ok((acc_before - acc_after) / acc_before)
}

/// Metrics of one model checkpoint on one named test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub model_id: String,
    pub test_set_id: String,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the test set holds a single class.
    pub auroc: Option<f64>,
    /// −1 before any incremental batch.
    pub batch_index: i64,
    #[serde(skip)]
    pub wall_secs: f64,
}

impl EvalSnapshot {
    pub fn from_outputs(
        preds: &[u8],
        scores: &[f64],
        labels: &[u8],
        model_id: &str,
        test_set_id: &str,
        batch_index: i64,
    ) -> Result<Self> {
        let counts = confusion(preds, labels)?;
        Ok(EvalSnapshot {
            model_id: model_id.to_owned(),
            test_set_id: test_set_id.to_owned(),
            counts,
            accuracy: accuracy(&counts),
            precision: precision(&counts),
            recall: recall(&counts),
            f1: f1(&counts),
            auroc: auroc(scores, labels)?,
            batch_index,
            wall_secs: 0.0,
        })
    }
}

pub fn snapshot<M: OnlineClassifier + ?Sized>(
    model: &M,
    test: &[Example],
    model_id: &str,
    test_set_id: &str,
    batch_index: i64,
) -> Result<EvalSnapshot> {
    if test.is_empty() {
        return Err(Error::invalid(format!("test set `{test_set_id}` is empty")));
    }
    let start = Instant::now();
    let mut preds = Vec::with_capacity(test.len());
    let mut scores = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    for e in test {
        preds.push(model.predict(&e.x)?);
        scores.push(model.score(&e.x)?);
        labels.push(e.y);
    }
    let mut s = EvalSnapshot::from_outputs(&preds, &scores, &labels, model_id, test_set_id, batch_index)?;
    s.wall_secs = start.elapsed().as_secs_f64();
    Ok(s)
}

/// One row of a forgetting curve. Detection metrics are on the incoming
/// (new-distribution) test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub batch_index: i64,
    pub offline_acc: f64,
    pub incoming_acc: f64,
    pub forgetting: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingCurve {
    pub model_id: String,
    /// Pre-incremental row (batch −1, forgetting 0).
    pub baseline: CurvePoint,
    pub points: Vec<CurvePoint>,
}

impl ForgettingCurve {
    pub fn baseline_accuracy(&self) -> f64 {
        self.baseline.offline_acc
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn offline_accuracies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.offline_acc).collect()
    }

    pub fn incoming_accuracies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.incoming_acc).collect()
    }

    pub fn forgetting(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.forgetting).collect()
    }

    /// Point indices sorted by ascending incoming accuracy (stable).
    pub fn ascending_by_accuracy(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.sort_by(|&a, &b| {
            self.points[a]
                .incoming_acc
                .total_cmp(&self.points[b].incoming_acc)
        });
        idx
    }

    pub fn last(&self) -> &CurvePoint {
        self.points.last().unwrap_or(&self.baseline)
    }

    pub const CSV_HEADER: &'static str =
        "batch_index,offline_acc,incoming_acc,forgetting,f1,precision,recall,auroc";

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        writeln!(f, "{}", Self::CSV_HEADER).map_err(io)?;
        for p in std::iter::once(&self.baseline).chain(&self.points) {
            let auroc = p.auroc.map_or_else(|| "NA".to_owned(), |a| format!("{a}"));
            writeln!(
                f,
                "{},{},{},{},{},{},{},{}",
                p.batch_index,
                p.offline_acc,
                p.incoming_acc,
                p.forgetting,
                p.f1,
                p.precision,
                p.recall,
                auroc
            )
            .map_err(io)?;
        }
        f.flush().map_err(io)
    }

    pub fn read_csv(path: impl AsRef<Path>, model_id: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(Self::CSV_HEADER) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                reason: "unexpected curve header".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let bad = |reason: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                reason,
            };
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 8 {
                return Err(bad(format!("expected 8 cells, got {}", cells.len())));
            }
            let num = |k: usize| -> Result<f64> {
                cells[k]
                    .parse()
                    .map_err(|_| bad(format!("`{}` is not a number", cells[k])))
            };
            rows.push(CurvePoint {
                batch_index: cells[0]
                    .parse()
                    .map_err(|_| bad(format!("bad batch index `{}`", cells[0])))?,
                offline_acc: num(1)?,
                incoming_acc: num(2)?,
                forgetting: num(3)?,
                f1: num(4)?,
                precision: num(5)?,
                recall: num(6)?,
                auroc: if cells[7] == "NA" { None } else { Some(num(7)?) },
            });
        }
        if rows.is_empty() || rows[0].batch_index != -1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 2,
                reason: "missing baseline row".into(),
            });
        }
        let baseline = rows.remove(0);
        Ok(ForgettingCurve {
            model_id: model_id.to_owned(),
            baseline,
            points: rows,
        })
    }
}

/// Pairs offline-test and incoming-test snapshots by batch index into a
/// curve. The batch −1 pair is the baseline.
pub fn build_curve(
    snapshots: &[EvalSnapshot],
    offline_set_id: &str,
    incoming_set_id: &str,
) -> Result<ForgettingCurve> {
    let model_id = snapshots
        .first()
        .map(|s| s.model_id.clone())
        .ok_or_else(|| Error::invalid("no snapshots"))?;
    if let Some(other) = snapshots.iter().find(|s| s.model_id != model_id) {
        return Err(Error::invalid(format!(
            "snapshots mix models `{model_id}` and `{}`",
            other.model_id
        )));
    }
    let find = |set: &str, b: i64| {
        snapshots
            .iter()
            .find(|s| s.test_set_id == set && s.batch_index == b)
    };
    let (Some(base_off), Some(base_inc)) = (find(offline_set_id, -1), find(incoming_set_id, -1))
    else {
        return Err(Error::invalid("missing baseline (batch −1) snapshot"));
    };
    let baseline_acc = base_off.accuracy;

    let point = |off: &EvalSnapshot, inc: &EvalSnapshot| -> Result<CurvePoint> {
        Ok(CurvePoint {
            batch_index: off.batch_index,
            offline_acc: off.accuracy,
            incoming_acc: inc.accuracy,
            forgetting: forgetting_rate(baseline_acc, off.accuracy)?,
            f1: inc.f1,
            precision: inc.precision,
            recall: inc.recall,
            auroc: inc.auroc,
        })
    };

    let mut batch_ids: Vec<i64> = snapshots
        .iter()
        .filter(|s| s.batch_index >= 0 && s.test_set_id == offline_set_id)
        .map(|s| s.batch_index)
        .collect();
    batch_ids.sort_unstable();
    batch_ids.dedup();

    let mut points = Vec::with_capacity(batch_ids.len());
    for b in batch_ids {
        let inc = find(incoming_set_id, b).ok_or_else(|| {
            Error::invalid(format!("batch {b} lacks an incoming-test snapshot"))
        })?;
        points.push(point(find(offline_set_id, b).unwrap(), inc)?);
    }
    Ok(ForgettingCurve {
        model_id,
        baseline: point(base_off, base_inc)?,
        points,
    })
}
