use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, ModelChoice, WeightMode};
use super::report::{ExperimentReport, RunReport, SplitSizes, TimingRow};
use super::stats::{dataset_stats, DatasetStats};
use crate::error::{Error, Result};
use crate::eval::{build_curve, forgetting_rate, snapshot, EvalSnapshot, ForgettingCurve};
use crate::features::io::{read_feature_csv, read_feature_csv_mapped, ColumnMapping};
use crate::features::{LabeledSample, FEATURE_COUNT};
use crate::models::{
    fit_offline, mean_loss, partial_fit, AnyModel, Checkpoint, LinearKind, LinearModel, LwfLearner, MlpModel,
    OnlineClassifier, Provenance, TrainReport,
};
use crate::preprocess::{
    batches, class_weights, fit_minmax, oversample_minority, to_examples, ClassWeights, Example,
    MinMaxScaler, SplitPlan,
};

pub const OFFLINE_TEST: &str = "offline_test";
pub const INCOMING_TEST: &str = "incoming_test";
/// Incoming-source sample ids start here; offline ids are plain indices.
pub const INCOMING_ID_BASE: u64 = 1 << 40;

/// Both normalized populations, split and ready for training.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub scaler: MinMaxScaler,
    pub plan: SplitPlan,
    pub offline_train: Vec<Example>,
    pub offline_test: Vec<Example>,
    pub incoming_train: Vec<Example>,
    pub incoming_test: Vec<Example>,
    pub weights: ClassWeights,
    pub offline_stats: DatasetStats,
    pub incoming_stats: DatasetStats,
}

impl PreparedData {
    pub fn sizes(&self, batch_size: usize) -> SplitSizes {
        SplitSizes {
            offline_train: self.offline_train.len(),
            offline_test: self.offline_test.len(),
            incoming_train: self.incoming_train.len(),
            incoming_test: self.incoming_test.len(),
            batches: self.incoming_train.len().div_ceil(batch_size.max(1)),
        }
    }
}

fn load_one(path: &Path, mapping: Option<&ColumnMapping>, origin: &str) -> Result<Vec<LabeledSample>> {
    match mapping {
        Some(m) => read_feature_csv_mapped(path, m, origin),
        None => read_feature_csv(path),
    }
}

/// Reads the offline and incoming feature CSVs named by the config.
pub fn load_sources(cfg: &ExperimentConfig) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    let mapping = cfg.feature_mapping.as_ref().map(ColumnMapping::read).transpose()?;
    let offline = load_one(&cfg.offline_source, mapping.as_ref(), "offline")?;
    let incoming = load_one(&cfg.incoming_source, mapping.as_ref(), "incoming")?;
    Ok((offline, incoming))
}

fn pick(samples: &[LabeledSample], idx: &[usize]) -> Vec<LabeledSample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

fn tagged(scaler: &MinMaxScaler, samples: &[LabeledSample], idx: &[usize], base: u64) -> Result<Vec<Example>> {
    let mut ex = to_examples(scaler, &pick(samples, idx), 0)?;
    for (e, &i) in ex.iter_mut().zip(idx) {
        e.id = base + i as u64;
    }
    Ok(ex)
}

/// Splits both sources, fits the scaler on the offline training split only
/// and normalizes all four sets.
pub fn prepare(
    cfg: &ExperimentConfig,
    offline: &[LabeledSample],
    incoming: &[LabeledSample],
) -> Result<PreparedData> {
    cfg.validate()?;
    let plan = cfg.split_plan();
    let (off_tr, off_te) = plan.indices(offline.len())?;
    let inc_plan = SplitPlan {
        seed: plan.seed.wrapping_add(1),
        ..plan
    };
    let (mut inc_tr, inc_te) = inc_plan.indices(incoming.len())?;
    if off_tr.is_empty() || off_te.is_empty() || inc_tr.is_empty() || inc_te.is_empty() {
        return Err(Error::invalid("a train or test split came out empty"));
    }
    if cfg.shuffle_incremental {
        inc_tr.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed.wrapping_add(2)));
    }

    let scaler = fit_minmax(&pick(offline, &off_tr), cfg.clip_normalize)?;
    let mut offline_train = tagged(&scaler, offline, &off_tr, 0)?;
    let offline_test = tagged(&scaler, offline, &off_te, 0)?;
    let incoming_train = tagged(&scaler, incoming, &inc_tr, INCOMING_ID_BASE)?;
    let incoming_test = tagged(&scaler, incoming, &inc_te, INCOMING_ID_BASE)?;

    let weights = match &cfg.class_weights {
        WeightMode::Uniform => ClassWeights::uniform(),
        WeightMode::Auto => class_weights(offline_train.iter().map(|e| e.y))?,
        WeightMode::Explicit(w) => *w,
    };
    if cfg.oversample {
        offline_train = oversample_minority(&offline_train, |e| e.y, plan.seed.wrapping_add(3));
    }

    Ok(PreparedData {
        scaler,
        plan,
        offline_train,
        offline_test,
        incoming_train,
        incoming_test,
        weights,
        offline_stats: dataset_stats(offline),
        incoming_stats: dataset_stats(incoming),
    })
}

#[derive(Debug, Clone)]
pub struct OfflineOutcome {
    pub checkpoint: Checkpoint,
    pub checkpoint_path: Option<String>,
    pub train: TrainReport,
    pub on_offline_test: EvalSnapshot,
    pub on_incoming_test: EvalSnapshot,
}

#[derive(Debug, Clone)]
pub struct IncrementalOutcome {
    pub model_id: String,
    pub model: AnyModel,
    pub snapshots: Vec<EvalSnapshot>,
    pub curve: ForgettingCurve,
    pub checkpoints: Vec<String>,
    pub stopped_early_at: Option<i64>,
    pub batches_run: usize,
    pub samples_seen: u64,
    pub batch_secs: Vec<f64>,
}

impl IncrementalOutcome {
    pub fn last_snapshot(&self, test_set: &str) -> Option<&EvalSnapshot> {
        self.snapshots.iter().rev().find(|s| s.test_set_id == test_set)
    }

    pub fn final_forgetting(&self) -> f64 {
        self.curve.last().forgetting
    }
}

fn file_id(model_id: &str) -> String {
    model_id.replace('+', "_")
}

/// Drives the offline phase, the incremental phase and the LwF comparison
/// over one prepared dataset.
#[derive(Debug)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub data: PreparedData,
    /// Write checkpoints under `cfg.output_dir`.
    pub persist: bool,
    trained_ids: HashSet<u64>,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig, data: PreparedData) -> Self {
        Experiment {
            cfg,
            data,
            persist: true,
            trained_ids: HashSet::new(),
        }
    }

    pub fn from_config(cfg: ExperimentConfig) -> Result<Self> {
        let (offline, incoming) = load_sources(&cfg)?;
        let data = prepare(&cfg, &offline, &incoming)?;
        Ok(Self::new(cfg, data))
    }

    pub fn in_memory(mut self) -> Self {
        self.persist = false;
        self
    }

    /// Ids of every sample ever handed to a training call.
    pub fn trained_ids(&self) -> &HashSet<u64> {
        &self.trained_ids
    }

    pub fn build_model(&self) -> Result<AnyModel> {
        let eta = self.cfg.effective_eta();
        let seed = self.cfg.seed;
        let linear = |kind| -> Result<AnyModel> {
            let l2 = if kind == LinearKind::SvmHinge { self.cfg.l2 } else { 0.0 };
            Ok(AnyModel::Linear(LinearModel::new(kind, FEATURE_COUNT, eta, l2, seed)?))
        };
        match self.cfg.model {
            ModelChoice::Perceptron => linear(LinearKind::Perceptron),
            ModelChoice::Logistic => linear(LinearKind::Logistic),
            ModelChoice::Svm => linear(LinearKind::SvmHinge),
            ModelChoice::Mlp => {
                let mut sizes = vec![FEATURE_COUNT];
                sizes.extend(&self.cfg.hidden);
                sizes.push(2);
                Ok(AnyModel::Mlp(MlpModel::new(&sizes, eta, seed)?))
            }
        }
    }

    fn checkpoint_dir(&self) -> Result<PathBuf> {
        let dir = self.cfg.output_dir.join("checkpoints");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn save_checkpoint(&self, ckpt: &Checkpoint, name: &str) -> Result<Option<String>> {
        if !self.persist {
            return Ok(None);
        }
        let dir = self.checkpoint_dir()?;
        ckpt.save(dir.join(name))?;
        Ok(Some(format!("checkpoints/{name}")))
    }

    /// Evaluates on both test sets, concurrently.
    fn evaluate(&self, model: &AnyModel, model_id: &str, batch: i64) -> Result<(EvalSnapshot, EvalSnapshot)> {
        let (off, inc) = std::thread::scope(|s| {
            let h = s.spawn(|| snapshot(model, &self.data.offline_test, model_id, OFFLINE_TEST, batch));
            let inc = snapshot(model, &self.data.incoming_test, model_id, INCOMING_TEST, batch);
            (h.join().expect("evaluation thread panicked"), inc)
        });
        Ok((off?, inc?))
    }

    pub fn run_offline_phase(&mut self) -> Result<OfflineOutcome> {
        let mut model = self.build_model()?;
        let epochs = self.cfg.effective_epochs();
        self.trained_ids
            .extend(self.data.offline_train.iter().map(|e| e.id));
        let train = fit_offline(&mut model, &self.data.offline_train, epochs, &self.data.weights)?;
        let id = model.kind_name().to_owned();
        let (on_offline_test, on_incoming_test) = self.evaluate(&model, &id, -1)?;
        let checkpoint = Checkpoint::new(
            model,
            Provenance {
                phase: "offline".into(),
                samples_seen: train.samples_seen,
                batch_index: -1,
            },
        );
        let checkpoint_path = self.save_checkpoint(&checkpoint, &format!("{}_offline.json", file_id(&id)))?;
        Ok(OfflineOutcome {
            checkpoint,
            checkpoint_path,
            train,
            on_offline_test,
            on_incoming_test,
        })
    }

    /// Wraps a previously saved offline checkpoint as the phase outcome,
    /// re-evaluating it on both test sets.
    pub fn adopt_offline(&self, checkpoint: Checkpoint, path: Option<String>) -> Result<OfflineOutcome> {
        if checkpoint.feature_dim != FEATURE_COUNT {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} features, data has {FEATURE_COUNT}",
                checkpoint.feature_dim
            )));
        }
        let id = checkpoint.model.kind_name().to_owned();
        let (on_offline_test, on_incoming_test) = self.evaluate(&checkpoint.model, &id, -1)?;
        Ok(OfflineOutcome {
            train: TrainReport {
                samples_seen: checkpoint.provenance.samples_seen,
                epochs: 0,
                final_loss: mean_loss(&checkpoint.model, &self.data.offline_train)?,
                wall_secs: 0.0,
            },
            checkpoint,
            checkpoint_path: path,
            on_offline_test,
            on_incoming_test,
        })
    }

    /// Incremental updates over the incoming training split, batch by batch.
    /// With `resume`, training continues after the checkpoint's batch.
    pub fn run_incremental_phase(
        &mut self,
        offline: &OfflineOutcome,
        lwf: bool,
        resume: Option<Checkpoint>,
    ) -> Result<IncrementalOutcome> {
        let base = &offline.checkpoint;
        if base.feature_dim != FEATURE_COUNT {
            return Err(Error::Checkpoint(format!(
                "offline checkpoint has {} features, data has {FEATURE_COUNT}",
                base.feature_dim
            )));
        }
        let initial = if lwf {
            match &base.model {
                AnyModel::Mlp(m) => AnyModel::Lwf(LwfLearner::new(m.clone(), self.cfg.lwf)?),
                other => {
                    return Err(Error::Checkpoint(format!(
                        "LwF needs an mlp teacher, found {}",
                        other.kind_name()
                    )))
                }
            }
        } else {
            base.model.clone()
        };
        let model_id = initial.kind_name().to_owned();

        let (mut model, start, mut seen) = match resume {
            Some(c) => {
                c.expect(&model_id, FEATURE_COUNT)?;
                if c.provenance.batch_index < 0 {
                    return Err(Error::Checkpoint("resume checkpoint has no completed batch".into()));
                }
                (c.model, c.provenance.batch_index as usize + 1, c.provenance.samples_seen)
            }
            None => (initial, 0, 0),
        };

        let relabel = |s: &EvalSnapshot| EvalSnapshot {
            model_id: model_id.clone(),
            ..s.clone()
        };
        let mut snapshots = vec![relabel(&offline.on_offline_test), relabel(&offline.on_incoming_test)];
        let baseline = offline.on_offline_test.accuracy;

        let incoming = std::mem::take(&mut self.data.incoming_train);
        let result = (|| {
            let stream = batches(&incoming, self.cfg.batch_size)?;
            let last = stream.len().saturating_sub(1);
            let mut checkpoints = Vec::new();
            let mut batch_secs = Vec::new();
            let mut streak = 0usize;
            let mut stopped_early_at = None;
            let mut batches_run = 0usize;

            for n in start..stream.len() {
                let batch = stream.get(n).expect("in range");
                let t = Instant::now();
                self.trained_ids.extend(batch.iter().map(|e| e.id));
                partial_fit(&mut model, batch, &self.data.weights)?;
                batch_secs.push(t.elapsed().as_secs_f64());
                seen += batch.len() as u64;
                batches_run += 1;

                if (n + 1) % self.cfg.eval_every != 0 && n != last {
                    continue;
                }
                let (off, inc) = self.evaluate(&model, &model_id, n as i64)?;
                let forgetting = forgetting_rate(baseline, off.accuracy)?;
                snapshots.push(off);
                snapshots.push(inc);

                let ckpt = Checkpoint::new(
                    model.clone(),
                    Provenance {
                        phase: "incremental".into(),
                        samples_seen: seen,
                        batch_index: n as i64,
                    },
                );
                if let Some(p) =
                    self.save_checkpoint(&ckpt, &format!("{}_batch{:04}.json", file_id(&model_id), n))?
                {
                    checkpoints.push(p);
                }

                if self.cfg.early_stop.enabled {
                    if forgetting > self.cfg.early_stop.max_forgetting {
                        streak += 1;
                    } else {
                        streak = 0;
                    }
                    if streak >= self.cfg.early_stop.patience {
                        stopped_early_at = Some(n as i64);
                        break;
                    }
                }
            }
            let curve = build_curve(&snapshots, OFFLINE_TEST, INCOMING_TEST)?;
            Ok(IncrementalOutcome {
                model_id: model_id.clone(),
                model,
                snapshots,
                curve,
                checkpoints,
                stopped_early_at,
                batches_run,
                samples_seen: seen,
                batch_secs,
            })
        })();
        self.data.incoming_train = incoming;
        result
    }

    /// Plain MLP and LwF-wrapped MLP from the same offline teacher.
    pub fn run_lwf_phase(&mut self, offline: &OfflineOutcome) -> Result<(IncrementalOutcome, IncrementalOutcome)> {
        if !matches!(offline.checkpoint.model, AnyModel::Mlp(_)) {
            return Err(Error::Checkpoint("LwF comparison needs an mlp offline model".into()));
        }
        let plain = self.run_incremental_phase(offline, false, None)?;
        let lwf = self.run_incremental_phase(offline, true, None)?;
        Ok((plain, lwf))
    }

    /// Every phase the configuration calls for, assembled into a report.
    pub fn run_all(&mut self) -> Result<ExperimentReport> {
        let offline = self.run_offline_phase()?;
        let mut runs = vec![self.run_incremental_phase(&offline, false, None)?];
        if self.cfg.model == ModelChoice::Mlp && self.cfg.lwf_enabled {
            runs.push(self.run_incremental_phase(&offline, true, None)?);
        }
        Ok(self.report(&offline, &runs))
    }

    pub fn report(&self, offline: &OfflineOutcome, runs: &[IncrementalOutcome]) -> ExperimentReport {
        let run_reports = runs
            .iter()
            .map(|r| RunReport::new(offline, r))
            .collect();
        let timing = runs
            .iter()
            .map(|r| TimingRow {
                model_id: r.model_id.clone(),
                offline_secs: offline.train.wall_secs,
                mean_batch_secs: if r.batch_secs.is_empty() {
                    0.0
                } else {
                    r.batch_secs.iter().sum::<f64>() / r.batch_secs.len() as f64
                },
                batches: r.batch_secs.len(),
            })
            .collect();
        ExperimentReport {
            config: self.cfg.echo(),
            splits: self.data.sizes(self.cfg.batch_size),
            offline_stats: self.data.offline_stats.clone(),
            incoming_stats: self.data.incoming_stats.clone(),
            class_weights: self.data.weights,
            offline_checkpoint: offline.checkpoint_path.clone(),
            runs: run_reports,
            timing,
        }
    }
}
