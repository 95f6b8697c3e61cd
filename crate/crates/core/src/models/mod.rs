//! Incrementally trainable binary classifiers.

pub mod linear;
pub mod lwf;
pub mod mlp;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonio::{load_json, save_json};
use crate::preprocess::{ClassWeights, Example};

pub use linear::{LinearKind, LinearModel};
pub use lwf::{distillation_term, kl_divergence, lwf_loss, LwfConfig, LwfLearner};
pub use mlp::{cross_entropy, softmax, Gradients, MlpModel};

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite(x: &[f64], what: &'static str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Score / predict / single-sample update contract shared by every model.
pub trait OnlineClassifier {
    fn input_dim(&self) -> usize;
    fn kind_name(&self) -> &'static str;
    fn seed(&self) -> u64;
    /// Ranking score; higher means more likely malicious.
    fn score(&self, x: &[f64]) -> Result<f64>;
    fn predict(&self, x: &[f64]) -> Result<u8>;
    /// Unweighted per-sample training objective.
    fn loss(&self, x: &[f64], y: u8) -> Result<f64>;
    /// One gradient step on `(x, y)` scaled by `weight`.
    fn update(&mut self, x: &[f64], y: u8, weight: f64) -> Result<()>;
}

/// Training summary. `wall_secs` is excluded from serialized output so
/// persisted reports stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub samples_seen: u64,
    pub epochs: usize,
    pub final_loss: f64,
    #[serde(skip)]
    pub wall_secs: f64,
}

pub fn mean_loss<M: OnlineClassifier + ?Sized>(model: &M, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for e in data {
        total += model.loss(&e.x, e.y)?;
    }
    Ok(total / data.len() as f64)
}

/// `epochs` passes of single-sample updates, each pass in a fresh seeded
/// permutation drawn from the model's seed.
pub fn fit_offline<M: OnlineClassifier + ?Sized>(
    model: &mut M,
    train: &[Example],
    epochs: usize,
    weights: &ClassWeights,
) -> Result<TrainReport> {
    if epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    if train.is_empty() {
        return Err(Error::invalid("offline training set is empty"));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut seen = 0u64;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let e = &train[i];
            model.update(&e.x, e.y, weights.get(e.y))?;
            seen += 1;
        }
    }
    let wall_secs = start.elapsed().as_secs_f64();
    Ok(TrainReport {
        samples_seen: seen,
        epochs,
        final_loss: mean_loss(model, train)?,
        wall_secs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialFitReport {
    pub samples: usize,
    /// The batch was empty and nothing changed.
    pub noop: bool,
}

/// Exactly one in-order pass over `batch`, starting from the current
/// parameters.
pub fn partial_fit<M: OnlineClassifier + ?Sized>(
    model: &mut M,
    batch: &[Example],
    weights: &ClassWeights,
) -> Result<PartialFitReport> {
    for e in batch {
        model.update(&e.x, e.y, weights.get(e.y))?;
    }
    Ok(PartialFitReport {
        samples: batch.len(),
        noop: batch.is_empty(),
    })
}

/// Any of the supported model families, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AnyModel {
    Linear(LinearModel),
    Mlp(MlpModel),
    Lwf(LwfLearner),
}

impl AnyModel {
    fn inner(&self) -> &dyn OnlineClassifier {
        match self {
            AnyModel::Linear(m) => m,
            AnyModel::Mlp(m) => m,
            AnyModel::Lwf(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn OnlineClassifier {
        match self {
            AnyModel::Linear(m) => m,
            AnyModel::Mlp(m) => m,
            AnyModel::Lwf(m) => m,
        }
    }

    /// Parameters flattened in a fixed order, for trajectory comparisons.
    pub fn flat_params(&self) -> Vec<f64> {
        match self {
            AnyModel::Linear(m) => {
                let mut v = m.weights.clone();
                v.push(m.bias);
                v
            }
            AnyModel::Mlp(m) => m.flat_params(),
            AnyModel::Lwf(m) => m.student.flat_params(),
        }
    }
}

impl OnlineClassifier for AnyModel {
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }
    fn kind_name(&self) -> &'static str {
        self.inner().kind_name()
    }
    fn seed(&self) -> u64 {
        self.inner().seed()
    }
    fn score(&self, x: &[f64]) -> Result<f64> {
        self.inner().score(x)
    }
    fn predict(&self, x: &[f64]) -> Result<u8> {
        self.inner().predict(x)
    }
    fn loss(&self, x: &[f64], y: u8) -> Result<f64> {
        self.inner().loss(x, y)
    }
    fn update(&mut self, x: &[f64], y: u8, weight: f64) -> Result<()> {
        self.inner_mut().update(x, y, weight)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub phase: String,
    /// Samples consumed by incremental updates so far.
    pub samples_seen: u64,
    /// Last completed incremental batch; −1 for the offline model.
    pub batch_index: i64,
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON model checkpoint. Round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: String,
    pub feature_dim: usize,
    pub model: AnyModel,
    pub provenance: Provenance,
}

impl Checkpoint {
    pub fn new(model: AnyModel, provenance: Provenance) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: model.kind_name().to_owned(),
            feature_dim: model.input_dim(),
            model,
            provenance,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_json(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Checkpoint = load_json(path)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
        }
        if c.feature_dim != c.model.input_dim() || c.kind != c.model.kind_name() {
            return Err(Error::Checkpoint(format!(
                "header says {} over {} features but model is {} over {}",
                c.kind,
                c.feature_dim,
                c.model.kind_name(),
                c.model.input_dim()
            )));
        }
        Ok(c)
    }

    /// Fails unless the checkpoint holds `kind` over `feature_dim` features.
    pub fn expect(&self, kind: &str, feature_dim: usize) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} model, found {}",
                self.kind
            )));
        }
        if self.feature_dim != feature_dim {
            return Err(Error::Checkpoint(format!(
                "expected {feature_dim} features, found {}",
                self.feature_dim
            )));
        }
        Ok(())
    }
}
