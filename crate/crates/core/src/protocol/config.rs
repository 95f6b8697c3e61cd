use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::read_kv;
use crate::models::linear::{DEFAULT_LINEAR_ETA, DEFAULT_SVM_L2};
use crate::models::mlp::{DEFAULT_HIDDEN, DEFAULT_MLP_ETA};
use crate::models::LwfConfig;
use crate::preprocess::{ClassWeights, SplitPlan, DEFAULT_BATCH_SIZE, DEFAULT_TRAIN_FRACTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Perceptron,
    Logistic,
    Svm,
    Mlp,
}

impl ModelChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "perceptron" => Ok(ModelChoice::Perceptron),
            "logistic" | "logistic_regression" => Ok(ModelChoice::Logistic),
            "svm" | "svm_hinge" => Ok(ModelChoice::Svm),
            "mlp" | "dnn" => Ok(ModelChoice::Mlp),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Perceptron => "perceptron",
            ModelChoice::Logistic => "logistic",
            ModelChoice::Svm => "svm",
            ModelChoice::Mlp => "mlp",
        }
    }

    pub fn default_eta(self) -> f64 {
        if self == ModelChoice::Mlp {
            DEFAULT_MLP_ETA
        } else {
            DEFAULT_LINEAR_ETA
        }
    }

    pub fn default_epochs(self) -> usize {
        if self == ModelChoice::Mlp {
            10
        } else {
            5
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightMode {
    Uniform,
    /// Inverse frequency on the offline training split.
    Auto,
    Explicit(ClassWeights),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub enabled: bool,
    pub max_forgetting: f64,
    pub patience: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop {
            enabled: false,
            max_forgetting: 0.3,
            patience: 3,
        }
    }
}

/// Every experiment knob. Built from a flat `key = value` file, with any
/// key overridable afterwards through [`ExperimentConfig::set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub offline_source: PathBuf,
    pub incoming_source: PathBuf,
    pub feature_mapping: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub train_fraction: f64,
    pub split_shuffle: bool,
    pub seed: u64,
    pub batch_size: usize,
    pub eval_every: usize,
    pub shuffle_incremental: bool,
    pub model: ModelChoice,
    pub eta: Option<f64>,
    pub l2: f64,
    pub epochs: Option<usize>,
    pub hidden: Vec<usize>,
    pub lwf_enabled: bool,
    pub lwf: LwfConfig,
    pub early_stop: EarlyStop,
    pub clip_normalize: bool,
    pub class_weights: WeightMode,
    pub oversample: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            offline_source: PathBuf::new(),
            incoming_source: PathBuf::new(),
            feature_mapping: None,
            output_dir: PathBuf::from("out"),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            split_shuffle: true,
            seed: 42,
            batch_size: DEFAULT_BATCH_SIZE,
            eval_every: 1,
            shuffle_incremental: false,
            model: ModelChoice::Perceptron,
            eta: None,
            l2: DEFAULT_SVM_L2,
            epochs: None,
            hidden: DEFAULT_HIDDEN.to_vec(),
            lwf_enabled: true,
            lwf: LwfConfig::default(),
            early_stop: EarlyStop::default(),
            clip_normalize: true,
            class_weights: WeightMode::Auto,
            oversample: false,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "offline_source",
    "incoming_source",
    "feature_mapping",
    "output_dir",
    "train_fraction",
    "split_shuffle",
    "seed",
    "batch_size",
    "eval_every",
    "shuffle_incremental",
    "model",
    "eta",
    "l2",
    "epochs",
    "mlp.hidden",
    "lwf.enabled",
    "lwf.lambda",
    "lwf.temperature",
    "early_stop.enabled",
    "early_stop.max_forgetting",
    "early_stop.patience",
    "clip_normalize",
    "class_weights",
    "oversample",
];

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("{key}: `{v}` is not a boolean"))),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = ExperimentConfig::default();
        let base = path.parent().unwrap_or(Path::new(""));
        for (k, v) in read_kv(path)? {
            cfg.set(&k, &v)?;
        }
        // Relative paths in a config file are relative to that file.
        for p in [&mut cfg.offline_source, &mut cfg.incoming_source, &mut cfg.output_dir] {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        }
        if let Some(m) = cfg.feature_mapping.as_mut() {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "offline_source" => self.offline_source = v.into(),
            "incoming_source" => self.incoming_source = v.into(),
            "feature_mapping" => {
                self.feature_mapping = (!v.trim().is_empty()).then(|| PathBuf::from(v))
            }
            "output_dir" => self.output_dir = v.into(),
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "split_shuffle" => self.split_shuffle = parse_bool(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "eval_every" | "eval_every_k_batches" => self.eval_every = parse(key, v)?,
            "shuffle_incremental" => self.shuffle_incremental = parse_bool(key, v)?,
            "model" => self.model = ModelChoice::parse(v)?,
            "eta" => self.eta = Some(parse(key, v)?),
            "l2" => self.l2 = parse(key, v)?,
            "epochs" => self.epochs = Some(parse(key, v)?),
            "mlp.hidden" => {
                self.hidden = v
                    .split(',')
                    .map(|s| parse::<usize>(key, s))
                    .collect::<Result<_>>()?
            }
            "lwf.enabled" => self.lwf_enabled = parse_bool(key, v)?,
            "lwf.lambda" => self.lwf.lambda = parse(key, v)?,
            "lwf.temperature" => self.lwf.temperature = parse(key, v)?,
            "early_stop.enabled" => self.early_stop.enabled = parse_bool(key, v)?,
            "early_stop.max_forgetting" => self.early_stop.max_forgetting = parse(key, v)?,
            "early_stop.patience" => self.early_stop.patience = parse(key, v)?,
            "clip_normalize" => self.clip_normalize = parse_bool(key, v)?,
            "class_weights" => {
                self.class_weights = match v.trim() {
                    "uniform" | "none" => WeightMode::Uniform,
                    "auto" | "balanced" => WeightMode::Auto,
                    pair => {
                        let (a, b) = pair.split_once(',').ok_or_else(|| {
                            Error::invalid(format!(
                                "class_weights: expected uniform, auto or `w0,w1`, got `{pair}`"
                            ))
                        })?;
                        WeightMode::Explicit(ClassWeights::explicit(
                            parse(key, a)?,
                            parse(key, b)?,
                        )?)
                    }
                }
            }
            "oversample" => self.oversample = parse_bool(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.split_plan().validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.early_stop.max_forgetting) {
            return Err(Error::invalid("early_stop.max_forgetting must lie in [0, 1]"));
        }
        if self.early_stop.patience == 0 {
            return Err(Error::invalid("early_stop.patience must be at least 1"));
        }
        if !self.offline_source.as_os_str().is_empty() && self.offline_source == self.incoming_source {
            return Err(Error::invalid("offline and incoming sources must differ"));
        }
        if self.epochs == Some(0) {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        self.lwf.validate()
    }

    pub fn split_plan(&self) -> SplitPlan {
        SplitPlan {
            train_fraction: self.train_fraction,
            seed: self.seed,
            shuffle: self.split_shuffle,
        }
    }

    pub fn effective_eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| self.model.default_eta())
    }

    pub fn effective_epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| self.model.default_epochs())
    }

    /// The resolved configuration as flat key/value pairs.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_owned(), v);
        };
        put("offline_source", self.offline_source.display().to_string());
        put("incoming_source", self.incoming_source.display().to_string());
        put(
            "feature_mapping",
            self.feature_mapping
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        put("output_dir", self.output_dir.display().to_string());
        put("train_fraction", self.train_fraction.to_string());
        put("split_shuffle", self.split_shuffle.to_string());
        put("seed", self.seed.to_string());
        put("batch_size", self.batch_size.to_string());
        put("eval_every", self.eval_every.to_string());
        put("shuffle_incremental", self.shuffle_incremental.to_string());
        put("model", self.model.name().to_owned());
        put("eta", self.effective_eta().to_string());
        put("l2", self.l2.to_string());
        put("epochs", self.effective_epochs().to_string());
        put(
            "mlp.hidden",
            self.hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("lwf.enabled", self.lwf_enabled.to_string());
        put("lwf.lambda", self.lwf.lambda.to_string());
        put("lwf.temperature", self.lwf.temperature.to_string());
        put("early_stop.enabled", self.early_stop.enabled.to_string());
        put("early_stop.max_forgetting", self.early_stop.max_forgetting.to_string());
        put("early_stop.patience", self.early_stop.patience.to_string());
        put("clip_normalize", self.clip_normalize.to_string());
        put(
            "class_weights",
            match &self.class_weights {
                WeightMode::Uniform => "uniform".into(),
                WeightMode::Auto => "auto".into(),
                WeightMode::Explicit(w) => format!("{},{}", w.benign, w.malicious),
            },
        );
        put("oversample", self.oversample.to_string());
        m
    }
}
