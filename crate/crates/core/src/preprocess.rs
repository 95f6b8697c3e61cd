//! Min-max normalization, seeded train/test splitting, fixed-size batching
//! and class weighting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Label, LabeledSample};

pub const DEFAULT_BATCH_SIZE: usize = 10_000;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;

/// A normalized training or evaluation row. `id` tags the sample's identity
/// so training code can be audited for test-set leakage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: u64,
    pub x: Vec<f64>,
    pub y: u8,
}

impl Example {
    pub fn new(id: u64, x: Vec<f64>, y: u8) -> Self {
        Example { id, x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub clip: bool,
}

impl MinMaxScaler {
    /// An empty scaler; `transform` fails until it is replaced by a fitted one.
    pub fn unfitted(clip: bool) -> Self {
        MinMaxScaler {
            min: Vec::new(),
            max: Vec::new(),
            clip,
        }
    }

    pub fn is_fitted(&self) -> bool {
        !self.min.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Learns per-column bounds from raw rows. `present(row, col)` false
    /// excludes a cell; a column with no present cell gets bounds [0, 0].
    pub fn fit_rows<'a, I>(rows: I, clip: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], Option<u32>)>,
    {
        let mut min: Vec<f64> = Vec::new();
        let mut max: Vec<f64> = Vec::new();
        let mut seen: Vec<bool> = Vec::new();
        let mut count = 0usize;
        for (row, mask) in rows {
            if count == 0 {
                min = vec![f64::INFINITY; row.len()];
                max = vec![f64::NEG_INFINITY; row.len()];
                seen = vec![false; row.len()];
            } else if row.len() != min.len() {
                return Err(Error::Dimension {
                    expected: min.len(),
                    got: row.len(),
                });
            }
            count += 1;
            for (j, &v) in row.iter().enumerate() {
                if mask.is_some_and(|m| m & (1 << j) == 0) || !v.is_finite() {
                    continue;
                }
                seen[j] = true;
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        if count == 0 {
            return Err(Error::invalid("cannot fit a scaler on an empty set"));
        }
        for j in 0..min.len() {
            if !seen[j] {
                min[j] = 0.0;
                max[j] = 0.0;
            }
        }
        Ok(MinMaxScaler { min, max, clip })
    }

    /// `(x - min) / (max - min)`; constant columns map to 0.
    pub fn transform_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.is_fitted() {
            return Err(Error::NotFitted("min-max scaler"));
        }
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let span = self.max[j] - self.min[j];
                if span <= 0.0 || !v.is_finite() {
                    return 0.0;
                }
                let z = (v - self.min[j]) / span;
                if self.clip {
                    z.clamp(0.0, 1.0)
                } else {
                    z
                }
            })
            .collect())
    }

    /// Absent features stay 0 after scaling.
    pub fn transform(&self, sample: &LabeledSample) -> Result<LabeledSample> {
        let mut values = self.transform_values(&sample.features.values)?;
        for (j, v) in values.iter_mut().enumerate() {
            if !sample.features.is_present(j) {
                *v = 0.0;
            }
        }
        let mut out = sample.clone();
        out.features.values.copy_from_slice(&values);
        Ok(out)
    }
}

/// Fits on training samples only; absent cells do not move the bounds.
pub fn fit_minmax(train: &[LabeledSample], clip: bool) -> Result<MinMaxScaler> {
    MinMaxScaler::fit_rows(
        train
            .iter()
            .map(|s| (s.features.as_slice(), Some(s.features.present))),
        clip,
    )
}

/// Scales samples and tags each with `id_base + position`.
pub fn to_examples(
    scaler: &MinMaxScaler,
    samples: &[LabeledSample],
    id_base: u64,
) -> Result<Vec<Example>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = scaler.transform(s)?;
            Ok(Example::new(
                id_base + i as u64,
                t.features.values.to_vec(),
                s.label.as_u8(),
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            train_fraction: DEFAULT_TRAIN_FRACTION,
            seed: 42,
            shuffle: true,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction {} not in (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// `floor(train_fraction * n)`, immune to products like 0.29 * 100
    /// landing a hair under an integer.
    pub fn train_len(&self, n: usize) -> usize {
        let t = self.train_fraction * n as f64;
        let r = t.round();
        if (t - r).abs() <= 1e-9 * (n.max(1) as f64) {
            r as usize
        } else {
            t.floor() as usize
        }
    }

    /// Index partition: train indices first, then test indices.
    pub fn indices(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        self.validate()?;
        if n < 2 {
            return Err(Error::invalid(format!("cannot split {n} samples")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        if self.shuffle {
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        }
        let test = idx.split_off(self.train_len(n));
        Ok((idx, test))
    }
}

pub fn split<T: Clone>(samples: &[T], plan: &SplitPlan) -> Result<(Vec<T>, Vec<T>)> {
    let (tr, te) = plan.indices(samples.len())?;
    Ok((
        tr.into_iter().map(|i| samples[i].clone()).collect(),
        te.into_iter().map(|i| samples[i].clone()).collect(),
    ))
}

/// Ordered, non-overlapping views of `batch_size` items; the last may be short.
#[derive(Debug, Clone, Copy)]
pub struct BatchStream<'a, T> {
    items: &'a [T],
    batch_size: usize,
}

impl<'a, T> BatchStream<'a, T> {
    pub fn len(&self) -> usize {
        self.items.len().div_ceil(self.batch_size)
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn get(&self, n: usize) -> Option<&'a [T]> {
        let start = n.checked_mul(self.batch_size)?;
        if start >= self.items.len() {
            return None;
        }
        let end = (start + self.batch_size).min(self.items.len());
        Some(&self.items[start..end])
    }

    pub fn iter(&self) -> std::slice::Chunks<'a, T> {
        self.items.chunks(self.batch_size)
    }
}

pub fn batches<T>(items: &[T], batch_size: usize) -> Result<BatchStream<'_, T>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    Ok(BatchStream { items, batch_size })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub benign: f64,
    pub malicious: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights::uniform()
    }
}

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights {
            benign: 1.0,
            malicious: 1.0,
        }
    }

    pub fn explicit(benign: f64, malicious: f64) -> Result<Self> {
        if !(benign > 0.0 && malicious > 0.0 && benign.is_finite() && malicious.is_finite()) {
            return Err(Error::invalid(format!(
                "class weights must be positive, got {benign}/{malicious}"
            )));
        }
        Ok(ClassWeights { benign, malicious })
    }

    pub fn get(&self, y: u8) -> f64 {
        if y == 0 {
            self.benign
        } else {
            self.malicious
        }
    }
}

/// Inverse-frequency weights `N / (2 N_c)`.
pub fn class_weights<I>(labels: I) -> Result<ClassWeights>
where
    I: IntoIterator<Item = u8>,
{
    let (mut n0, mut n1) = (0usize, 0usize);
    for y in labels {
        if y == 0 {
            n0 += 1;
        } else {
            n1 += 1;
        }
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::invalid(
            "inverse-frequency class weights need both classes present",
        ));
    }
    let n = (n0 + n1) as f64;
    Ok(ClassWeights {
        benign: n / (2.0 * n0 as f64),
        malicious: n / (2.0 * n1 as f64),
    })
}

pub fn sample_class_weights(samples: &[LabeledSample]) -> Result<ClassWeights> {
    class_weights(samples.iter().map(|s| s.label.as_u8()))
}

/// Appends seeded random duplicates of the minority class until both
/// classes have equal counts. Input order is kept for the originals.
pub fn oversample_minority<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> u8,
    seed: u64,
) -> Vec<T> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..items.len()).partition(|&i| label_of(&items[i]) != 0);
    let deficit = pos.len().abs_diff(neg.len());
    let minority = if pos.len() < neg.len() { pos } else { neg };
    let mut out = items.to_vec();
    if minority.is_empty() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..deficit {
        let i = minority[rng.random_range(0..minority.len())];
        out.push(items[i].clone());
    }
    out
}

pub fn label_counts(samples: &[LabeledSample]) -> (usize, usize) {
    let mal = samples.iter().filter(|s| s.label == Label::Malicious).count();
    (samples.len() - mal, mal)
}
