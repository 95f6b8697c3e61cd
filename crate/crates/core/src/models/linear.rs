use serde::{Deserialize, Serialize};

use super::{check_finite, check_dim, OnlineClassifier};
use crate::error::{Error, Result};

pub const DEFAULT_LINEAR_ETA: f64 = 0.01;
pub const DEFAULT_SVM_L2: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Perceptron,
    Logistic,
    SvmHinge,
}

impl LinearKind {
    pub fn name(self) -> &'static str {
        match self {
            LinearKind::Perceptron => "perceptron",
            LinearKind::Logistic => "logistic",
            LinearKind::SvmHinge => "svm",
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn signed(y: u8) -> f64 {
    if y == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Perceptron, logistic regression or linear SVM trained by per-sample SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub eta: f64,
    /// L2 strength; only the hinge variant uses it.
    pub l2: f64,
    pub seed: u64,
}

impl LinearModel {
    /// Zero-initialized parameters.
    pub fn new(kind: LinearKind, dim: usize, eta: f64, l2: f64, seed: u64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("learning rate {eta} must be positive")));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::invalid(format!("l2 {l2} must be non-negative")));
        }
        Ok(LinearModel {
            kind,
            weights: vec![0.0; dim],
            bias: 0.0,
            eta,
            l2,
            seed,
        })
    }

    pub fn with_defaults(kind: LinearKind, dim: usize, seed: u64) -> Self {
        let l2 = if kind == LinearKind::SvmHinge {
            DEFAULT_SVM_L2
        } else {
            0.0
        };
        Self::new(kind, dim, DEFAULT_LINEAR_ETA, l2, seed).expect("defaults are valid")
    }

    /// `w·x + b`.
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), x)?;
        Ok(self.raw_margin(x))
    }

    fn raw_margin(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// `σ(w·x + b)`; meaningful for the logistic variant.
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.margin(x)?))
    }

    /// (Sub)gradient of the per-sample objective w.r.t. (w, b).
    pub fn loss_gradient(&self, x: &[f64], y: u8) -> Result<(Vec<f64>, f64)> {
        let f = self.margin(x)?;
        let ys = signed(y);
        let coef = match self.kind {
            LinearKind::Perceptron => {
                if ys * f <= 0.0 {
                    -ys
                } else {
                    0.0
                }
            }
            LinearKind::Logistic => -(f64::from(y) - sigmoid(f)),
            LinearKind::SvmHinge => {
                if ys * f < 1.0 {
                    -ys
                } else {
                    0.0
                }
            }
        };
        let mut gw: Vec<f64> = x.iter().map(|v| coef * v).collect();
        if self.kind == LinearKind::SvmHinge {
            for (g, w) in gw.iter_mut().zip(&self.weights) {
                *g += self.l2 * w;
            }
        }
        Ok((gw, coef))
    }
}

impl OnlineClassifier for LinearModel {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn kind_name(&self) -> &'static str {
        self.kind.name()
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        self.margin(x)
    }

    fn predict(&self, x: &[f64]) -> Result<u8> {
        let f = self.margin(x)?;
        Ok(match self.kind {
            LinearKind::Logistic => u8::from(sigmoid(f) >= 0.5),
            _ => u8::from(f > 0.0),
        })
    }

    fn loss(&self, x: &[f64], y: u8) -> Result<f64> {
        let f = self.margin(x)?;
        let ys = signed(y);
        Ok(match self.kind {
            LinearKind::Perceptron => (-ys * f).max(0.0),
            LinearKind::Logistic => softplus(-ys * f),
            LinearKind::SvmHinge => {
                let reg: f64 = self.weights.iter().map(|w| w * w).sum();
                (1.0 - ys * f).max(0.0) + 0.5 * self.l2 * reg
            }
        })
    }

    /// One SGD step with effective rate `eta * weight`.
    ///
    /// * perceptron: on `y±·f ≤ 0`, `w += step·y±·x`, `b += step·y±`
    /// * logistic: `w += step·(y − σ(f))·x`, `b += step·(y − σ(f))`
    /// * hinge: `w ← (1 − step·λ)·w`, then on `y±·f < 1` (margin at the
    ///   pre-step parameters) `w += step·y±·x`, `b += step·y±`
    fn update(&mut self, x: &[f64], y: u8, weight: f64) -> Result<()> {
        check_dim(self.weights.len(), x)?;
        check_finite(x, "input features")?;
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("sample weight {weight} must be positive")));
        }
        let backup = (self.weights.clone(), self.bias);
        let step = self.eta * weight;
        let f = self.raw_margin(x);
        let ys = signed(y);
        match self.kind {
            LinearKind::Perceptron => {
                if ys * f <= 0.0 {
                    let c = step * ys;
                    for (w, v) in self.weights.iter_mut().zip(x) {
                        *w += c * v;
                    }
                    self.bias += c;
                }
            }
            LinearKind::Logistic => {
                let c = step * (f64::from(y) - sigmoid(f));
                for (w, v) in self.weights.iter_mut().zip(x) {
                    *w += c * v;
                }
                self.bias += c;
            }
            LinearKind::SvmHinge => {
                let shrink = 1.0 - step * self.l2;
                if self.l2 != 0.0 {
                    for w in self.weights.iter_mut() {
                        *w *= shrink;
                    }
                }
                if ys * f < 1.0 {
                    let c = step * ys;
                    for (w, v) in self.weights.iter_mut().zip(x) {
                        *w += c * v;
                    }
                    self.bias += c;
                }
            }
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            (self.weights, self.bias) = backup;
            return Err(Error::NonFinite("linear model parameters"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(kind: LinearKind, w: Vec<f64>, b: f64, eta: f64, l2: f64) -> LinearModel {
        LinearModel {
            kind,
            weights: w,
            bias: b,
            eta,
            l2,
            seed: 0,
        }
    }

    #[test]
    fn score_examples() {
        let m = model(LinearKind::Perceptron, vec![0.0; 3], 0.0, 0.1, 0.0);
        assert_eq!(m.score(&[3.0, -1.0, 2.0]).unwrap(), 0.0);
        let m = model(LinearKind::Perceptron, vec![1.0, 0.0, 0.0], -0.5, 0.1, 0.0);
        assert_eq!(m.score(&[1.0, 0.0, 0.0]).unwrap(), 0.5);
        let m = model(LinearKind::Logistic, vec![0.0; 2], 0.0, 0.1, 0.0);
        assert_eq!(m.probability(&[1.0, 1.0]).unwrap(), 0.5);
        assert!(m.score(&[1.0]).is_err());
    }

    #[test]
    fn predict_thresholds() {
        for kind in [LinearKind::Perceptron, LinearKind::SvmHinge] {
            let m = model(kind, vec![1.0], 0.0, 0.1, 0.0);
            assert_eq!(m.predict(&[0.0]).unwrap(), 0, "tie is benign");
            assert_eq!(m.predict(&[0.5]).unwrap(), 1);
            assert_eq!(m.predict(&[-0.5]).unwrap(), 0);
        }
        let m = model(LinearKind::Logistic, vec![1.0], 0.0, 0.1, 0.0);
        assert_eq!(m.predict(&[0.0]).unwrap(), 1, "σ(0) = 0.5 counts as malicious");
        assert_eq!(m.predict(&[0.5]).unwrap(), 1);
        assert_eq!(m.predict(&[-0.5]).unwrap(), 0);
    }

    #[test]
    fn perceptron_no_update_on_positive_margin() {
        let mut m = model(LinearKind::Perceptron, vec![2.0, 0.0], 0.0, 0.1, 0.0);
        let before = m.clone();
        m.update(&[1.0, 5.0], 1, 1.0).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn logistic_hand_step() {
        let mut m = model(LinearKind::Logistic, vec![0.0, 0.0], 0.0, 0.1, 0.0);
        m.update(&[1.0, 1.0], 1, 1.0).unwrap();
        assert_eq!(m.weights, vec![0.05, 0.05]);
        assert_eq!(m.bias, 0.05);
    }

    #[test]
    fn hinge_active_step() {
        // f = 0.5 for y = 1: inside the margin.
        let mut m = model(LinearKind::SvmHinge, vec![0.5, 0.0], 0.0, 0.1, 0.0);
        m.update(&[1.0, 2.0], 1, 1.0).unwrap();
        assert_eq!(m.weights, vec![0.6, 0.2]);
        assert_eq!(m.bias, 0.1);
        // Margin 1.2 ≥ 1 with λ = 0: untouched.
        let mut m = model(LinearKind::SvmHinge, vec![1.2, 0.0], 0.0, 0.1, 0.0);
        let before = m.clone();
        m.update(&[1.0, 0.0], 1, 1.0).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn rejects_non_finite_input() {
        let mut m = model(LinearKind::Logistic, vec![0.0], 0.0, 0.1, 0.0);
        assert!(m.update(&[f64::NAN], 1, 1.0).is_err());
        assert_eq!(m.weights, vec![0.0]);
    }
}
