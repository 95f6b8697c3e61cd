use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, check_finite, OnlineClassifier};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
pub const DEFAULT_MLP_ETA: f64 = 0.005;

/// Fully connected layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b
        }));
    }
}

/// Per-layer parameter gradients, laid out like the layers themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// All gradient entries in the same order as [`MlpModel::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Activations kept from a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input followed by each hidden layer's post-ReLU output.
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `ln Σ exp(z)`, stable.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy of class `y` under `softmax(z)`.
pub fn cross_entropy(z: &[f64], y: usize) -> f64 {
    log_sum_exp(z) - z[y]
}

/// ReLU hidden layers, softmax output over two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    pub eta: f64,
    pub seed: u64,
}

impl MlpModel {
    /// Glorot-uniform weights from `seed`, zero biases. `sizes` is the full
    /// chain, e.g. `[28, 64, 64, 2]`.
    pub fn new(sizes: &[usize], eta: f64, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(sizes, eta)?;
        m.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut m.layers {
            let limit = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            for w in &mut l.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(m)
    }

    pub fn zeros(sizes: &[usize], eta: f64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {sizes:?}")));
        }
        if *sizes.last().unwrap() != 2 {
            return Err(Error::invalid("the output layer must have 2 units"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("learning rate {eta} must be positive")));
        }
        Ok(MlpModel {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            eta,
            seed: 0,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        check_dim(self.layers[0].inputs, x)?;
        let mut activations = vec![x.to_vec()];
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(activations.last().unwrap(), &mut z);
            if i < last {
                activations.push(z.iter().map(|v| v.max(0.0)).collect());
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mlp logits"));
        }
        let probabilities = softmax(&z);
        Ok(ForwardPass {
            activations,
            logits: z,
            probabilities,
        })
    }

    /// Backpropagates an output-logit gradient through a recorded pass.
    pub fn backward(&self, pass: &ForwardPass, dlogits: &[f64]) -> Gradients {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = dlogits.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &pass.activations[i];
            let mut g = Dense::zeros(layer.inputs, layer.outputs);
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] = *d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, a) in row.iter_mut().zip(input) {
                    *gw = d * a;
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // ReLU gate: the recorded activation is zero where z ≤ 0.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
            grads.push(g);
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    /// Weighted cross-entropy and its gradient for one sample.
    pub fn loss_and_gradients(&self, x: &[f64], y: u8, weight: f64) -> Result<(f64, Gradients)> {
        let pass = self.forward(x)?;
        let y = usize::from(y);
        let loss = weight * cross_entropy(&pass.logits, y);
        let dlogits: Vec<f64> = pass
            .probabilities
            .iter()
            .enumerate()
            .map(|(k, p)| weight * (p - if k == y { 1.0 } else { 0.0 }))
            .collect();
        Ok((loss, self.backward(&pass, &dlogits)))
    }

    /// `θ ← θ − eta·g`. Refuses non-finite gradients, leaving θ untouched.
    pub fn apply(&mut self, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("mlp gradients"));
        }
        let eta = self.eta;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, d) in l.weights.iter_mut().zip(&g.weights) {
                *w -= eta * d;
            }
            for (b, d) in l.bias.iter_mut().zip(&g.bias) {
                *b -= eta * d;
            }
        }
        Ok(())
    }
}

impl OnlineClassifier for MlpModel {
    fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    fn kind_name(&self) -> &'static str {
        "mlp"
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    /// Probability of the malicious class.
    fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.probabilities[1])
    }

    /// Argmax; an exact tie goes to benign.
    fn predict(&self, x: &[f64]) -> Result<u8> {
        let p = self.forward(x)?.probabilities;
        Ok(u8::from(p[1] > p[0]))
    }

    fn loss(&self, x: &[f64], y: u8) -> Result<f64> {
        Ok(cross_entropy(&self.forward(x)?.logits, usize::from(y)))
    }

    fn update(&mut self, x: &[f64], y: u8, weight: f64) -> Result<()> {
        check_finite(x, "input features")?;
        let (_, g) = self.loss_and_gradients(x, y, weight)?;
        self.apply(&g)
    }
}
