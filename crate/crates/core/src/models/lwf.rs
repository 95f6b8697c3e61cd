//! Learning without Forgetting: incremental MLP training whose loss adds a
//! temperature-softened distillation term toward a frozen copy of the
//! pre-incremental model.

use serde::{Deserialize, Serialize};

use super::mlp::{cross_entropy, softmax, Gradients, MlpModel};
use super::{check_finite, OnlineClassifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LwfConfig {
    /// Distillation weight λ.
    pub lambda: f64,
    /// Softmax temperature T.
    pub temperature: f64,
}

impl Default for LwfConfig {
    fn default() -> Self {
        LwfConfig {
            lambda: 1.0,
            temperature: 2.0,
        }
    }
}

impl LwfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "distillation weight {} must be non-negative",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// `KL(p ‖ q) = Σ p ln(p/q)`, with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

fn soften(z: &[f64], t: f64) -> Vec<f64> {
    softmax(&z.iter().map(|v| v / t).collect::<Vec<_>>())
}

/// Distillation term `T² · KL(softmax(z_t/T) ‖ softmax(z_s/T))`, unweighted.
pub fn distillation_term(teacher_logits: &[f64], student_logits: &[f64], temperature: f64) -> f64 {
    let pt = soften(teacher_logits, temperature);
    let ps = soften(student_logits, temperature);
    temperature * temperature * kl_divergence(&pt, &ps)
}

/// Loss and parameter gradient of
/// `weight · [CE(y, softmax(z_s)) + λ·T²·KL(softmax(z_t/T) ‖ softmax(z_s/T))]`.
pub fn lwf_loss(
    student: &MlpModel,
    teacher_logits: &[f64],
    x: &[f64],
    y: u8,
    weight: f64,
    cfg: &LwfConfig,
) -> Result<(f64, Gradients)> {
    cfg.validate()?;
    let pass = student.forward(x)?;
    if teacher_logits.len() != pass.logits.len() {
        return Err(Error::Dimension {
            expected: pass.logits.len(),
            got: teacher_logits.len(),
        });
    }
    let t = cfg.temperature;
    let yi = usize::from(y);
    let pt = soften(teacher_logits, t);
    let ps = soften(&pass.logits, t);

    let loss = weight
        * (cross_entropy(&pass.logits, yi) + cfg.lambda * t * t * kl_divergence(&pt, &ps));
    // d/dz_s of T²·KL = T·(p_s − p_t).
    let dlogits: Vec<f64> = pass
        .probabilities
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let ce = p - if k == yi { 1.0 } else { 0.0 };
            weight * (ce + cfg.lambda * t * (ps[k] - pt[k]))
        })
        .collect();
    Ok((loss, student.backward(&pass, &dlogits)))
}

/// A student MLP paired with its frozen teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LwfLearner {
    pub student: MlpModel,
    teacher: MlpModel,
    pub config: LwfConfig,
}

impl LwfLearner {
    /// The teacher is a snapshot of `model` at this moment; the student
    /// starts from the same parameters.
    pub fn new(model: MlpModel, config: LwfConfig) -> Result<Self> {
        config.validate()?;
        Ok(LwfLearner {
            teacher: model.clone(),
            student: model,
            config,
        })
    }

    pub fn teacher(&self) -> &MlpModel {
        &self.teacher
    }
}

impl OnlineClassifier for LwfLearner {
    fn input_dim(&self) -> usize {
        self.student.input_dim()
    }

    fn kind_name(&self) -> &'static str {
        "mlp+lwf"
    }

    fn seed(&self) -> u64 {
        self.student.seed
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        self.student.score(x)
    }

    fn predict(&self, x: &[f64]) -> Result<u8> {
        self.student.predict(x)
    }

    fn loss(&self, x: &[f64], y: u8) -> Result<f64> {
        let zt = self.teacher.forward(x)?.logits;
        Ok(lwf_loss(&self.student, &zt, x, y, 1.0, &self.config)?.0)
    }

    fn update(&mut self, x: &[f64], y: u8, weight: f64) -> Result<()> {
        check_finite(x, "input features")?;
        let zt = self.teacher.forward(x)?.logits;
        let (_, g) = lwf_loss(&self.student, &zt, x, y, weight, &self.config)?;
        self.student.apply(&g)
    }
}
