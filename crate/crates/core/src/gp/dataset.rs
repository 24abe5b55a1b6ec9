use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise-free observations `(x_i, y_i)`, inputs stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("dataset needs at least one point".into()));
        }
        validate_rows(&inputs, &outputs)?;
        Ok(Self { inputs, outputs })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        validate_rows(std::slice::from_ref(&x), &[y])?;
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        self.inputs.push(x);
        self.outputs.push(y);
        Ok(())
    }

    /// Same inputs, outputs replaced.
    pub fn with_outputs(&self, outputs: Vec<f64>) -> Result<Self> {
        Self::new(self.inputs.clone(), outputs)
    }
}

pub(crate) fn validate_rows(inputs: &[Vec<f64>], outputs: &[f64]) -> Result<()> {
    if inputs.len() != outputs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} input rows but {} outputs",
            inputs.len(),
            outputs.len()
        )));
    }
    if let Some(first) = inputs.first() {
        let d = first.len();
        if d == 0 {
            return Err(Error::InvalidArgument("zero-dimensional inputs".into()));
        }
        for row in inputs {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite input {row:?}")));
            }
        }
    }
    if let Some(y) = outputs.iter().find(|y| !y.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite output {y}")));
    }
    Ok(())
}

/// Rejects exact duplicate inputs whose outputs disagree.
pub(crate) fn check_duplicates(inputs: &[Vec<f64>], outputs: &[f64]) -> Result<()> {
    let scale = outputs.iter().fold(0.0_f64, |m, y| m.max(y.abs())).max(1.0);
    for i in 0..inputs.len() {
        for j in 0..i {
            if inputs[i] == inputs[j] && (outputs[i] - outputs[j]).abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!(
                    "duplicate input {:?} with differing outputs {} and {}",
                    inputs[i], outputs[j], outputs[i]
                )));
            }
        }
    }
    Ok(())
}

/// Affine output map `y = offset + scale * z` between data and model units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub offset: f64,
    pub scale: f64,
}

impl Standardization {
    pub fn identity() -> Self {
        Self { offset: 0.0, scale: 1.0 }
    }

    /// Zero mean, unit (population) variance; constant outputs keep unit scale.
    pub fn fit(outputs: &[f64]) -> Self {
        if outputs.is_empty() {
            return Self::identity();
        }
        let n = outputs.len() as f64;
        let mean = outputs.iter().sum::<f64>() / n;
        let var = outputs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 1e-300 && sd.is_finite() { sd } else { 1.0 };
        Self { offset: mean, scale }
    }

    pub fn to_model(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }

    pub fn to_data(&self, z: f64) -> f64 {
        self.offset + self.scale * z
    }
}
