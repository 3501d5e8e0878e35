use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// Affine layer, weight stored row-major as `[out x in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Linear {
            out_dim,
            in_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(out_dim: usize, in_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self, NnError> {
        if weight.len() != out_dim * in_dim || bias.len() != out_dim {
            return Err(NnError::ShapeMismatch(format!(
                "linear [{out_dim} x {in_dim}] got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Linear {
            out_dim,
            in_dim,
            weight,
            bias,
        })
    }

    /// Uniform in `[-1/sqrt(in), 1/sqrt(in)]` for weights and biases.
    pub fn init<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<_>>();
        let weight = draw(out_dim * in_dim);
        let bias = draw(out_dim);
        Linear {
            out_dim,
            in_dim,
            weight,
            bias,
        }
    }

    /// `W x + b`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.in_dim {
            return Err(NnError::ShapeMismatch(format!(
                "input of length {} for layer with in_dim {}",
                x.len(),
                self.in_dim
            )));
        }
        Ok(self
            .weight
            .chunks_exact(self.in_dim.max(1))
            .take(self.out_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect())
    }
}

/// `ReLU(W x + b)`.
pub fn embed_relu(x: &[f64], layer: &Linear) -> Result<Vec<f64>, NnError> {
    Ok(layer.forward(x)?.into_iter().map(|v| v.max(0.0)).collect())
}
