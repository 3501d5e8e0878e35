//! Minimal differentiable kernel for the fixed model topology: ReLU
//! embeddings, an LSTM cell, a bivariate Gaussian head, its negative
//! log-likelihood and exact reverse-mode gradients through time.

mod checkpoint;
mod gaussian;
mod layers;
mod linalg;
mod lstm;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, TensorRecord, CHECKPOINT_FORMAT_VERSION};
pub use gaussian::{
    gaussian_from_raw, gaussian_head, nll, nll_raw_with_grad, sample, GaussianParams, RHO_LIMIT, SIGMA_FLOOR,
};
pub use layers::{embed_relu, Linear};
pub use lstm::{lstm_step, LstmParams, LstmState};
pub use model::{LossGraph, ModelParams, Runner, StepInput};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward called on a graph that was not recorded")]
    GraphNotRecorded,
    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Which input streams feed the LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Spatial + pedestrian grid + vehicle grid.
    Pv,
    /// Spatial + pedestrian grid.
    P,
    /// Spatial + vehicle grid.
    V,
    /// Spatial only.
    Vanilla,
    /// Spatial + social pooling of neighbor hidden states.
    Social,
    /// Social pooling restricted to TTC-selected neighbors.
    SocialFiltered,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Pv,
        Variant::P,
        Variant::V,
        Variant::Vanilla,
        Variant::Social,
        Variant::SocialFiltered,
    ];

    pub fn uses_ppcg(self) -> bool {
        matches!(self, Variant::Pv | Variant::P)
    }

    pub fn uses_vpcg(self) -> bool {
        matches!(self, Variant::Pv | Variant::V)
    }

    pub fn uses_social(self) -> bool {
        matches!(self, Variant::Social | Variant::SocialFiltered)
    }

    pub fn stream_count(self) -> usize {
        1 + self.uses_ppcg() as usize + self.uses_vpcg() as usize + self.uses_social() as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pv => "pv",
            Variant::P => "p",
            Variant::V => "v",
            Variant::Vanilla => "vanilla",
            Variant::Social => "social",
            Variant::SocialFiltered => "social_filtered",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Pv => "PV-CollisionGrid",
            Variant::P => "P-CollisionGrid",
            Variant::V => "V-CollisionGrid",
            Variant::Vanilla => "Vanilla LSTM",
            Variant::Social => "Social LSTM",
            Variant::SocialFiltered => "Social LSTM + filtered interaction",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected pv, p, v, vanilla, social, social_filtered)"))
    }
}

/// Layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_sector: usize,
    /// Social pooling grid cells per side.
    pub pool_cells: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            hidden_dim: 128,
            n_sector: 8,
            pool_cells: 4,
        }
    }
}

impl ModelConfig {
    pub fn lstm_input_dim(&self, variant: Variant) -> usize {
        self.embed_dim * variant.stream_count()
    }

    pub fn pooled_dim(&self) -> usize {
        self.pool_cells * self.pool_cells * self.hidden_dim
    }
}
