use std::path::Path;

use serde::{Deserialize, Serialize};
use ttc_grid::features::FeatureConfig;
use ttc_grid::nn::{ModelConfig, Variant};
use ttc_grid::scene::{CyclistPolicy, LoadOptions};
use ttc_grid::train::{TrainConfig, TrainSetup};

use crate::CliError;

/// Effective settings of a `train` run. Written back into the checkpoint
/// and the loss CSV with every default resolved, and accepted again by
/// `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub t_obs: usize,
    pub t_pred: usize,
    /// Window stride for training (evaluation always uses `t_obs`).
    pub stride: usize,
    /// Hold out the first minutes of the data (0 = train on everything).
    pub split_minutes: f64,
    pub frame_rate: f64,
    pub cyclist_as: CyclistPolicy,
    pub checkpoint_every: usize,
    pub model: ModelConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let load = LoadOptions::default();
        RunConfig {
            variant: Variant::Pv,
            t_obs: 6,
            t_pred: 6,
            stride: 1,
            split_minutes: 0.0,
            frame_rate: load.frame_rate,
            cyclist_as: load.cyclist_as,
            checkpoint_every: 0,
            model: ModelConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config file. A checkpoint is accepted too, in which case
    /// the config echoed inside it is used.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let value = match value.get("format_version") {
            Some(_) => value.get("config").cloned().unwrap_or_default(),
            None => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            frame_rate: self.frame_rate,
            cyclist_as: self.cyclist_as,
        }
    }

    pub fn setup(&self) -> TrainSetup {
        let mut model = self.model;
        model.n_sector = self.features.n_sector;
        model.pool_cells = self.features.social.grid_cells;
        TrainSetup {
            variant: self.variant,
            model,
            features: self.features,
            train: self.train,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let f = &self.features;
        if !f.ped.is_valid() || !f.veh.is_valid() {
            return Err(CliError::Usage("TTC thresholds and d_min must be positive".into()));
        }
        if f.n_sector == 0 || !f.social.is_valid() {
            return Err(CliError::Usage(
                "n_sector and social pooling sizes must be positive".into(),
            ));
        }
        if self.model.embed_dim == 0 || self.model.hidden_dim == 0 {
            return Err(CliError::Usage("embed_dim and hidden_dim must be positive".into()));
        }
        if !(self.frame_rate > 0.0) {
            return Err(CliError::Usage("frame_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
