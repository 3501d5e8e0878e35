//! JSON checkpoint: `{format_version, variant, model_config, config, tensors}`
//! with every tensor stored as `{shape, values}` in row-major order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, NnError, Variant};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub variant: Variant,
    pub model_config: ModelConfig,
    /// Free-form echo of the effective run configuration.
    #[serde(default)]
    pub config: serde_json::Value,
    pub tensors: BTreeMap<String, TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &ModelParams, config: serde_json::Value) -> Self {
        let tensors = model
            .tensors()
            .into_iter()
            .map(|(name, shape, values)| {
                (
                    name.to_string(),
                    TensorRecord {
                        shape,
                        values: values.to_vec(),
                    },
                )
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            variant: model.variant,
            model_config: model.config,
            config,
            tensors,
        }
    }

    /// Rebuilds the model; every expected tensor must be present with the
    /// expected shape and no unknown tensors are allowed.
    pub fn to_model(&self) -> Result<ModelParams, NnError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let mut model = ModelParams::zeros(self.variant, self.model_config);
        let expected: Vec<(&'static str, Vec<usize>)> = model.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if let Some(extra) = self.tensors.keys().find(|k| !expected.iter().any(|(n, _)| n == k)) {
            return Err(NnError::ShapeMismatch(format!("unexpected tensor `{extra}`")));
        }
        for ((name, shape), (_, dst)) in expected.iter().zip(model.tensors_mut()) {
            let rec = self
                .tensors
                .get(*name)
                .ok_or_else(|| NnError::ShapeMismatch(format!("missing tensor `{name}`")))?;
            if &rec.shape != shape || rec.values.len() != dst.len() {
                return Err(NnError::ShapeMismatch(format!(
                    "tensor `{name}`: expected shape {shape:?}, found {:?} with {} values",
                    rec.shape,
                    rec.values.len()
                )));
            }
            dst.copy_from_slice(&rec.values);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
    }
}
