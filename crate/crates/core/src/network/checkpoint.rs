//! JSON checkpoints.
//!
//! ```json
//! {
//!   "magic": "WAVEPINN1",
//!   "config": { "in_dim": 2, "out_dim": 1, "hidden_layers": 4, ... },
//!   "activations": [{ "name": "softgabortanh", "raw": [..], "trainable": [..] }],
//!   "params": [ ... ]
//! }
//! ```
//!
//! `params` is the flat vector in registration order. `activations` carries
//! the raw coefficients including frozen ones, so a W-variant restores its
//! fixed β exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{init_model, MlpConfig, MlpModel, NetworkError};
use crate::activations::ActivationSpec;

pub const CHECKPOINT_MAGIC: &str = "WAVEPINN1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub config: MlpConfig,
    pub activations: Vec<ActivationSpec>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &MlpModel) -> Self {
        Checkpoint {
            magic: CHECKPOINT_MAGIC.to_string(),
            config: model.config().clone(),
            activations: model.activations().to_vec(),
            params: model.parameters(),
        }
    }

    pub fn into_model(self) -> Result<MlpModel, NetworkError> {
        if self.magic != CHECKPOINT_MAGIC {
            return Err(NetworkError::Checkpoint(format!(
                "bad magic {:?}, expected {CHECKPOINT_MAGIC:?}",
                self.magic
            )));
        }
        let mut model = init_model(&self.config)?;
        model.set_activations(self.activations)?;
        model.set_parameters(&self.params)?;
        Ok(model)
    }
}

pub fn save_checkpoint(model: &MlpModel, path: impl AsRef<Path>) -> Result<(), NetworkError> {
    let json = serde_json::to_string(&Checkpoint::from_model(model))
        .map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| NetworkError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpModel, NetworkError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
    ckpt.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::{ActivationKind, ActivationName};

    #[test]
    fn round_trip_is_bit_exact() {
        let name = ActivationName::new(ActivationKind::SoftGaborTanh, true);
        let cfg = MlpConfig::new(2, 1, name).with_shape(2, 6);
        let mut model = init_model(&cfg).unwrap();
        let theta: Vec<f64> = model
            .parameters()
            .iter()
            .map(|v| v * 1.000_000_1 + 1e-17)
            .collect();
        model.set_parameters(&theta).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let cfg = MlpConfig::new(2, 1, ActivationName::TANH).with_shape(1, 2);
        let mut ckpt = Checkpoint::from_model(&init_model(&cfg).unwrap());
        ckpt.magic = "WAVEPINN0".into();
        assert!(matches!(
            ckpt.into_model(),
            Err(NetworkError::Checkpoint(_))
        ));
    }

    #[test]
    fn truncated_params_are_rejected() {
        let cfg = MlpConfig::new(2, 1, ActivationName::TANH).with_shape(1, 2);
        let mut ckpt = Checkpoint::from_model(&init_model(&cfg).unwrap());
        ckpt.params.pop();
        assert!(matches!(
            ckpt.into_model(),
            Err(NetworkError::ParameterCount { .. })
        ));
    }
}
