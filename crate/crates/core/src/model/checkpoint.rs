use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::autodiff::{Matrix, ParamSet};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredMatrix {
    shape: [usize; 2],
    values: Vec<f64>,
}

/// On-disk form of [`ModelParams`]. serde_json prints the shortest decimal
/// that parses back to the same `f64`, so a save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    format_version: u32,
    config: ModelConfig,
    params: BTreeMap<String, StoredMatrix>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: params.config.clone(),
            params: params
                .weights
                .iter()
                .map(|(name, m)| {
                    (
                        name.to_owned(),
                        StoredMatrix {
                            shape: [m.rows(), m.cols()],
                            values: m.as_slice().to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn into_params(self) -> Result<ModelParams> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "checkpoint format version {} is not supported (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut weights = ParamSet::new();
        for (name, stored) in self.params {
            let [rows, cols] = stored.shape;
            let m = Matrix::from_vec(rows, cols, stored.values).map_err(|_| {
                Error::invalid(format!("checkpoint entry `{name}` does not match its shape {rows}x{cols}"))
            })?;
            if !m.all_finite() {
                return Err(Error::invalid(format!("checkpoint entry `{name}` has non-finite values")));
            }
            weights.insert(name, m);
        }
        ModelParams::from_parts(self.config, weights)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}

impl ModelParams {
    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::from_params(self).save(path)
    }

    pub fn load(path: &Path) -> Result<ModelParams> {
        Checkpoint::load(path)?.into_params()
    }
}
