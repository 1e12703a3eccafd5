//! Parameter checkpoints as JSON:
//!
//! ```text
//! { "format": "subnav-checkpoint", "version": 1,
//!   "config": { ...layer sizes... },
//!   "vocab": ["<unk>", ...],
//!   "tensors": [ { "name": "embedding", "shape": [V, E], "values": [...] }, ... ] }
//! ```
//!
//! Values are row-major. Tensor order follows `ModelParams::GROUP_NAMES`, but
//! loading matches by name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, NeuralError, Vocab};
use crate::Scalar;

pub const CHECKPOINT_FORMAT: &str = "subnav-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_params<T: Scalar>(params: &ModelParams<T>, vocab: &Vocab) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: params.config,
            vocab: vocab.clone(),
            tensors: params
                .groups()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    shape: t.shape.clone(),
                    values: t.data.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_params<T: Scalar>(&self) -> Result<ModelParams<T>, NeuralError> {
        let err = |m: String| NeuralError::Checkpoint(m);
        if self.format != CHECKPOINT_FORMAT {
            return Err(err(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported version {}", self.version)));
        }
        if self.vocab.len() != self.config.vocab_size {
            return Err(err(format!(
                "vocabulary has {} words, config expects {}",
                self.vocab.len(),
                self.config.vocab_size
            )));
        }
        let mut p = ModelParams::<T>::zeros(self.config);
        for name in ModelParams::<T>::GROUP_NAMES {
            let src = self
                .tensors
                .iter()
                .find(|t| t.name == *name)
                .ok_or_else(|| err(format!("missing tensor {name}")))?;
            let dst = p.group_mut(name).expect("known group");
            if src.shape != dst.shape || src.values.len() != dst.len() {
                return Err(err(format!(
                    "tensor {name}: shape {:?} with {} values, expected {:?}",
                    src.shape,
                    src.values.len(),
                    dst.shape
                )));
            }
            if src.values.iter().any(|v| !v.is_finite()) {
                return Err(err(format!("tensor {name} holds non-finite values")));
            }
            for (d, &v) in dst.data.iter_mut().zip(&src.values) {
                *d = T::of(v);
            }
        }
        if let Some(extra) = self
            .tensors
            .iter()
            .find(|t| !ModelParams::<T>::GROUP_NAMES.contains(&t.name.as_str()))
        {
            return Err(err(format!("unknown tensor {}", extra.name)));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        let json = serde_json::to_string(self).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json)
            .map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NeuralError::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| NeuralError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let vocab = Vocab::build(["walk", "left"]);
        let p = ModelParams::<f64>::init(ModelConfig::small(vocab.len()), 9);
        let ck = Checkpoint::from_params(&p, &vocab);
        let json = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_params::<f64>().unwrap(), p);
        assert_eq!(back.vocab, vocab);
    }

    #[test]
    fn rejects_bad_shapes() {
        let vocab = Vocab::build(["a"]);
        let p = ModelParams::<f64>::init(ModelConfig::small(vocab.len()), 1);
        let mut ck = Checkpoint::from_params(&p, &vocab);
        ck.tensors[3].shape = vec![1];
        assert!(ck.to_params::<f64>().is_err());
        let mut ck = Checkpoint::from_params(&p, &vocab);
        ck.version = 2;
        assert!(ck.to_params::<f64>().is_err());
    }
}
