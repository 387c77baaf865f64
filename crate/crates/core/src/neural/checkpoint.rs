//! Versioned JSON checkpoint format: named parameter tensors plus optimizer
//! state. Values are stored as f64 regardless of the in-memory scalar type.

use crate::error::{Error, Result};
use crate::neural::AdamState;
use crate::num::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerRecord {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

/// Flat record of every named tensor in a model plus its optimizer states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Which policy this checkpoint belongs to.
    pub kind: String,
    pub tensors: BTreeMap<String, TensorRecord>,
    pub optimizers: BTreeMap<String, OptimizerRecord>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            tensors: BTreeMap::new(),
            optimizers: BTreeMap::new(),
        }
    }

    pub fn insert_flat<T: Scalar>(&mut self, name: &str, shape: Vec<usize>, values: &[T]) {
        self.tensors.insert(
            name.to_string(),
            TensorRecord {
                shape,
                values: values.iter().map(|v| v.real()).collect(),
            },
        );
    }

    pub fn tensor<T: Scalar>(&self, name: &str) -> Result<Vec<T>> {
        let rec = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Serde(format!("checkpoint missing tensor {name}")))?;
        Ok(rec.values.iter().map(|&v| T::of(v)).collect())
    }

    pub fn insert_optimizer<T: Scalar>(&mut self, name: &str, state: &AdamState<T>) {
        self.optimizers.insert(
            name.to_string(),
            OptimizerRecord {
                step: state.step,
                learning_rate: state.learning_rate.real(),
                beta1: state.beta1.real(),
                beta2: state.beta2.real(),
                epsilon: state.epsilon.real(),
                first_moment: state.first_moment.iter().map(|v| v.real()).collect(),
                second_moment: state.second_moment.iter().map(|v| v.real()).collect(),
            },
        );
    }

    pub fn optimizer<T: Scalar>(&self, name: &str) -> Result<AdamState<T>> {
        let rec = self
            .optimizers
            .get(name)
            .ok_or_else(|| Error::Serde(format!("checkpoint missing optimizer {name}")))?;
        Ok(AdamState {
            learning_rate: T::of(rec.learning_rate),
            beta1: T::of(rec.beta1),
            beta2: T::of(rec.beta2),
            epsilon: T::of(rec.epsilon),
            step: rec.step,
            first_moment: rec.first_moment.iter().map(|&v| T::of(v)).collect(),
            second_moment: rec.second_moment.iter().map(|&v| T::of(v)).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Serde(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let mut ckpt = Checkpoint::new("hmoe");
        ckpt.insert_flat("spatial.w", vec![2, 2], &[1.0f64, 2.0, 3.0, 4.0]);
        let st = AdamState::<f64>::new(4, 1e-3);
        ckpt.insert_optimizer("spatial", &st);
        ckpt.save(&path).unwrap();

        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.kind, "hmoe");
        let w: Vec<f64> = loaded.tensor("spatial.w").unwrap();
        assert_eq!(w, vec![1.0, 2.0, 3.0, 4.0]);
        let opt: AdamState<f64> = loaded.optimizer("spatial").unwrap();
        assert_eq!(opt.step, 0);
        assert_eq!(opt.first_moment.len(), 4);
        assert!(loaded.tensor::<f64>("missing").is_err());
    }
}
