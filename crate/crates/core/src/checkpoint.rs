//! Versioned, self-contained model containers.
//!
//! A checkpoint carries everything needed to score new trajectories exactly
//! as the training run did: the fitted parameters, the normalizer, the
//! observation window length, and the train/test split recipe. The split
//! recipe matters because evaluation reconstructs the held-out side from
//! (seed, fraction) instead of trusting the caller to pass disjoint data.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{cart_predict, flatten_window, svm_predict, CartTree, LinearSvm};
use crate::data::{normalize_series, window, NormStats, StabilityClass, TimeSeriesInstance};
use crate::error::{Error, Result};
use crate::lstm::{forward, DropoutMode, LstmModel};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Recipe for reproducing the train/test partition a model was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKindData {
    Lstm { model: LstmModel },
    Dt { tree: CartTree },
    Svm { model: LinearSvm },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub otw_steps: usize,
    pub norm_stats: NormStats,
    pub split: SplitSpec,
    pub model: ModelKindData,
}

impl Checkpoint {
    pub fn kind_name(&self) -> &'static str {
        match self.model {
            ModelKindData::Lstm { .. } => "lstm",
            ModelKindData::Dt { .. } => "dt",
            ModelKindData::Svm { .. } => "svm",
        }
    }

    /// Pretty JSON, written atomically enough for a single process: the
    /// serialization is deterministic, so identical checkpoints produce
    /// byte-identical files.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::FormatVersion {
                expected: CHECKPOINT_VERSION,
                got: ckpt.format_version,
            });
        }
        Ok(ckpt)
    }

    /// Scores the instance at the checkpoint's trained window length.
    /// Returns the class and the stable-class score in [0, 1].
    pub fn predict(&self, inst: &TimeSeriesInstance) -> Result<(StabilityClass, f64)> {
        self.predict_at(inst, self.otw_steps)
    }

    /// Scores the instance from its first `steps` steps. The recurrent model
    /// accepts any prefix length; the flat-vector baselines were trained on
    /// exactly `otw_steps` features and reject anything else.
    pub fn predict_at(
        &self,
        inst: &TimeSeriesInstance,
        steps: usize,
    ) -> Result<(StabilityClass, f64)> {
        let windowed = window(inst, steps)?;
        let x = normalize_series(&windowed.series, &self.norm_stats)?;
        let score = match &self.model {
            ModelKindData::Lstm { model } => {
                let cache = forward(model, &x, DropoutMode::Off)?;
                cache.probs[0]
            }
            ModelKindData::Dt { tree } => {
                if steps != self.otw_steps {
                    return Err(Error::WindowBounds {
                        requested: steps,
                        available: self.otw_steps,
                    });
                }
                cart_predict(tree, &flatten_window(&x))?
            }
            ModelKindData::Svm { model } => {
                if steps != self.otw_steps {
                    return Err(Error::WindowBounds {
                        requested: steps,
                        available: self.otw_steps,
                    });
                }
                svm_predict(model, &flatten_window(&x))?
            }
        };
        let class = if score > 0.5 {
            StabilityClass::Stable
        } else {
            StabilityClass::Unstable
        };
        Ok((class, score))
    }
}
