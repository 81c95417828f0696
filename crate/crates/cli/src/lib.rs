//! Pipeline driver for the voltage stability lab.
//!
//! Five subcommands cover the full loop: `generate` sweeps a scenario grid
//! into trajectories, `label` assigns classes by constrained clustering,
//! `train` fits a classifier and writes a checkpoint, `evaluate` scores
//! checkpoints on held-out data, and `assess` replays instances the way an
//! online monitor would see them. Stages communicate only through the files
//! they write, and every stage leaves a manifest recording its exact inputs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub mod assess;
pub mod charts;
pub mod evaluate;
pub mod generate;
pub mod label;
pub mod manifest;
pub mod train;

/// Creates the directories an output path needs.
pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating directory {}", dir.display()))?;
        }
    }
    Ok(())
}
