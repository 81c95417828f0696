//! Data model for post-disturbance time-series instances.
//!
//! An instance is an `m x 3L` matrix: `m` sampled steps, each holding the
//! voltage magnitudes of `L` buses followed by `L` active-power and `L`
//! reactive-power channels. Channel blocks are laid out `U_1..U_L, P_1..P_L,
//! Q_1..Q_L` per step.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk format version for datasets and their sidecar headers.
pub const FORMAT_VERSION: u32 = 1;

/// Outcome classes. `Stable` is the positive class everywhere in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityClass {
    Stable,
    Unstable,
}

impl StabilityClass {
    /// Output index used by classifier heads: 0 = Stable, 1 = Unstable.
    pub fn index(self) -> usize {
        match self {
            StabilityClass::Stable => 0,
            StabilityClass::Unstable => 1,
        }
    }

    pub fn one_hot(self) -> [f64; 2] {
        match self {
            StabilityClass::Stable => [1.0, 0.0],
            StabilityClass::Unstable => [0.0, 1.0],
        }
    }
}

impl std::fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabilityClass::Stable => write!(f, "stable"),
            StabilityClass::Unstable => write!(f, "unstable"),
        }
    }
}

/// Parameters of the disturbance scenario an instance was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// System load relative to nominal (1.0 = nominal).
    pub load_level: f64,
    /// Share of the load behind induction motors, in [0, 1].
    pub motor_fraction: f64,
    /// Index of the faulted line.
    pub fault_line: usize,
    /// Relative position of the fault along the line, in [0, 1).
    pub fault_position: f64,
    /// Fault inception time in seconds.
    pub fault_time_s: f64,
    /// Fault duration from inception to clearing, in seconds.
    pub clear_time_s: f64,
}

/// One recorded disturbance: scenario, optional labels, and the sampled series.
///
/// `truth` is the generator's ground truth and is reserved for oracle tests
/// and report-only comparisons; the labeling and training paths read `label`
/// only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesInstance {
    pub id: u64,
    pub scenario: ScenarioParams,
    pub label: Option<StabilityClass>,
    pub truth: Option<StabilityClass>,
    pub series: Vec<Vec<f64>>,
}

impl TimeSeriesInstance {
    /// Number of sampled steps.
    pub fn steps(&self) -> usize {
        self.series.len()
    }

    /// Number of channels per step (3L for L buses).
    pub fn channels(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    /// Voltage magnitude of `bus` at `step`; voltages occupy the first L channels.
    pub fn voltage(&self, step: usize, bus: usize) -> f64 {
        self.series[step][bus]
    }

    /// Checks shape (rectangular, 3 equal channel blocks) and finiteness.
    pub fn validate(&self, bus_count: usize) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::EmptySeries { id: self.id });
        }
        let channels = 3 * bus_count;
        for (step, row) in self.series.iter().enumerate() {
            if row.len() != channels {
                return Err(Error::RaggedSeries {
                    id: self.id,
                    step,
                    expected: channels,
                    got: row.len(),
                });
            }
            for (channel, &value) in row.iter().enumerate() {
                if !value.is_finite() {
                    return Err(Error::NonFiniteValue {
                        id: self.id,
                        step,
                        channel,
                        value,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Sampling geometry shared by every instance of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Number of monitored buses L.
    pub bus_count: usize,
    /// Steps per series m.
    pub steps: usize,
    /// Sampling interval in seconds.
    pub dt_s: f64,
}

impl DatasetMeta {
    pub fn channel_count(&self) -> usize {
        3 * self.bus_count
    }
}

/// A validated collection of instances with uniform shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub norm_stats: Option<NormStats>,
    pub instances: Vec<TimeSeriesInstance>,
}

impl Dataset {
    /// Builds a dataset, enforcing unique ids and the shape declared in `meta`.
    pub fn new(meta: DatasetMeta, instances: Vec<TimeSeriesInstance>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if !seen.insert(inst.id) {
                return Err(Error::DuplicateId { id: inst.id });
            }
            inst.validate(meta.bus_count)?;
            if inst.steps() != meta.steps {
                return Err(Error::StepCount {
                    id: inst.id,
                    expected: meta.steps,
                    got: inst.steps(),
                });
            }
        }
        Ok(Dataset {
            meta,
            norm_stats: None,
            instances,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Instance lookup by id.
    pub fn get(&self, id: u64) -> Option<&TimeSeriesInstance> {
        self.instances.iter().find(|inst| inst.id == id)
    }
}

/// Per-channel min/max statistics for min-max normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn channel_count(&self) -> usize {
        self.min.len()
    }
}

/// Returns a copy of `instance` truncated to its first `otw_steps` steps.
pub fn window(instance: &TimeSeriesInstance, otw_steps: usize) -> Result<TimeSeriesInstance> {
    if otw_steps == 0 || otw_steps > instance.steps() {
        return Err(Error::WindowBounds {
            requested: otw_steps,
            available: instance.steps(),
        });
    }
    let mut out = instance.clone();
    out.series.truncate(otw_steps);
    Ok(out)
}

/// Fits per-channel min/max over every step of every instance.
///
/// Call this on the training partition only; evaluation data must reuse the
/// training statistics.
pub fn fit_normalizer(ds: &Dataset) -> Result<NormStats> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let channels = ds.meta.channel_count();
    let mut min = vec![f64::INFINITY; channels];
    let mut max = vec![f64::NEG_INFINITY; channels];
    for inst in &ds.instances {
        for row in &inst.series {
            for (c, &v) in row.iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
    }
    Ok(NormStats { min, max })
}

/// Maps one series through `(x - min) / (max - min)` per channel.
///
/// Constant channels (max == min) map to 0.0. Values outside the fitted range
/// are not clipped, so evaluation data may fall outside [0, 1].
pub fn normalize_series(series: &[Vec<f64>], stats: &NormStats) -> Result<Vec<Vec<f64>>> {
    let channels = stats.channel_count();
    let mut out = Vec::with_capacity(series.len());
    for row in series {
        if row.len() != channels {
            return Err(Error::NormalizerWidth {
                expected: channels,
                got: row.len(),
            });
        }
        let normalized = row
            .iter()
            .enumerate()
            .map(|(c, &v)| {
                let width = stats.max[c] - stats.min[c];
                if width == 0.0 {
                    0.0
                } else {
                    (v - stats.min[c]) / width
                }
            })
            .collect();
        out.push(normalized);
    }
    Ok(out)
}

/// Applies `stats` to every instance and records them on the result.
pub fn apply_normalizer(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    if stats.channel_count() != ds.meta.channel_count() {
        return Err(Error::NormalizerWidth {
            expected: ds.meta.channel_count(),
            got: stats.channel_count(),
        });
    }
    let mut out = ds.clone();
    for inst in &mut out.instances {
        inst.series = normalize_series(&inst.series, stats)?;
    }
    out.norm_stats = Some(stats.clone());
    Ok(out)
}

/// Splits into (train, test) after a seeded shuffle.
///
/// The train side receives `floor(n * train_fraction)` instances, the test
/// side the remainder. The same `(fraction, seed)` pair always reproduces the
/// same partition.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::SplitFraction {
            fraction: train_fraction,
        });
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut shuffled = ds.instances.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n_train = ((ds.len() as f64) * train_fraction).floor() as usize;
    let test_side = shuffled.split_off(n_train);
    let train = Dataset {
        meta: ds.meta,
        norm_stats: ds.norm_stats.clone(),
        instances: shuffled,
    };
    let test = Dataset {
        meta: ds.meta,
        norm_stats: ds.norm_stats.clone(),
        instances: test_side,
    };
    Ok((train, test))
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format_version: u32,
    meta: DatasetMeta,
    norm_stats: Option<NormStats>,
}

/// Path of the sidecar header that accompanies a dataset file.
///
/// The header replaces the dataset extension: `data.jsonl` -> `data.header.json`.
pub fn header_path(dataset_path: &Path) -> PathBuf {
    dataset_path.with_extension("header.json")
}

/// Writes one instance per line as JSON, plus the sidecar header.
///
/// Floats survive the round trip bit-exactly.
pub fn write_jsonl(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for inst in &ds.instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    let header = DatasetHeader {
        format_version: FORMAT_VERSION,
        meta: ds.meta,
        norm_stats: ds.norm_stats.clone(),
    };
    let mut hout = BufWriter::new(File::create(header_path(path))?);
    serde_json::to_writer_pretty(&mut hout, &header)?;
    hout.write_all(b"\n")?;
    hout.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_jsonl`], revalidating shape and ids.
pub fn read_jsonl(path: &Path) -> Result<Dataset> {
    let header_file = File::open(header_path(path))?;
    let header: DatasetHeader = serde_json::from_reader(BufReader::new(header_file))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            expected: FORMAT_VERSION,
            got: header.format_version,
        });
    }
    let mut instances = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        instances.push(serde_json::from_str::<TimeSeriesInstance>(&line)?);
    }
    let mut ds = Dataset::new(header.meta, instances)?;
    if let Some(stats) = &header.norm_stats {
        if stats.channel_count() != ds.meta.channel_count() {
            return Err(Error::HeaderMismatch {
                detail: format!(
                    "header norm stats cover {} channels, dataset has {}",
                    stats.channel_count(),
                    ds.meta.channel_count()
                ),
            });
        }
    }
    ds.norm_stats = header.norm_stats;
    Ok(ds)
}
