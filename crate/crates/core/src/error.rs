//! Error type shared by every module in this crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset contains no instances")]
    EmptyDataset,

    #[error("instance {id}: series has no steps")]
    EmptySeries { id: u64 },

    #[error("instance {id}: step {step} has {got} channels, expected {expected}")]
    RaggedSeries {
        id: u64,
        step: usize,
        expected: usize,
        got: usize,
    },

    #[error("instance {id}: {got} channels cannot hold three blocks of {bus_count} buses")]
    ChannelCount { id: u64, bus_count: usize, got: usize },

    #[error("instance {id}: series has {got} steps, dataset declares {expected}")]
    StepCount { id: u64, expected: usize, got: usize },

    #[error("instance {id}: non-finite value {value} at step {step}, channel {channel}")]
    NonFiniteValue {
        id: u64,
        step: usize,
        channel: usize,
        value: f64,
    },

    #[error("duplicate instance id {id}")]
    DuplicateId { id: u64 },

    #[error("observation window of {requested} steps is invalid for a series of {available}")]
    WindowBounds { requested: usize, available: usize },

    #[error("train fraction {fraction} lies outside (0, 1)")]
    SplitFraction { fraction: f64 },

    #[error("normalizer covers {expected} channels, data has {got}")]
    NormalizerWidth { expected: usize, got: usize },

    #[error("instance {id} has no label")]
    MissingLabel { id: u64 },

    #[error("unsupported format version {got}, this build reads version {expected}")]
    FormatVersion { expected: u32, got: u32 },

    #[error("dataset disagrees with its header: {detail}")]
    HeaderMismatch { detail: String },

    #[error("invalid generator config: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("seed search found {stable} stable and {unstable} unstable seeds; need at least one of each")]
    InsufficientSeeds { stable: usize, unstable: usize },

    #[error("inconsistent constraints: {detail}")]
    InconsistentConstraints { detail: String },

    #[error("constraint references unknown instance id {id}")]
    UnknownId { id: u64 },

    #[error("cluster count {k} is not supported, need k >= 2")]
    BadClusterCount { k: usize },

    #[error("no feasible cluster for instance {id}: {detail}")]
    InfeasibleAssignment { id: u64, detail: String },

    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    BadDimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("hyperparameter {what} = {value} is out of range")]
    BadHyperparameter { what: &'static str, value: f64 },

    #[error("metric input is empty")]
    EmptyMetricInput,

    #[error("metric inputs disagree in length: {left} vs {right}")]
    MetricLengthMismatch { left: usize, right: usize },

    #[error("labels contain a single class, curve is undefined")]
    SingleClassLabels,

    #[error("non-finite score {value} at index {index}")]
    NonFiniteScore { index: usize, value: f64 },

    #[error("metric undefined: denominator {denominator} is zero")]
    UndefinedMetric { denominator: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
