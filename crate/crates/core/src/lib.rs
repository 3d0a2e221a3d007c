//! Battery state-of-health estimation from incremental-capacity health
//! indicators with a from-scratch bidirectional GRU tuned by sparrow search.

pub mod error;
pub mod hiselect;
pub mod icfeatures;
pub mod ingest;
pub mod neuralnet;
pub mod pipeline;
pub mod seeding;
pub mod ssa;

pub use error::{Error, Result};
pub use hiselect::{HiName, HiSeries};
pub use ingest::{CycleRecord, SohSeries};
pub use neuralnet::{Network, NetworkSpec, TrainingConfig};
pub use pipeline::{ExperimentConfig, PredictionReport, RunConfig, SplitSpec};
