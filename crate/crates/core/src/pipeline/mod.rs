//! Experiment orchestration: indicator extraction, splits, single-battery
//! and fleet prediction, ablation, metrics and synthetic datasets.

mod config;
mod experiment;
mod extract;
mod metrics;
pub mod synth;

pub use config::{CycleSection, ExperimentSection, FleetSection, NetworkSection, RunConfig, SynthSection};
pub use experiment::{
    fingerprint, fleet_series, run_fleet, run_hi_ablation, run_single_battery, run_single_battery_with_models,
    split_series, train_region, tune_hyperparameters, AblationSplit, ExperimentConfig, FleetSeries, PredictionPoint,
    PredictionReport, SeedRun, SplitSpec, TrainedModel, TuningConfig, TuningTrace,
};
pub use extract::{ablation_variants, extract, ic_curves, Extraction, ExtractionConfig};
pub use metrics::{evaluate_metrics, mean_metrics, Metrics};
