use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentConfig, SplitSpec, TuningConfig};
use super::extract::ExtractionConfig;
use super::synth::{CycleSynthParams, FleetSynthParams};
use crate::ingest::{CycleSchema, FleetSchema, MonthlyStat, SohDenominator, MIN_SOC_SPAN};
use crate::neuralnet::{CandidateForm, NetworkSpec, TrainingConfig};
use crate::seeding::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleSection {
    pub path: Option<PathBuf>,
    pub schema: CycleSchema,
}

impl Default for CycleSection {
    fn default() -> Self {
        Self {
            path: None,
            schema: CycleSchema {
                capacity: Some("capacity".into()),
                ..CycleSchema::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSection {
    pub path: Option<PathBuf>,
    pub schema: FleetSchema,
    pub stat: MonthlyStat,
    pub min_events: usize,
    pub min_soc_span: f64,
    pub denominator: SohDenominator,
    /// First vehicle in the file when unset.
    pub train_vehicle: Option<String>,
    /// Every other vehicle when empty.
    pub test_vehicles: Vec<String>,
    pub start: SplitSpec,
    /// Overrides the global window length for fleet runs.
    pub window_length: Option<usize>,
}

impl Default for FleetSection {
    fn default() -> Self {
        Self {
            path: None,
            schema: FleetSchema {
                temperature: Some("temperature".into()),
                ..FleetSchema::default()
            },
            stat: MonthlyStat::Median,
            min_events: 3,
            min_soc_span: MIN_SOC_SPAN,
            denominator: SohDenominator::First,
            train_vehicle: None,
            test_vehicles: Vec::new(),
            start: SplitSpec::Index(2),
            window_length: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub split: SplitSpec,
    /// Splits compared by the indicator ablation.
    pub ablation_splits: Vec<SplitSpec>,
    pub window_length: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            split: SplitSpec::Fraction(0.25),
            ablation_splits: vec![SplitSpec::Fraction(0.15), SplitSpec::Fraction(0.25)],
            window_length: 5,
        }
    }
}

/// Fixed dual-module network used when not tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub units: [usize; 4],
    pub dropout: [f64; 4],
    pub candidate_form: CandidateForm,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            units: [128; 4],
            dropout: [0.02; 4],
            candidate_form: CandidateForm::ResetGated,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub cycles: CycleSynthParams,
    pub fleet: FleetSynthParams,
}

/// Everything one invocation needs besides the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Number of training seeds derived from `seed`.
    pub seed_count: usize,
    pub cycles: CycleSection,
    pub fleet: FleetSection,
    pub extraction: ExtractionConfig,
    pub experiment: ExperimentSection,
    pub network: NetworkSection,
    pub training: TrainingConfig,
    pub tuning: TuningConfig,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seed_count: 3,
            cycles: CycleSection::default(),
            fleet: FleetSection::default(),
            extraction: ExtractionConfig::default(),
            experiment: ExperimentSection::default(),
            network: NetworkSection::default(),
            training: TrainingConfig::default(),
            tuning: TuningConfig::default(),
            synth: SynthSection::default(),
        }
    }
}

impl RunConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.seed_count as u64)
            .map(|i| derive_seed(self.seed, "run", i))
            .collect()
    }

    pub fn network_spec(&self, window_length: usize) -> NetworkSpec {
        NetworkSpec::dual_bigru(window_length, self.network.units, self.network.dropout)
            .with_candidate_form(self.network.candidate_form)
    }

    pub fn experiment_config(&self, tune: bool) -> ExperimentConfig {
        ExperimentConfig {
            split: self.experiment.split,
            network: self.network_spec(self.experiment.window_length),
            training: self.training.clone(),
            tuning: tune.then(|| self.tuning.clone()),
            seeds: self.seeds(),
        }
    }

    pub fn fleet_experiment_config(&self, tune: bool) -> ExperimentConfig {
        let w = self.fleet.window_length.unwrap_or(self.experiment.window_length);
        ExperimentConfig {
            split: self.fleet.start,
            network: self.network_spec(w),
            ..self.experiment_config(tune)
        }
    }

    /// Every problem found, including fixed hyperparameters outside the
    /// configured search bounds.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.seed_count == 0 {
            out.push("seed_count must be positive".to_string());
        }
        out.extend(self.extraction.violations());
        out.extend(self.experiment_config(true).violations());
        out.extend(
            self.synth
                .cycles
                .violations()
                .into_iter()
                .map(|v| format!("synth.cycles: {v}")),
        );
        out.extend(
            self.synth
                .fleet
                .violations()
                .into_iter()
                .map(|v| format!("synth.fleet: {v}")),
        );
        if self.fleet.min_events == 0 {
            out.push("fleet.min_events must be positive".to_string());
        }
        if self.experiment.ablation_splits.is_empty() {
            out.push("experiment.ablation_splits must not be empty".to_string());
        }
        if self.tuning.space.violations().is_empty() {
            let spec = self.network_spec(self.experiment.window_length.max(1));
            if let Ok(pos) = self.tuning.space.position_of(&spec, &self.training) {
                if let Err(crate::Error::Config(v)) = self.tuning.space.decode(&pos, spec.window_length, &self.training)
                {
                    out.extend(v.into_iter().map(|s| format!("fixed hyperparameter {s}")));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        out.retain(|v| seen.insert(v.clone()));
        out
    }
}
