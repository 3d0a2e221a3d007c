use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{evaluate_metrics, mean_metrics, Metrics};
use crate::error::{Error, Result};
use crate::hiselect::HiSeries;
use crate::ingest::{compute_soh, MonthlyAggregate, SohDenominator};
use crate::neuralnet::{make_windows_in, predict, train, Network, NetworkSpec, SequenceBatch, TrainingConfig};
use crate::seeding::derive_seed;
use crate::ssa::{optimize, HistoryEntry, HyperparameterSpace, SsaConfig};

/// Where the training region ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSpec {
    /// Training region is the first `round(fraction · n)` points.
    Fraction(f64),
    /// Training region is the first `index` points.
    Index(usize),
}

impl SplitSpec {
    pub fn split_point(&self, n: usize) -> Result<usize> {
        let k = match *self {
            SplitSpec::Fraction(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::invalid(format!("split fraction {f} outside (0, 1)")));
                }
                (f * n as f64).round() as usize
            }
            SplitSpec::Index(i) => i,
        };
        if k == 0 || k >= n {
            return Err(Error::invalid(format!(
                "split {self} leaves an empty region in a series of {n} points"
            )));
        }
        Ok(k)
    }
}

impl std::fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitSpec::Fraction(v) => write!(f, "{}%", v * 100.0),
            SplitSpec::Index(i) => write!(f, "index {i}"),
        }
    }
}

/// `(train, test)` index ranges.
pub fn split_series(hi: &[f64], soh: &[f64], split: SplitSpec) -> Result<(Range<usize>, Range<usize>)> {
    if hi.len() != soh.len() {
        return Err(Error::LengthMismatch {
            left: hi.len(),
            right: soh.len(),
        });
    }
    let k = split.split_point(hi.len())?;
    Ok((0..k, k..hi.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub ssa: SsaConfig,
    pub space: HyperparameterSpace,
    /// Share of the training region held out as the fitness validation tail.
    pub validation_fraction: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            ssa: SsaConfig::default(),
            space: HyperparameterSpace::default(),
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub split: SplitSpec,
    /// Used as is unless `tuning` is set; its window length always applies.
    pub network: NetworkSpec,
    pub training: TrainingConfig,
    pub tuning: Option<TuningConfig>,
    /// One training run per seed; headline metrics are means over them.
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.network.violations();
        out.extend(self.training.violations());
        if let SplitSpec::Fraction(f) = self.split {
            if !(f > 0.0 && f < 1.0) {
                out.push(format!("split fraction {f} outside (0, 1)"));
            }
        }
        if self.seeds.is_empty() {
            out.push("at least one seed is required".to_string());
        }
        if let Some(t) = &self.tuning {
            out.extend(t.ssa.violations());
            out.extend(t.space.violations());
            if !(t.validation_fraction > 0.0 && t.validation_fraction < 1.0) {
                out.push(format!("validation_fraction {} outside (0, 1)", t.validation_fraction));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn window_length(&self) -> usize {
        self.network.window_length
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningTrace {
    pub history: Vec<HistoryEntry>,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub training: TrainingConfig,
    pub loss_history: Vec<f64>,
    pub tuning: Option<TuningTrace>,
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Windows whose last index lies in `ends`; inputs may reach back before it.
fn windows_ending_in(hi: &[f64], soh: &[f64], w: usize, ends: Range<usize>) -> Result<SequenceBatch> {
    let start = (ends.start + 1).saturating_sub(w);
    let mut b = make_windows_in(hi, soh, w, start..ends.end)?;
    let keep: Vec<usize> = (0..b.len()).filter(|&i| b.end_indices[i] >= ends.start).collect();
    b.inputs = keep.iter().map(|&i| b.inputs[i].clone()).collect();
    b.targets = keep.iter().map(|&i| b.targets[i]).collect();
    b.end_indices = keep.iter().map(|&i| b.end_indices[i]).collect();
    Ok(b)
}

/// SSA over the hyperparameter space; fitness is the validation-tail RMSE of
/// a model trained on the rest of `hi`/`soh`.
pub fn tune_hyperparameters(
    hi: &[f64],
    soh: &[f64],
    window_length: usize,
    tuning: &TuningConfig,
    base: &TrainingConfig,
    seed: u64,
) -> Result<(NetworkSpec, TrainingConfig, TuningTrace)> {
    let k = hi.len();
    let hold = ((tuning.validation_fraction * k as f64).round() as usize).max(1);
    let fit_end = k.checked_sub(hold).filter(|&v| v >= window_length).ok_or_else(|| {
        Error::invalid(format!(
            "training region of {k} points is too short for a validation tail and window {window_length}"
        ))
    })?;
    let fit = make_windows_in(hi, soh, window_length, 0..fit_end)?;
    let val = windows_ending_in(hi, soh, window_length, fit_end..k)?;
    let space = tuning.space.encode()?;
    let fitness_base = TrainingConfig {
        seed: derive_seed(seed, "pipeline.fitness", 0),
        ..base.clone()
    };
    let ssa = SsaConfig {
        seed: derive_seed(seed, "pipeline.ssa", 0),
        ..tuning.ssa.clone()
    };
    let outcome = optimize(&space, &ssa, |pos| {
        let (spec, cfg) = tuning.space.decode(pos, window_length, &fitness_base)?;
        let trained = train(&spec, &cfg, &fit)?;
        let pred = predict(&trained.network, &val.inputs)?;
        Ok(rmse(&pred, &val.targets))
    })?;
    let (spec, cfg) = tuning.space.decode(&outcome.best.position, window_length, base)?;
    Ok((
        spec,
        cfg,
        TuningTrace {
            history: outcome.history,
            evaluations: outcome.evaluations,
        },
    ))
}

/// Fits a model using only `hi[..k]` and `soh[..k]`.
pub fn train_region(config: &ExperimentConfig, hi: &[f64], soh: &[f64], k: usize, seed: u64) -> Result<TrainedModel> {
    let (hi, soh) = (&hi[..k], &soh[..k]);
    let w = config.window_length();
    let base = TrainingConfig {
        seed,
        ..config.training.clone()
    };
    let (spec, training, tuning) = match &config.tuning {
        Some(t) => {
            let (s, c, trace) = tune_hyperparameters(hi, soh, w, t, &base, seed)?;
            (s.with_candidate_form(config.network.candidate_form), c, Some(trace))
        }
        None => (config.network.clone(), base, None),
    };
    let data = make_windows_in(hi, soh, w, 0..k)?;
    let out = train(&spec, &training, &data)?;
    Ok(TrainedModel {
        network: out.network,
        training,
        loss_history: out.loss_history,
        tuning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    /// Position in the series.
    pub position: usize,
    /// Cycle number or month ordinal.
    pub index: u32,
    pub truth: f64,
    /// Mean over seeds.
    pub predicted: f64,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub predicted: Vec<f64>,
    pub metrics: Metrics,
    pub network: NetworkSpec,
    pub training: TrainingConfig,
    pub tuning: Option<TuningTrace>,
}

#[derive(Debug, Clone)]
pub struct PredictionReport {
    pub label: String,
    pub split: SplitSpec,
    /// Hash of the configuration and input series.
    pub fingerprint: String,
    pub points: Vec<PredictionPoint>,
    pub runs: Vec<SeedRun>,
    /// Mean of the per-seed metrics.
    pub metrics: Metrics,
    /// Wall-clock seconds; excluded from the fingerprint.
    pub runtime_s: f64,
}

pub fn fingerprint(label: &str, config: &ExperimentConfig, split: SplitSpec, series: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(format!("{config:?}|{split:?}").as_bytes());
    for s in series {
        h.update((s.len() as u64).to_le_bytes());
        for v in *s {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

fn assemble(
    label: &str,
    split: SplitSpec,
    fingerprint: String,
    test: &SequenceBatch,
    index: &[u32],
    runs: Vec<SeedRun>,
    started: Instant,
) -> Result<PredictionReport> {
    let n_runs = runs.len() as f64;
    let points = test
        .end_indices
        .iter()
        .enumerate()
        .map(|(i, &pos)| PredictionPoint {
            position: pos,
            index: index[pos],
            truth: test.targets[i],
            predicted: runs.iter().map(|r| r.predicted[i]).sum::<f64>() / n_runs,
        })
        .collect();
    let per_seed: Vec<Metrics> = runs.iter().map(|r| r.metrics).collect();
    let metrics = mean_metrics(&per_seed).ok_or_else(|| Error::invalid("no seed runs"))?;
    Ok(PredictionReport {
        label: label.to_string(),
        split,
        fingerprint,
        points,
        runs,
        metrics,
        runtime_s: started.elapsed().as_secs_f64(),
    })
}

fn check_aligned(hi: &[f64], soh: &[f64], index: &[u32]) -> Result<()> {
    if hi.len() != soh.len() || index.len() != soh.len() {
        return Err(Error::LengthMismatch {
            left: hi.len(),
            right: soh.len().min(index.len()),
        });
    }
    if let Some(p) = hi.iter().chain(soh).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("input series at position {p}")));
    }
    Ok(())
}

/// Trains on the region before the split (optionally tuning first) and
/// predicts every test window, once per seed.
pub fn run_single_battery(
    config: &ExperimentConfig,
    label: &str,
    index: &[u32],
    hi: &[f64],
    soh: &[f64],
) -> Result<PredictionReport> {
    run_single_battery_with_models(config, label, index, hi, soh).map(|(report, _)| report)
}

/// [`run_single_battery`] that also returns the trained model of every seed.
pub fn run_single_battery_with_models(
    config: &ExperimentConfig,
    label: &str,
    index: &[u32],
    hi: &[f64],
    soh: &[f64],
) -> Result<(PredictionReport, Vec<TrainedModel>)> {
    let started = Instant::now();
    config.validate()?;
    check_aligned(hi, soh, index)?;
    let (train_range, test_range) = split_series(hi, soh, config.split)?;
    let k = train_range.end;
    let test = make_windows_in(hi, soh, config.window_length(), test_range)?;
    let (runs, models): (Vec<SeedRun>, Vec<TrainedModel>) = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let model = train_region(config, hi, soh, k, seed)?;
            let predicted = predict(&model.network, &test.inputs)?;
            if let Some(p) = predicted.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "seed {seed}: prediction for window ending at position {}",
                    test.end_indices[p]
                )));
            }
            let run = SeedRun {
                seed,
                metrics: evaluate_metrics(&test.targets, &predicted)?,
                predicted,
                network: model.network.spec.clone(),
                training: model.training.clone(),
                tuning: model.tuning.clone(),
            };
            Ok((run, model))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let fp = fingerprint(label, config, config.split, &[hi, soh]);
    Ok((assemble(label, config.split, fp, &test, index, runs, started)?, models))
}

#[derive(Debug, Clone)]
pub struct AblationSplit {
    pub split: SplitSpec,
    /// Ascending mean RMSE; ties keep candidate order.
    pub reports: Vec<PredictionReport>,
}

/// Trains the fixed network per (candidate, split). Candidate labels come
/// from [`HiSeries::label`].
pub fn run_hi_ablation(
    candidates: &[HiSeries],
    soh: &[f64],
    index: &[u32],
    splits: &[SplitSpec],
    base: &ExperimentConfig,
) -> Result<Vec<AblationSplit>> {
    if candidates.is_empty() || splits.is_empty() {
        return Err(Error::invalid("ablation needs candidates and splits"));
    }
    let base = ExperimentConfig {
        tuning: None,
        ..base.clone()
    };
    splits
        .iter()
        .map(|&split| {
            let cfg = ExperimentConfig { split, ..base.clone() };
            let mut reports = candidates
                .par_iter()
                .map(|c| run_single_battery(&cfg, &c.label(), index, &c.values, soh))
                .collect::<Result<Vec<_>>>()?;
            reports.sort_by(|a, b| a.metrics.rmse.total_cmp(&b.metrics.rmse));
            Ok(AblationSplit { split, reports })
        })
        .collect()
}

/// Monthly SOH history of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetSeries {
    pub vehicle: String,
    pub months: Vec<u32>,
    pub soh: Vec<f64>,
}

impl FleetSeries {
    /// Input indicator for month `m` is the SOH of month `m − 1` (the first
    /// month repeats itself), so no window contains its own target.
    pub fn indicator(&self) -> Vec<f64> {
        let mut hi = Vec::with_capacity(self.soh.len());
        if let Some(first) = self.soh.first() {
            hi.push(*first);
            hi.extend_from_slice(&self.soh[..self.soh.len() - 1]);
        }
        hi
    }
}

pub fn fleet_series(agg: &MonthlyAggregate, denominator: SohDenominator) -> Result<Vec<FleetSeries>> {
    agg.vehicles()
        .into_iter()
        .map(|v| {
            let s = agg.series(v);
            let caps: Vec<f64> = s.iter().map(|(_, c)| *c).collect();
            let soh = compute_soh(&caps, denominator)?;
            Ok(FleetSeries {
                vehicle: v.to_string(),
                months: s.iter().map(|(m, _)| *m).collect(),
                soh: soh.values,
            })
        })
        .collect()
}

/// Trains once per seed on the whole training vehicle, then predicts each
/// test vehicle from `start` onward.
pub fn run_fleet(
    train_vehicle: &FleetSeries,
    test_vehicles: &[FleetSeries],
    start: SplitSpec,
    config: &ExperimentConfig,
) -> Result<Vec<PredictionReport>> {
    let started = Instant::now();
    config.validate()?;
    let w = config.window_length();
    let train_hi = train_vehicle.indicator();
    let n = train_hi.len();
    let models = config
        .seeds
        .par_iter()
        .map(|&seed| Ok((seed, train_region(config, &train_hi, &train_vehicle.soh, n, seed)?)))
        .collect::<Result<Vec<_>>>()?;
    test_vehicles
        .par_iter()
        .map(|tv| {
            let hi = tv.indicator();
            let (_, test_range) = split_series(&hi, &tv.soh, start)?;
            let test = make_windows_in(&hi, &tv.soh, w, test_range)?;
            let runs = models
                .iter()
                .map(|(seed, m)| {
                    let predicted = predict(&m.network, &test.inputs)?;
                    Ok(SeedRun {
                        seed: *seed,
                        metrics: evaluate_metrics(&test.targets, &predicted)?,
                        predicted,
                        network: m.network.spec.clone(),
                        training: m.training.clone(),
                        tuning: m.tuning.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let label = format!("{} -> {}", train_vehicle.vehicle, tv.vehicle);
            let fp = fingerprint(&label, config, start, &[&train_vehicle.soh, &tv.soh]);
            assemble(&label, start, fp, &test, &tv.months, runs, started)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_points() {
        assert_eq!(SplitSpec::Fraction(0.15).split_point(100).unwrap(), 15);
        assert_eq!(SplitSpec::Fraction(0.25).split_point(100).unwrap(), 25);
        assert_eq!(SplitSpec::Index(2).split_point(29).unwrap(), 2);
        let v = vec![0.0; 29];
        let (a, b) = split_series(&v, &v, SplitSpec::Index(2)).unwrap();
        assert_eq!((a.len(), b.len()), (2, 27));
        assert!(SplitSpec::Fraction(0.001).split_point(100).is_err());
        assert!(SplitSpec::Index(29).split_point(29).is_err());
        assert!(SplitSpec::Fraction(1.5).split_point(100).is_err());
    }

    #[test]
    fn validation_windows_end_in_the_tail() {
        let hi: Vec<f64> = (0..20).map(f64::from).collect();
        let b = windows_ending_in(&hi, &hi, 5, 16..20).unwrap();
        assert_eq!(b.end_indices, vec![16, 17, 18, 19]);
        assert_eq!(b.inputs[0], vec![12.0, 13.0, 14.0, 15.0, 16.0]);
    }

    #[test]
    fn fleet_indicator_lags_by_one_month() {
        let s = FleetSeries {
            vehicle: "V".into(),
            months: vec![1, 2, 3],
            soh: vec![1.0, 0.99, 0.97],
        };
        assert_eq!(s.indicator(), vec![1.0, 1.0, 0.99]);
    }

    #[test]
    fn tuning_requires_consistent_settings() {
        let cfg = ExperimentConfig {
            split: SplitSpec::Fraction(1.2),
            network: NetworkSpec::dual_bigru(5, [4; 4], [0.0; 4]),
            training: TrainingConfig::default(),
            tuning: Some(TuningConfig {
                validation_fraction: 0.0,
                ..TuningConfig::default()
            }),
            seeds: vec![],
        };
        assert_eq!(cfg.violations().len(), 3, "{:?}", cfg.violations());
    }
}
