//! Sparrow search over box-bounded mixed integer/continuous spaces and the
//! encoding of the BiGRU hyperparameter domain.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::{NetworkSpec, TrainingConfig};
use crate::seeding::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimKind {
    Continuous,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub lower: f64,
    pub upper: f64,
    pub kind: DimKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("search space needs at least one dimension"));
        }
        for (i, d) in dims.iter().enumerate() {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::invalid(format!(
                    "dimension {i}: bounds [{}, {}] are not increasing",
                    d.lower, d.upper
                )));
            }
        }
        Ok(Self { dims })
    }

    /// `d` continuous dimensions sharing one interval.
    pub fn uniform(d: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![
            Dimension {
                lower,
                upper,
                kind: DimKind::Continuous
            };
            d
        ])
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn clamp(&self, position: &mut [f64]) {
        for (x, d) in position.iter_mut().zip(&self.dims) {
            *x = if x.is_nan() { d.lower } else { x.clamp(d.lower, d.upper) };
        }
    }

    pub fn contains(&self, position: &[f64]) -> bool {
        position.len() == self.dims.len()
            && position
                .iter()
                .zip(&self.dims)
                .all(|(x, d)| *x >= d.lower && *x <= d.upper)
    }

    /// Integer dimensions rounded to the nearest admissible value.
    pub fn round(&self, position: &[f64]) -> Vec<f64> {
        position
            .iter()
            .zip(&self.dims)
            .map(|(x, d)| match d.kind {
                DimKind::Continuous => *x,
                DimKind::Integer => x.round().clamp(d.lower.ceil(), d.upper.floor()),
            })
            .collect()
    }

    /// Uniform per dimension; integer dimensions take the rounded draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let raw: Vec<f64> = self.dims.iter().map(|d| rng.random_range(d.lower..=d.upper)).collect();
        self.round(&raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sparrow {
    pub position: Vec<f64>,
    /// Lower is better. Failed evaluations carry `f64::MAX`.
    pub fitness: f64,
}

/// Which index enters the producer's exponential contraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProducerExponent {
    /// The sparrow's 1-based fitness rank.
    #[default]
    Rank,
    /// The 1-based iteration counter.
    Iteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsaConfig {
    pub pop_size: usize,
    pub max_iter: usize,
    pub producer_fraction: f64,
    pub warner_fraction: f64,
    pub safety_threshold: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub exponent: ProducerExponent,
}

impl Default for SsaConfig {
    fn default() -> Self {
        Self {
            pop_size: 6,
            max_iter: 10,
            producer_fraction: 0.2,
            warner_fraction: 0.1,
            safety_threshold: 0.8,
            epsilon: 1e-50,
            seed: 0,
            exponent: ProducerExponent::Rank,
        }
    }
}

impl SsaConfig {
    pub fn producers(&self) -> usize {
        ((self.producer_fraction * self.pop_size as f64).ceil() as usize).max(1)
    }

    pub fn warners(&self) -> usize {
        ((self.warner_fraction * self.pop_size as f64).ceil() as usize).max(1)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.pop_size < 2 {
            out.push(format!("pop_size {} must be at least 2", self.pop_size));
        }
        if self.max_iter == 0 {
            out.push("max_iter must be positive".to_string());
        }
        for (name, v) in [
            ("producer_fraction", self.producer_fraction),
            ("warner_fraction", self.warner_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                out.push(format!("{name} {v} outside (0, 1)"));
            }
        }
        if self.pop_size >= 2 && self.producers() >= self.pop_size {
            out.push("producer_fraction leaves no scroungers".to_string());
        }
        if !(0.5..=1.0).contains(&self.safety_threshold) {
            out.push(format!("safety_threshold {} outside [0.5, 1]", self.safety_threshold));
        }
        if !(self.epsilon > 0.0) {
            out.push(format!("epsilon {} must be positive", self.epsilon));
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
}

/// Source of every random quantity the update rules consume, so each rule can
/// be driven by fixed values in tests.
pub trait SsaDraws {
    /// Alarm value R2 in [0, 1).
    fn alarm(&mut self) -> f64;
    /// α in (0, 1].
    fn alpha(&mut self) -> f64;
    /// Standard-normal scalar (Q, β).
    fn normal(&mut self) -> f64;
    /// ±1 with equal probability.
    fn sign(&mut self) -> f64;
    /// K uniform in [−1, 1].
    fn step(&mut self) -> f64;
    /// `k` distinct indices below `n`.
    fn choose(&mut self, n: usize, k: usize) -> Vec<usize>;
}

/// [`SsaDraws`] backed by a seeded generator.
pub struct RngDraws<R: Rng>(pub R);

impl<R: Rng> SsaDraws for RngDraws<R> {
    fn alarm(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    fn alpha(&mut self) -> f64 {
        1.0 - self.0.random::<f64>()
    }

    fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    fn sign(&mut self) -> f64 {
        if self.0.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    fn step(&mut self) -> f64 {
        self.0.random_range(-1.0..=1.0)
    }

    fn choose(&mut self, n: usize, k: usize) -> Vec<usize> {
        sample(&mut self.0, n, k.min(n)).into_vec()
    }
}

/// Producers are the first `config.producers()` entries of a population sorted
/// by ascending fitness. `iteration` is 1-based.
pub fn update_producers(
    population: &mut [Sparrow],
    iteration: usize,
    space: &SearchSpace,
    config: &SsaConfig,
    draws: &mut dyn SsaDraws,
) {
    let r2 = draws.alarm();
    let count = config.producers().min(population.len());
    for (rank0, s) in population.iter_mut().take(count).enumerate() {
        if r2 < config.safety_threshold {
            let alpha = draws.alpha();
            let index = match config.exponent {
                ProducerExponent::Rank => rank0 + 1,
                ProducerExponent::Iteration => iteration,
            } as f64;
            let factor = (-index / (alpha * config.max_iter as f64)).exp();
            for x in s.position.iter_mut() {
                *x *= factor;
            }
        } else {
            let q = draws.normal();
            for x in s.position.iter_mut() {
                *x += q;
            }
        }
        space.clamp(&mut s.position);
    }
}

/// `A⁺·L` for a random ±1 row vector `A` of length D: `Aᵀ / D`.
fn sign_pseudo_inverse(d: usize, draws: &mut dyn SsaDraws) -> Vec<f64> {
    (0..d).map(|_| draws.sign() / d as f64).collect()
}

/// Scroungers are the entries after the producers. Ranks above `n/2` fly off
/// around the worst position; the rest settle near `producer_best`.
pub fn update_scroungers(
    population: &mut [Sparrow],
    producer_best: &[f64],
    worst: &[f64],
    space: &SearchSpace,
    config: &SsaConfig,
    draws: &mut dyn SsaDraws,
) {
    let n = population.len();
    let start = config.producers().min(n);
    for (offset, s) in population.iter_mut().enumerate().skip(start) {
        let rank = (offset + 1) as f64;
        if rank > n as f64 / 2.0 {
            let q = draws.normal();
            for (x, w) in s.position.iter_mut().zip(worst) {
                *x = q * ((w - *x) / (rank * rank)).exp();
            }
        } else {
            let a_plus = sign_pseudo_inverse(space.len(), draws);
            for ((x, p), a) in s.position.iter_mut().zip(producer_best).zip(&a_plus) {
                *x = p + (*x - p).abs() * a;
            }
        }
        space.clamp(&mut s.position);
    }
}

/// Relocates randomly chosen sentinels; returns their indices.
pub fn update_warners(
    population: &mut [Sparrow],
    best: &Sparrow,
    worst: &Sparrow,
    space: &SearchSpace,
    config: &SsaConfig,
    draws: &mut dyn SsaDraws,
) -> Vec<usize> {
    let chosen = draws.choose(population.len(), config.warners());
    for &i in &chosen {
        let s = &mut population[i];
        if s.fitness > best.fitness {
            let beta = draws.normal();
            for (x, b) in s.position.iter_mut().zip(&best.position) {
                *x = b + beta * (*x - b).abs();
            }
        } else {
            let k = draws.step();
            let denom = (s.fitness - worst.fitness) + config.epsilon;
            for (x, w) in s.position.iter_mut().zip(&worst.position) {
                *x += k * ((*x - w).abs() / denom);
            }
        }
        space.clamp(&mut s.position);
    }
    chosen
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    /// 0 is the initial population.
    pub iteration: usize,
    pub best_fitness: f64,
    pub best_position: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsaOutcome {
    /// Position with integer dimensions rounded.
    pub best: Sparrow,
    pub history: Vec<HistoryEntry>,
    pub evaluations: usize,
}

fn evaluate_all<F>(space: &SearchSpace, positions: &[&[f64]], fitness: &F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    positions
        .par_iter()
        .map(|p| match fitness(&space.round(p)) {
            Ok(v) if !v.is_nan() => v,
            _ => f64::MAX,
        })
        .collect()
}

fn evaluate_range<F>(space: &SearchSpace, pop: &mut [Sparrow], fitness: &F) -> usize
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let positions: Vec<&[f64]> = pop.iter().map(|s| s.position.as_slice()).collect();
    let values = evaluate_all(space, &positions, fitness);
    for (s, v) in pop.iter_mut().zip(values) {
        s.fitness = v;
    }
    pop.len()
}

fn sort_population(pop: &mut [Sparrow]) {
    pop.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
}

fn extreme(pop: &[Sparrow], worst: bool) -> Sparrow {
    let pick = if worst {
        pop.iter().max_by(|a, b| a.fitness.total_cmp(&b.fitness))
    } else {
        pop.iter().min_by(|a, b| a.fitness.total_cmp(&b.fitness))
    };
    pick.cloned().expect("non-empty population")
}

/// Sorted initial population; failed evaluations get `f64::MAX`.
pub fn initialize_population<F>(
    space: &SearchSpace,
    config: &SsaConfig,
    rng: &mut ChaCha8Rng,
    fitness: &F,
) -> Vec<Sparrow>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let mut pop: Vec<Sparrow> = (0..config.pop_size)
        .map(|_| Sparrow {
            position: space.sample(rng),
            fitness: f64::MAX,
        })
        .collect();
    evaluate_range(space, &mut pop, fitness);
    sort_population(&mut pop);
    pop
}

/// Runs `config.max_iter` iterations. Each phase (producers, scroungers,
/// warners) is evaluated before the next one reads fitness values;
/// evaluations within a phase run in parallel and are merged by index.
pub fn optimize<F>(space: &SearchSpace, config: &SsaConfig, fitness: F) -> Result<SsaOutcome>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    config.validate()?;
    let mut init_rng = rng_from(derive_seed(config.seed, "ssa.init", 0));
    let mut draws = RngDraws(rng_from(derive_seed(config.seed, "ssa.update", 0)));
    let mut pop = initialize_population(space, config, &mut init_rng, &fitness);
    let mut evaluations = pop.len();
    let mut global = pop[0].clone();
    let mut history = vec![HistoryEntry {
        iteration: 0,
        best_fitness: global.fitness,
        best_position: space.round(&global.position),
    }];
    let np = config.producers().min(pop.len());

    for t in 1..=config.max_iter {
        sort_population(&mut pop);
        let worst = extreme(&pop, true);

        update_producers(&mut pop, t, space, config, &mut draws);
        evaluations += evaluate_range(space, &mut pop[..np], &fitness);
        let producer_best = extreme(&pop[..np], false);

        update_scroungers(
            &mut pop,
            &producer_best.position,
            &worst.position,
            space,
            config,
            &mut draws,
        );
        evaluations += evaluate_range(space, &mut pop[np..], &fitness);

        for s in &pop {
            if s.fitness < global.fitness {
                global = s.clone();
            }
        }
        let current_worst = extreme(&pop, true);
        let chosen = update_warners(&mut pop, &global, &current_worst, space, config, &mut draws);
        let positions: Vec<&[f64]> = chosen.iter().map(|&i| pop[i].position.as_slice()).collect();
        let values = evaluate_all(space, &positions, &fitness);
        evaluations += values.len();
        for (&i, v) in chosen.iter().zip(values) {
            pop[i].fitness = v;
        }

        for s in &pop {
            if s.fitness < global.fitness {
                global = s.clone();
            }
        }
        history.push(HistoryEntry {
            iteration: t,
            best_fitness: global.fitness,
            best_position: space.round(&global.position),
        });
    }
    Ok(SsaOutcome {
        best: Sparrow {
            position: space.round(&global.position),
            fitness: global.fitness,
        },
        history,
        evaluations,
    })
}

/// Bounds of the tuned BiGRU hyperparameters. Positions are ordered
/// g1, g2, g3, g4, max_epochs, learning_rate, batch_size, d1, d2, d3, d4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperparameterSpace {
    pub units: [f64; 2],
    pub max_epochs: [f64; 2],
    pub learning_rate: [f64; 2],
    pub batch_size: [f64; 2],
    pub dropout: [f64; 2],
    /// The learning-rate drop period is `round(drop_period_fraction · max_epochs)`.
    pub drop_period_fraction: f64,
    pub lr_drop_factor: f64,
}

impl Default for HyperparameterSpace {
    fn default() -> Self {
        Self {
            units: [25.0, 200.0],
            max_epochs: [150.0, 700.0],
            learning_rate: [0.005, 0.015],
            batch_size: [1.0, 20.0],
            dropout: [0.002, 0.2],
            drop_period_fraction: 0.7,
            lr_drop_factor: 0.01,
        }
    }
}

pub const HYPERPARAMETER_NAMES: [&str; 11] = [
    "g1",
    "g2",
    "g3",
    "g4",
    "max_epochs",
    "learning_rate",
    "batch_size",
    "d1",
    "d2",
    "d3",
    "d4",
];

impl HyperparameterSpace {
    pub fn encode(&self) -> Result<SearchSpace> {
        let dim = |b: [f64; 2], kind| Dimension {
            lower: b[0],
            upper: b[1],
            kind,
        };
        let mut dims = vec![dim(self.units, DimKind::Integer); 4];
        dims.push(dim(self.max_epochs, DimKind::Integer));
        dims.push(dim(self.learning_rate, DimKind::Continuous));
        dims.push(dim(self.batch_size, DimKind::Integer));
        dims.extend([dim(self.dropout, DimKind::Continuous); 4]);
        SearchSpace::new(dims)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, b, min) in [
            ("units", self.units, 1.0),
            ("max_epochs", self.max_epochs, 1.0),
            ("batch_size", self.batch_size, 1.0),
        ] {
            if !(b[0] >= min && b[0] < b[1]) {
                out.push(format!(
                    "{name} range [{}, {}] must be increasing and start at {min} or above",
                    b[0], b[1]
                ));
            }
        }
        if !(self.learning_rate[0] > 0.0 && self.learning_rate[0] < self.learning_rate[1]) {
            out.push(format!(
                "learning_rate range [{}, {}] must be positive and increasing",
                self.learning_rate[0], self.learning_rate[1]
            ));
        }
        if !(self.dropout[0] >= 0.0 && self.dropout[0] < self.dropout[1] && self.dropout[1] <= 0.5) {
            out.push(format!(
                "dropout range [{}, {}] must be increasing within [0, 0.5]",
                self.dropout[0], self.dropout[1]
            ));
        }
        if !(self.drop_period_fraction > 0.0 && self.drop_period_fraction <= 1.0) {
            out.push(format!(
                "drop_period_fraction {} outside (0, 1]",
                self.drop_period_fraction
            ));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor <= 1.0) {
            out.push(format!("lr_drop_factor {} outside (0, 1]", self.lr_drop_factor));
        }
        out
    }

    /// Maps a position to a network and schedule; `base` supplies the seed and
    /// Adam constants.
    pub fn decode(
        &self,
        position: &[f64],
        window_length: usize,
        base: &TrainingConfig,
    ) -> Result<(NetworkSpec, TrainingConfig)> {
        let space = self.encode()?;
        if position.len() != space.len() {
            return Err(Error::Dimension {
                context: "hyperparameter position",
                expected: space.len(),
                actual: position.len(),
            });
        }
        let tol = 1e-9;
        let outside: Vec<String> = position
            .iter()
            .zip(&space.dims)
            .zip(HYPERPARAMETER_NAMES)
            .filter(|((x, d), _)| !(**x >= d.lower - tol && **x <= d.upper + tol))
            .map(|((x, d), name)| format!("{name} = {x} outside [{}, {}]", d.lower, d.upper))
            .collect();
        if !outside.is_empty() {
            return Err(Error::Config(outside));
        }
        let mut p = position.to_vec();
        space.clamp(&mut p);
        let p = space.round(&p);
        let units = [p[0] as usize, p[1] as usize, p[2] as usize, p[3] as usize];
        let max_epochs = p[4] as usize;
        let spec = NetworkSpec::dual_bigru(window_length, units, [p[7], p[8], p[9], p[10]]);
        let config = TrainingConfig {
            max_epochs,
            learning_rate: p[5],
            lr_drop_period: ((self.drop_period_fraction * max_epochs as f64).round() as usize).clamp(1, max_epochs),
            lr_drop_factor: self.lr_drop_factor,
            batch_size: p[6] as usize,
            ..base.clone()
        };
        Ok((spec, config))
    }

    /// Inverse of [`HyperparameterSpace::decode`] for dual-module specs.
    pub fn position_of(&self, spec: &NetworkSpec, config: &TrainingConfig) -> Result<Vec<f64>> {
        if spec.layers.len() != 2 || spec.layers.iter().any(|l| l.backward_units.is_none()) {
            return Err(Error::invalid("only dual bidirectional specs are encodable"));
        }
        let (a, b) = (&spec.layers[0], &spec.layers[1]);
        Ok(vec![
            a.forward_units as f64,
            a.backward_units.unwrap_or(0) as f64,
            b.forward_units as f64,
            b.backward_units.unwrap_or(0) as f64,
            config.max_epochs as f64,
            config.learning_rate,
            config.batch_size as f64,
            a.forward_dropout,
            a.backward_dropout,
            b.forward_dropout,
            b.backward_dropout,
        ])
    }
}
