//! Deterministic synthetic datasets in the ingest formats: lab cycles whose
//! IC peaks shrink, broaden and drift with fade, and fleet charging logs with
//! a shared monthly decay, per-vehicle spread and capacity rebounds.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hiselect::{HiName, HiSeries};
use crate::ingest::{ChargePoint, ChargeSample, ChargeSegment, CycleRecord};
use crate::seeding::{derive_seed, rng_from};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleSynthParams {
    pub cycles: usize,
    pub nominal_capacity_ah: f64,
    pub current_a: f64,
    pub voltage_range: [f64; 2],
    pub voltage_step: f64,
    /// SOH lost by the last cycle.
    pub fade: f64,
    /// Shape of the fade curve over normalized cycle number.
    pub fade_exponent: f64,
    /// Relative standard deviation of each cycle's capacity.
    pub capacity_noise: f64,
    /// Main peak drift in volts at full fade.
    pub peak_shift: f64,
    /// Relative growth of the main peak width at full fade.
    pub peak_broadening: f64,
    /// Share of the main peak's charge lost at full fade.
    pub peak_loss: f64,
}

impl Default for CycleSynthParams {
    fn default() -> Self {
        Self {
            cycles: 200,
            nominal_capacity_ah: 2.0,
            current_a: 1.0,
            voltage_range: [3.0, 4.2],
            voltage_step: 0.002,
            fade: 0.2,
            fade_exponent: 1.3,
            capacity_noise: 0.002,
            peak_shift: 0.08,
            peak_broadening: 2.0,
            peak_loss: 0.6,
        }
    }
}

impl CycleSynthParams {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.cycles < 4 {
            out.push(format!("cycles {} must be at least 4", self.cycles));
        }
        for (name, v) in [
            ("nominal_capacity_ah", self.nominal_capacity_ah),
            ("current_a", self.current_a),
            ("voltage_step", self.voltage_step),
            ("fade_exponent", self.fade_exponent),
        ] {
            if !(v > 0.0) {
                out.push(format!("{name} {v} must be positive"));
            }
        }
        if !(self.voltage_range[0] < self.voltage_range[1]) {
            out.push("voltage_range must be increasing".to_string());
        }
        if !(0.0..1.0).contains(&self.fade) {
            out.push(format!("fade {} outside [0, 1)", self.fade));
        }
        if !(0.0..1.0).contains(&self.peak_loss) {
            out.push(format!("peak_loss {} outside [0, 1)", self.peak_loss));
        }
        if self.capacity_noise < 0.0 || self.peak_broadening < 0.0 {
            out.push("noise and broadening must be non-negative".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCycles {
    pub records: Vec<CycleRecord>,
    /// Noise-free SOH used to generate each cycle.
    pub true_soh: Vec<f64>,
}

/// Fraction of the cycle's charge passed at voltage `v` for fade level `d` in [0, 1].
fn charge_fraction(p: &CycleSynthParams, d: f64, v: f64) -> f64 {
    let [v0, v1] = p.voltage_range;
    let span = v1 - v0;
    let mu1 = v0 + 0.375 * span + p.peak_shift * d;
    let s1 = 0.025 * (1.0 + p.peak_broadening * d);
    let w1 = 0.45 * (1.0 - p.peak_loss * d);
    let mu2 = v0 + 0.73 * span + 0.5 * p.peak_shift * d;
    let s2 = 0.03 * (1.0 + 0.5 * p.peak_broadening * d);
    let w2 = 0.25;
    let raw =
        |x: f64| (1.0 - w1 - w2) * (x - v0) / span + w1 * logistic((x - mu1) / s1) + w2 * logistic((x - mu2) / s2);
    (raw(v) - raw(v0)) / (raw(v1) - raw(v0))
}

pub fn synthesize_cycles(params: &CycleSynthParams, seed: u64) -> Result<SyntheticCycles> {
    let problems = params.violations();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut rng = rng_from(derive_seed(seed, "synth.cycles", 0));
    let [v0, v1] = params.voltage_range;
    let steps = ((v1 - v0) / params.voltage_step).round() as usize;
    let n = params.cycles;
    let mut records = Vec::with_capacity(n);
    let mut true_soh = Vec::with_capacity(n);
    for k in 0..n {
        let x = k as f64 / (n - 1) as f64;
        let soh = 1.0 - params.fade * x.powf(params.fade_exponent);
        let capacity = params.nominal_capacity_ah * soh * (1.0 + params.capacity_noise * normal(&mut rng));
        let d = x.powf(params.fade_exponent);
        let charge_curve = (0..=steps)
            .map(|i| {
                let v = v0 + (v1 - v0) * i as f64 / steps as f64;
                let q = capacity * charge_fraction(params, d, v);
                ChargePoint {
                    time: q / params.current_a * 3600.0,
                    voltage: v,
                    charge: q,
                }
            })
            .collect();
        records.push(CycleRecord {
            cycle_index: k as u32 + 1,
            charge_curve,
            measured_capacity: capacity,
        });
        true_soh.push(soh);
    }
    Ok(SyntheticCycles { records, true_soh })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Columns `cycle,time,voltage,current,charge,capacity`; `header` lines are
/// written first as `#` comments.
pub fn write_cycles(path: impl AsRef<Path>, data: &SyntheticCycles, current_a: f64, header: &[String]) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = create(path)?;
    for h in header {
        writeln!(out, "# {h}").map_err(io)?;
    }
    writeln!(out, "cycle,time,voltage,current,charge,capacity").map_err(io)?;
    for r in &data.records {
        for p in &r.charge_curve {
            writeln!(
                out,
                "{},{:.3},{:.4},{:.4},{:.7},{:.7}",
                r.cycle_index, p.time, p.voltage, current_a, p.charge, r.measured_capacity
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSynthParams {
    pub vehicles: usize,
    pub months: usize,
    pub events_per_month: usize,
    pub nominal_capacity_ah: f64,
    pub sample_interval_s: f64,
    /// Shared SOH loss by the last month.
    pub fade: f64,
    pub fade_exponent: f64,
    /// Per-vehicle fade rate multiplier is uniform in `1 ± rate_spread`.
    pub rate_spread: f64,
    /// Standard deviation of the monthly SOH wander.
    pub month_noise: f64,
    /// Relative standard deviation of each event's capacity.
    pub event_noise: f64,
    pub rebound_probability: f64,
    pub rebound_size: f64,
    /// SOC reporting resolution as a fraction.
    pub soc_resolution: f64,
    /// First calendar month, `YYYY-MM`.
    pub start_month: String,
}

impl Default for FleetSynthParams {
    fn default() -> Self {
        Self {
            vehicles: 20,
            months: 29,
            events_per_month: 5,
            nominal_capacity_ah: 150.0,
            sample_interval_s: 8.0,
            fade: 0.08,
            fade_exponent: 0.8,
            rate_spread: 0.15,
            month_noise: 0.001,
            event_noise: 0.002,
            rebound_probability: 0.08,
            rebound_size: 0.004,
            soc_resolution: 0.005,
            start_month: "2021-01".into(),
        }
    }
}

impl FleetSynthParams {
    fn start(&self) -> Result<NaiveDate> {
        NaiveDate::parse_from_str(&format!("{}-01", self.start_month), "%Y-%m-%d")
            .map_err(|_| Error::invalid(format!("start_month `{}` is not YYYY-MM", self.start_month)))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.vehicles == 0 || self.months == 0 {
            out.push("vehicles and months must be positive".to_string());
        }
        if !(1..=28).contains(&self.events_per_month) {
            out.push(format!("events_per_month {} outside 1..=28", self.events_per_month));
        }
        for (name, v) in [
            ("nominal_capacity_ah", self.nominal_capacity_ah),
            ("sample_interval_s", self.sample_interval_s),
            ("soc_resolution", self.soc_resolution),
            ("fade_exponent", self.fade_exponent),
        ] {
            if !(v > 0.0) {
                out.push(format!("{name} {v} must be positive"));
            }
        }
        if !(0.0..0.5).contains(&self.fade) {
            out.push(format!("fade {} outside [0, 0.5)", self.fade));
        }
        if !(0.0..1.0).contains(&self.rate_spread) || !(0.0..=1.0).contains(&self.rebound_probability) {
            out.push("rate_spread and rebound_probability must lie in [0, 1)".to_string());
        }
        if self.start().is_err() {
            out.push(format!("start_month `{}` is not YYYY-MM", self.start_month));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFleet {
    /// Grouped by vehicle, chronological within each vehicle.
    pub segments: Vec<ChargeSegment>,
    /// (vehicle, noise-free monthly SOH).
    pub true_soh: Vec<(String, Vec<f64>)>,
}

fn add_months(date: NaiveDate, months: usize) -> NaiveDate {
    let total = date.year() as usize * 12 + date.month0() as usize + months;
    NaiveDate::from_ymd_opt((total / 12) as i32, (total % 12) as u32 + 1, 1).expect("valid month")
}

/// One constant-current/constant-current charge from `soc0` to `soc1`.
fn charge_event(rng: &mut ChaCha8Rng, p: &FleetSynthParams, capacity: f64, soc0: f64, soc1: f64) -> Vec<ChargeSample> {
    let dt = p.sample_interval_s;
    let mut soc = soc0;
    let mut t = 0.0;
    let mut out = Vec::new();
    let quantize = |s: f64| (s / p.soc_resolution).round() * p.soc_resolution;
    loop {
        let current = if soc < 0.8 { 1.0 } else { 0.35 } * p.nominal_capacity_ah;
        let measured = current * (1.0 + 0.001 * normal(rng));
        out.push(ChargeSample {
            time: t,
            current: -measured,
            voltage: 3.35 + 0.75 * soc + 0.0004 * current + 0.002 * normal(rng),
            soc: quantize(soc).min(1.0),
            temperature: Some(25.0 + 2.0 * normal(rng)),
        });
        if soc >= soc1 {
            break;
        }
        soc += measured * dt / 3600.0 / capacity;
        t += dt;
    }
    out
}

pub fn synthesize_fleet(params: &FleetSynthParams, seed: u64) -> Result<SyntheticFleet> {
    let problems = params.violations();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let start = params.start()?;
    let width = params.vehicles.to_string().len().max(2);
    let mut segments = Vec::new();
    let mut true_soh = Vec::new();
    for v in 0..params.vehicles {
        let id = format!("V{:0width$}", v + 1);
        let mut rng = rng_from(derive_seed(seed, "synth.fleet", v as u64));
        let rate = 1.0 + params.rate_spread * (2.0 * rng.random::<f64>() - 1.0);
        let mut rebound = 0.0;
        let mut wander = 0.0;
        let mut clean = Vec::with_capacity(params.months);
        for m in 0..params.months {
            let x = if params.months > 1 {
                m as f64 / (params.months - 1) as f64
            } else {
                0.0
            };
            let trend = 1.0 - params.fade * rate * x.powf(params.fade_exponent);
            rebound *= 0.5;
            if m > 0 && rng.random::<f64>() < params.rebound_probability {
                rebound += params.rebound_size;
            }
            wander = 0.5 * wander + params.month_noise * normal(&mut rng);
            let soh = trend + rebound + wander;
            clean.push(trend);
            let month_start = add_months(start, m);
            let mut days = sample(&mut rng, 28, params.events_per_month).into_vec();
            days.sort_unstable();
            for day in days {
                let when: NaiveDateTime = month_start.and_hms_opt(0, 0, 0).expect("midnight")
                    + Duration::days(day as i64)
                    + Duration::minutes(rng.random_range(6 * 60..20 * 60));
                let capacity = params.nominal_capacity_ah * soh * (1.0 + params.event_noise * normal(&mut rng));
                let soc0 = rng.random_range(0.15..0.45);
                let soc1 = rng.random_range(0.85..0.98);
                segments.push(ChargeSegment {
                    source_id: id.clone(),
                    start_timestamp: when,
                    samples: charge_event(&mut rng, params, capacity, soc0, soc1),
                });
            }
        }
        true_soh.push((id, clean));
    }
    Ok(SyntheticFleet { segments, true_soh })
}

/// Columns `vehicle,timestamp,current,voltage,soc,temperature` with SOC in percent.
pub fn write_fleet(path: impl AsRef<Path>, data: &SyntheticFleet, header: &[String]) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = create(path)?;
    for h in header {
        writeln!(out, "# {h}").map_err(io)?;
    }
    writeln!(out, "vehicle,timestamp,current,voltage,soc,temperature").map_err(io)?;
    for seg in &data.segments {
        for s in &seg.samples {
            let ts = seg.start_timestamp + Duration::milliseconds((s.time * 1000.0).round() as i64);
            writeln!(
                out,
                "{},{},{:.3},{:.4},{:.1},{:.2}",
                seg.source_id,
                ts.format("%Y-%m-%d %H:%M:%S"),
                s.current,
                s.voltage,
                s.soc * 100.0,
                s.temperature.unwrap_or(f64::NAN)
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiFamily {
    pub soh: Vec<f64>,
    /// One raw candidate per indicator name.
    pub candidates: Vec<HiSeries>,
}

/// Indicator candidates with known quality: MF is an affine image of SOH
/// plus white noise of `noise` times its range; the others are pure noise,
/// much noisier copies, saturating or non-monotone maps of SOH.
pub fn synthesize_hi_family(points: usize, noise: f64, seed: u64) -> Result<HiFamily> {
    if points < 8 {
        return Err(Error::invalid("an indicator family needs at least 8 points"));
    }
    let mut rng = rng_from(derive_seed(seed, "synth.hi_family", 0));
    let soh: Vec<f64> = (0..points)
        .map(|i| {
            let x = i as f64 / (points - 1) as f64;
            1.0 - 0.2 * x.powf(1.2)
        })
        .collect();
    let range = 0.2;
    let mut series = |f: &dyn Fn(f64, f64, f64) -> f64| -> Vec<f64> {
        soh.iter()
            .enumerate()
            .map(|(i, s)| {
                let x = i as f64 / (points - 1) as f64;
                f(*s, x, normal(&mut rng))
            })
            .collect()
    };
    let mf = series(&|s, _, e| 3.0 * s + 1.0 + 3.0 * range * noise * e);
    let pf = series(&|_, _, e| e);
    let kur = series(&|_, x, e| (9.0 * x).sin() + 0.5 * e);
    let cf = series(&|s, _, e| s + range * 1.5 * e);
    let wf = series(&|s, _, e| s.max(0.95) + 0.01 * e);
    let area = series(&|s, x, e| s + 0.3 * range * (12.0 * x).sin() + 0.05 * range * e);
    let peak = series(&|s, _, e| (s - 0.9).powi(2) + 0.001 * e);
    let by_name = |n: HiName| match n {
        HiName::Mf => mf.clone(),
        HiName::Pf => pf.clone(),
        HiName::Kur => kur.clone(),
        HiName::Cf => cf.clone(),
        HiName::Wf => wf.clone(),
        HiName::Area => area.clone(),
        HiName::Peak => peak.clone(),
    };
    let candidates = HiName::ALL.iter().map(|&n| HiSeries::new(n, by_name(n))).collect();
    Ok(HiFamily { soh, candidates })
}
