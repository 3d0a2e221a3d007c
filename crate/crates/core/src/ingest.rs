//! Lab-cycle and fleet-charging ingestion, ampere-time capacity and SOH series.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column mapping for per-cycle lab data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleSchema {
    pub cycle: String,
    pub time: String,
    pub voltage: String,
    /// Cumulative charge in Ah. When absent, charge is integrated from `current`.
    pub charge: Option<String>,
    /// Current in A; used only when `charge` is not mapped.
    pub current: Option<String>,
    /// Per-cycle measured capacity in Ah. Defaults to the charge passed.
    pub capacity: Option<String>,
    /// Accepted voltage window in volts.
    pub voltage_window: [f64; 2],
    /// Field delimiter; detected from the header line when unset.
    pub delimiter: Option<char>,
}

impl Default for CycleSchema {
    fn default() -> Self {
        Self {
            cycle: "cycle".into(),
            time: "time".into(),
            voltage: "voltage".into(),
            charge: Some("charge".into()),
            current: None,
            capacity: None,
            voltage_window: [2.5, 4.3],
            delimiter: None,
        }
    }
}

/// Column mapping for fleet charging logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSchema {
    /// Vehicle identifier column. Without it the whole file is one source.
    pub vehicle: Option<String>,
    pub timestamp: String,
    pub current: String,
    pub voltage: String,
    pub soc: String,
    pub temperature: Option<String>,
    /// SOC logged in percent (converted to a fraction) rather than as a fraction.
    pub soc_percent: bool,
    /// Nominal logger sampling interval in seconds.
    pub sample_interval_s: f64,
    /// A gap longer than `gap_factor * sample_interval_s` starts a new segment.
    pub gap_factor: f64,
    pub delimiter: Option<char>,
}

impl Default for FleetSchema {
    fn default() -> Self {
        Self {
            vehicle: Some("vehicle".into()),
            timestamp: "timestamp".into(),
            current: "current".into(),
            voltage: "voltage".into(),
            soc: "soc".into(),
            temperature: None,
            soc_percent: true,
            sample_interval_s: 8.0,
            gap_factor: 10.0,
            delimiter: None,
        }
    }
}

impl FleetSchema {
    pub fn gap_threshold_s(&self) -> f64 {
        self.gap_factor * self.sample_interval_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeSample {
    /// Seconds since segment start.
    pub time: f64,
    /// Amperes, negative while charging.
    pub current: f64,
    pub voltage: f64,
    /// Fraction in [0, 1].
    pub soc: f64,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeSegment {
    pub source_id: String,
    pub start_timestamp: NaiveDateTime,
    pub samples: Vec<ChargeSample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargePoint {
    pub time: f64,
    pub voltage: f64,
    /// Cumulative charge in Ah.
    pub charge: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle_index: u32,
    pub charge_curve: Vec<ChargePoint>,
    /// Ah.
    pub measured_capacity: f64,
}

impl CycleRecord {
    /// Charge passed over the recorded curve.
    pub fn delta_charge(&self) -> f64 {
        match (self.charge_curve.first(), self.charge_curve.last()) {
            (Some(a), Some(b)) => b.charge - a.charge,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleParse {
    /// Sorted by `cycle_index`.
    pub records: Vec<CycleRecord>,
    /// Rows outside the voltage window.
    pub dropped_rows: usize,
    /// Rows whose cumulative charge went backwards.
    pub non_monotone_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetParse {
    pub segments: Vec<ChargeSegment>,
    /// Samples removed because SOC decreased or fell outside [0, 1].
    pub cleaned_samples: usize,
    /// Segments left with fewer than two samples.
    pub discarded_segments: usize,
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, delimiter: Option<char>) -> Result<Self> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut text = String::new();
        File::open(path)
            .and_then(|f| BufReader::new(f).read_to_string(&mut text))
            .map_err(io_err)?;
        let delim = match delimiter {
            Some(c) => c as u8,
            None => {
                let header = text
                    .as_bytes()
                    .lines()
                    .map_while(|l| l.ok())
                    .find(|l| !l.trim().is_empty() && !l.starts_with('#'))
                    .unwrap_or_default();
                if header.contains('\t') {
                    b'\t'
                } else {
                    b','
                }
            }
        };
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delim)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: self.path.clone(),
                column: name.to_owned(),
            })
    }

    fn text<'a>(&self, rec: &'a csv::StringRecord, col: usize) -> &'a str {
        rec.get(col).unwrap_or("")
    }

    fn number(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<f64> {
        let raw = self.text(rec, col);
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::BadValue {
                path: self.path.clone(),
                line,
                column: self.headers[col].clone(),
                value: raw.to_owned(),
            })
    }
}

/// One sample: time, voltage, charge or current, capacity.
type RawRow = (f64, f64, f64, Option<f64>);

/// Parses a per-cycle charge file into cycle records.
pub fn parse_cycle_file(path: impl AsRef<Path>, schema: &CycleSchema) -> Result<CycleParse> {
    let table = Table::read(path.as_ref(), schema.delimiter)?;
    let c_cycle = table.column(&schema.cycle)?;
    let c_time = table.column(&schema.time)?;
    let c_volt = table.column(&schema.voltage)?;
    let c_charge = schema.charge.as_deref().map(|c| table.column(c)).transpose()?;
    let c_current = match c_charge {
        Some(_) => None,
        None => Some(
            table.column(schema.current.as_deref().ok_or_else(|| Error::MissingColumn {
                path: table.path.clone(),
                column: "charge or current".into(),
            })?)?,
        ),
    };
    let c_cap = schema.capacity.as_deref().map(|c| table.column(c)).transpose()?;
    let [v_lo, v_hi] = schema.voltage_window;

    let mut by_cycle: HashMap<u32, Vec<RawRow>> = HashMap::new();
    let mut dropped_rows = 0;
    for (line, rec) in &table.rows {
        let cyc = table.number(*line, rec, c_cycle)?;
        if cyc < 0.0 || cyc.fract() != 0.0 {
            return Err(Error::BadValue {
                path: table.path.clone(),
                line: *line,
                column: schema.cycle.clone(),
                value: table.text(rec, c_cycle).to_owned(),
            });
        }
        let t = table.number(*line, rec, c_time)?;
        let v = table.number(*line, rec, c_volt)?;
        let q = table.number(*line, rec, c_charge.or(c_current).unwrap_or_default())?;
        let cap = c_cap.map(|c| table.number(*line, rec, c)).transpose()?;
        if !(v_lo..=v_hi).contains(&v) {
            dropped_rows += 1;
            continue;
        }
        by_cycle.entry(cyc as u32).or_default().push((t, v, q, cap));
    }

    let mut non_monotone_rows = 0;
    let mut records = Vec::with_capacity(by_cycle.len());
    for (cycle_index, mut rows) in by_cycle {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut curve = Vec::with_capacity(rows.len());
        let mut acc = 0.0;
        for (k, &(t, v, q, _)) in rows.iter().enumerate() {
            let charge = if c_charge.is_some() {
                q
            } else {
                if k > 0 {
                    let (t0, _, i0, _) = rows[k - 1];
                    acc += i0.abs() * (t - t0) / 3600.0;
                }
                acc
            };
            if curve.last().is_some_and(|p: &ChargePoint| charge < p.charge) {
                non_monotone_rows += 1;
                continue;
            }
            curve.push(ChargePoint {
                time: t,
                voltage: v,
                charge,
            });
        }
        if curve.is_empty() {
            continue;
        }
        let measured_capacity = rows
            .iter()
            .find_map(|r| r.3)
            .unwrap_or_else(|| curve[curve.len() - 1].charge - curve[0].charge);
        records.push(CycleRecord {
            cycle_index,
            charge_curve: curve,
            measured_capacity,
        });
    }
    if records.is_empty() {
        return Err(Error::NoUsableRows { path: table.path });
    }
    records.sort_by_key(|r| r.cycle_index);
    Ok(CycleParse {
        records,
        dropped_rows,
        non_monotone_rows,
    })
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    if let Ok(secs) = raw.parse::<f64>() {
        let whole = secs.floor();
        let nanos = ((secs - whole) * 1e9).round() as u32;
        return chrono::DateTime::from_timestamp(whole as i64, nanos.min(999_999_999)).map(|d| d.naive_utc());
    }
    ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y/%m/%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
}

fn seconds_between(a: NaiveDateTime, b: NaiveDateTime) -> f64 {
    (b - a).num_microseconds().map_or(f64::NAN, |us| us as f64 * 1e-6)
}

/// Parses a fleet charging log into charging segments.
pub fn parse_fleet_file(path: impl AsRef<Path>, schema: &FleetSchema) -> Result<FleetParse> {
    let table = Table::read(path.as_ref(), schema.delimiter)?;
    let c_vehicle = schema.vehicle.as_deref().map(|c| table.column(c)).transpose()?;
    let c_ts = table.column(&schema.timestamp)?;
    let c_cur = table.column(&schema.current)?;
    let c_volt = table.column(&schema.voltage)?;
    let c_soc = table.column(&schema.soc)?;
    let c_temp = schema.temperature.as_deref().map(|c| table.column(c)).transpose()?;
    if table.rows.is_empty() {
        return Err(Error::NoUsableRows { path: table.path });
    }

    struct Raw {
        ts: NaiveDateTime,
        current: f64,
        voltage: f64,
        soc: f64,
        temperature: Option<f64>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut streams: HashMap<String, Vec<Raw>> = HashMap::new();
    for (line, rec) in &table.rows {
        let id = c_vehicle.map(|c| table.text(rec, c).to_owned()).unwrap_or_else(|| {
            path.as_ref()
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
        });
        let raw_ts = table.text(rec, c_ts);
        let ts = parse_timestamp(raw_ts).ok_or_else(|| Error::BadValue {
            path: table.path.clone(),
            line: *line,
            column: schema.timestamp.clone(),
            value: raw_ts.to_owned(),
        })?;
        let mut soc = table.number(*line, rec, c_soc)?;
        if schema.soc_percent {
            soc /= 100.0;
        }
        let sample = Raw {
            ts,
            current: table.number(*line, rec, c_cur)?,
            voltage: table.number(*line, rec, c_volt)?,
            soc,
            temperature: c_temp.map(|c| table.number(*line, rec, c)).transpose()?,
        };
        streams
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(sample);
    }

    let gap = schema.gap_threshold_s();
    let mut segments = Vec::new();
    let mut cleaned_samples = 0;
    let mut discarded_segments = 0;
    for id in order {
        let stream = &streams[&id];
        let mut start = 0;
        while start < stream.len() {
            let mut end = start + 1;
            while end < stream.len() && seconds_between(stream[end - 1].ts, stream[end].ts) <= gap {
                end += 1;
            }
            let origin = stream[start].ts;
            let mut samples: Vec<ChargeSample> = Vec::with_capacity(end - start);
            for raw in &stream[start..end] {
                let keep = (0.0..=1.0).contains(&raw.soc) && samples.last().is_none_or(|s| raw.soc >= s.soc);
                if !keep {
                    cleaned_samples += 1;
                    continue;
                }
                samples.push(ChargeSample {
                    time: seconds_between(origin, raw.ts),
                    current: raw.current,
                    voltage: raw.voltage,
                    soc: raw.soc,
                    temperature: raw.temperature,
                });
            }
            if let Some(k) = samples.windows(2).position(|w| w[1].time <= w[0].time) {
                return Err(Error::NonMonotoneTime {
                    source_id: id.clone(),
                    index: k + 1,
                });
            }
            if samples.len() < 2 {
                discarded_segments += 1;
            } else {
                let t0 = samples[0].time;
                for s in &mut samples {
                    s.time -= t0;
                }
                let start_timestamp = origin + chrono::Duration::microseconds((t0 * 1e6) as i64);
                segments.push(ChargeSegment {
                    source_id: id.clone(),
                    start_timestamp,
                    samples,
                });
            }
            start = end;
        }
    }
    Ok(FleetParse {
        segments,
        cleaned_samples,
        discarded_segments,
    })
}

/// Default minimum SOC span accepted by [`compute_capacity`].
pub const MIN_SOC_SPAN: f64 = 0.1;

/// Ampere-time capacity of one charging segment in Ah.
///
/// The current integral uses the left-rectangle rule on the sampling grid and
/// is normalized by the SOC span of the segment.
pub fn compute_capacity(segment: &ChargeSegment, min_soc_span: f64) -> Result<f64> {
    let s = &segment.samples;
    if s.len() < 2 {
        return Err(Error::invalid("segment needs at least two samples"));
    }
    let span = s[s.len() - 1].soc - s[0].soc;
    if !(span >= min_soc_span - 1e-9) {
        return Err(Error::SocSpanTooSmall {
            span,
            min: min_soc_span,
        });
    }
    if s.iter().all(|x| x.current >= 0.0) {
        return Err(Error::NotCharging);
    }
    let amp_seconds: f64 = s.windows(2).map(|w| w[0].current * (w[1].time - w[0].time)).sum();
    Ok(-amp_seconds / 3600.0 / span)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonthlyStat {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetMonthlyRecord {
    pub vehicle_id: String,
    /// 1-based month ordinal counted from the earliest segment in the fleet.
    pub month: u32,
    pub capacities: Vec<f64>,
    pub median_capacity: f64,
    pub mean_capacity: f64,
}

impl FleetMonthlyRecord {
    pub fn capacity(&self, stat: MonthlyStat) -> f64 {
        match stat {
            MonthlyStat::Median => self.median_capacity,
            MonthlyStat::Mean => self.mean_capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyAggregate {
    pub stat: MonthlyStat,
    pub records: Vec<FleetMonthlyRecord>,
    /// (vehicle, month, events) for months below the event threshold.
    pub sparse_months: Vec<(String, u32, usize)>,
    /// Segments rejected by [`compute_capacity`].
    pub rejected_segments: usize,
}

impl MonthlyAggregate {
    pub fn vehicles(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.vehicle_id.as_str()) {
                out.push(&r.vehicle_id);
            }
        }
        out
    }

    /// (month, capacity) for one vehicle using the aggregate's statistic.
    pub fn series(&self, vehicle: &str) -> Vec<(u32, f64)> {
        self.records
            .iter()
            .filter(|r| r.vehicle_id == vehicle)
            .map(|r| (r.month, r.capacity(self.stat)))
            .collect()
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn month_key(ts: NaiveDateTime) -> i64 {
    i64::from(ts.year()) * 12 + i64::from(ts.month0())
}

/// Groups segments by vehicle and calendar month and aggregates their capacities.
pub fn monthly_aggregate(
    segments: &[ChargeSegment],
    stat: MonthlyStat,
    min_events: usize,
    min_soc_span: f64,
) -> MonthlyAggregate {
    let Some(origin) = segments.iter().map(|s| month_key(s.start_timestamp)).min() else {
        return MonthlyAggregate {
            stat,
            records: Vec::new(),
            sparse_months: Vec::new(),
            rejected_segments: 0,
        };
    };
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<(usize, u32), Vec<f64>> = HashMap::new();
    let mut rejected_segments = 0;
    for seg in segments {
        let v = match order.iter().position(|id| *id == seg.source_id) {
            Some(i) => i,
            None => {
                order.push(&seg.source_id);
                order.len() - 1
            }
        };
        let month = (month_key(seg.start_timestamp) - origin + 1) as u32;
        match compute_capacity(seg, min_soc_span) {
            Ok(c) => groups.entry((v, month)).or_default().push(c),
            Err(_) => rejected_segments += 1,
        }
    }
    let mut keys: Vec<_> = groups.keys().copied().collect();
    keys.sort_unstable();
    let mut records = Vec::new();
    let mut sparse_months = Vec::new();
    for key in keys {
        let caps = groups.remove(&key).unwrap_or_default();
        let vehicle_id = order[key.0].to_owned();
        if caps.len() < min_events {
            sparse_months.push((vehicle_id, key.1, caps.len()));
            continue;
        }
        let mean_capacity = caps.iter().sum::<f64>() / caps.len() as f64;
        records.push(FleetMonthlyRecord {
            vehicle_id,
            month: key.1,
            median_capacity: median(&caps),
            mean_capacity,
            capacities: caps,
        });
    }
    MonthlyAggregate {
        stat,
        records,
        sparse_months,
        rejected_segments,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SohDenominator {
    First,
    Max,
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SohSeries {
    /// Cycle numbers or month ordinals.
    pub index: Vec<u32>,
    pub values: Vec<f64>,
}

impl SohSeries {
    pub fn new(index: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if index.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: index.len(),
                right: values.len(),
            });
        }
        Ok(Self { index, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ratio of each capacity to the chosen reference capacity, indexed `1..=n`.
pub fn compute_soh(capacities: &[f64], denominator: SohDenominator) -> Result<SohSeries> {
    if capacities.is_empty() {
        return Err(Error::invalid("no capacities"));
    }
    if let Some(c) = capacities.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::invalid(format!("non-positive capacity {c}")));
    }
    let denom = match denominator {
        SohDenominator::First => capacities[0],
        SohDenominator::Max => capacities.iter().copied().fold(f64::MIN, f64::max),
        SohDenominator::Explicit(d) => d,
    };
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::invalid(format!("non-positive denominator {denom}")));
    }
    Ok(SohSeries {
        index: (1..=capacities.len() as u32).collect(),
        values: capacities.iter().map(|c| c / denom).collect(),
    })
}
