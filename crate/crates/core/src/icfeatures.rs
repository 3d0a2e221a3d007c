//! Incremental-capacity curves and the health indicators extracted from them.
//!
//! An [`IcCurve`] stores dQ/dV at the centres of uniform voltage bins. The
//! curve is read as a piecewise-linear function through the bin centres,
//! held constant over the outer half bins, so that integrating it over its
//! full extent returns exactly the charge that was binned.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hiselect::{spearman, CorrelationMode, HiName, HiSeries};
use crate::ingest::{CycleRecord, SohSeries};

pub const DEFAULT_BIN_WIDTH: f64 = 0.01;
pub const DEFAULT_SG_WINDOW: usize = 21;
pub const DEFAULT_SG_ORDER: usize = 3;
pub const DEFAULT_PEAK_HALFWIDTH: f64 = 0.1;
pub const DEFAULT_HALFWIDTHS: [f64; 4] = [0.05, 0.10, 0.15, 0.20];
/// Largest voltage dip tolerated (and dropped) while cleaning a charge curve.
pub const VOLTAGE_DIP_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct IcCurve {
    pub cycle_index: u32,
    /// Bin centres in volts, uniformly spaced by `bin_width`.
    pub voltage_grid: Vec<f64>,
    /// Ah/V.
    pub dqdv: Vec<f64>,
    pub bin_width: f64,
    pub smoothed: bool,
}

impl IcCurve {
    pub fn len(&self) -> usize {
        self.dqdv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dqdv.is_empty()
    }

    /// Voltage interval covered by the curve, including the outer half bins.
    pub fn extent(&self) -> (f64, f64) {
        let h = 0.5 * self.bin_width;
        (
            self.voltage_grid[0] - h,
            self.voltage_grid[self.voltage_grid.len() - 1] + h,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakDescriptor {
    pub peak_voltage: f64,
    pub peak_height: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessFeatures {
    pub cf: f64,
    pub pf: f64,
    pub mf: f64,
    pub wf: f64,
    pub kur: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRow {
    pub cycle_index: u32,
    pub cf: f64,
    pub pf: f64,
    pub mf: f64,
    pub wf: f64,
    pub kur: f64,
    /// Ah.
    pub area: f64,
    /// Ah/V.
    pub peak: f64,
}

impl FeatureRow {
    pub fn get(&self, name: HiName) -> f64 {
        match name {
            HiName::Mf => self.mf,
            HiName::Pf => self.pf,
            HiName::Kur => self.kur,
            HiName::Cf => self.cf,
            HiName::Wf => self.wf,
            HiName::Area => self.area,
            HiName::Peak => self.peak,
        }
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v <= x);
    if k == 0 {
        return ys[0];
    }
    if k == xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    ys[k - 1] + (ys[k] - ys[k - 1]) * (x - x0) / (x1 - x0)
}

/// Bins the charge curve of one cycle into a raw dQ/dV curve.
pub fn compute_ic_curve(record: &CycleRecord, bin_width: f64) -> Result<IcCurve> {
    if !(bin_width > 0.0) {
        return Err(Error::invalid("bin width must be positive"));
    }
    // Clean to a strictly increasing voltage axis.
    let mut volts: Vec<f64> = Vec::with_capacity(record.charge_curve.len());
    let mut charge: Vec<f64> = Vec::with_capacity(record.charge_curve.len());
    for p in &record.charge_curve {
        match volts.last() {
            Some(&last) if p.voltage < last - VOLTAGE_DIP_TOLERANCE => {
                return Err(Error::invalid(format!(
                    "cycle {}: voltage falls from {last} to {} V",
                    record.cycle_index, p.voltage
                )));
            }
            Some(&last) if p.voltage < last => {}
            Some(&last) if p.voltage == last => {
                let q = charge.last_mut().expect("paired with volts");
                *q = q.max(p.charge);
            }
            _ => {
                volts.push(p.voltage);
                charge.push(p.charge);
            }
        }
    }
    if volts.len() < 2 {
        return Err(Error::invalid(format!(
            "cycle {}: fewer than two distinct voltages",
            record.cycle_index
        )));
    }
    let (v_min, v_max) = (volts[0], volts[volts.len() - 1]);
    let k0 = (v_min / bin_width + 1e-9).floor() as i64;
    let k1 = (v_max / bin_width - 1e-9).ceil() as i64;
    let bins = (k1 - k0).max(1) as usize;

    let mut grid = Vec::with_capacity(bins);
    let mut dqdv = Vec::with_capacity(bins);
    let mut occupied = vec![false; bins];
    for &v in &volts {
        let b = ((v / bin_width).floor() as i64 - k0).clamp(0, bins as i64 - 1) as usize;
        occupied[b] = true;
    }
    for b in 0..bins {
        let lo = (k0 + b as i64) as f64 * bin_width;
        let hi = lo + bin_width;
        let dq = interp(&volts, &charge, hi.min(v_max)) - interp(&volts, &charge, lo.max(v_min));
        grid.push(lo + 0.5 * bin_width);
        dqdv.push(dq / bin_width);
    }
    let filled: Vec<usize> = (0..bins).filter(|&b| occupied[b]).collect();
    if filled.len() < 2 {
        return Err(Error::invalid(format!(
            "cycle {}: fewer than two occupied voltage bins",
            record.cycle_index
        )));
    }
    let xs: Vec<f64> = filled.iter().map(|&b| grid[b]).collect();
    let ys: Vec<f64> = filled.iter().map(|&b| dqdv[b]).collect();
    for b in (0..bins).filter(|&b| !occupied[b]) {
        dqdv[b] = interp(&xs, &ys, grid[b]);
    }
    Ok(IcCurve {
        cycle_index: record.cycle_index,
        voltage_grid: grid,
        dqdv,
        bin_width,
        smoothed: false,
    })
}

/// Least-squares weights that evaluate the degree-`order` fit of a
/// `window`-point neighbourhood at offset `at` from its centre.
fn sg_weights(window: usize, order: usize, at: isize) -> Vec<f64> {
    let half = (window / 2) as f64;
    let scale = half.max(1.0);
    let design = DMatrix::from_fn(window, order + 1, |i, j| ((i as f64 - half) / scale).powi(j as i32));
    let normal = design.transpose() * &design;
    let solved = normal
        .lu()
        .solve(&design.transpose())
        .expect("Vandermonde normal matrix is nonsingular for window > order");
    let s = at as f64 / scale;
    let basis = DVector::from_fn(order + 1, |j, _| s.powi(j as i32));
    (basis.transpose() * solved).iter().copied().collect()
}

/// Savitzky–Golay smoothing of the dQ/dV values on the curve's uniform grid.
pub fn savitzky_golay(curve: &IcCurve, window: usize, poly_order: usize) -> Result<IcCurve> {
    let n = curve.len();
    if window % 2 == 0 {
        return Err(Error::invalid(format!("window {window} must be odd")));
    }
    if window <= poly_order {
        return Err(Error::invalid(format!(
            "window {window} must exceed polynomial order {poly_order}"
        )));
    }
    if window > n {
        return Err(Error::invalid(format!("window {window} exceeds curve length {n}")));
    }
    let half = window / 2;
    let centre = sg_weights(window, poly_order, 0);
    let y = &curve.dqdv;
    let mut out = vec![0.0; n];
    for i in half..n - half {
        out[i] = centre.iter().zip(&y[i - half..=i + half]).map(|(w, v)| w * v).sum();
    }
    for i in 0..half {
        let w = sg_weights(window, poly_order, i as isize - half as isize);
        out[i] = w.iter().zip(&y[..window]).map(|(w, v)| w * v).sum();
        let w = sg_weights(window, poly_order, half as isize - i as isize);
        let j = n - 1 - i;
        out[j] = w.iter().zip(&y[n - window..]).map(|(w, v)| w * v).sum();
    }
    Ok(IcCurve {
        dqdv: out,
        smoothed: true,
        ..curve.clone()
    })
}

/// Finds the highest dQ/dV grid point inside `search_window`; ties resolve
/// to the lowest voltage. Bounds are `peak ± half_width` clipped to the
/// curve extent.
pub fn locate_peak(curve: &IcCurve, search_window: (f64, f64), half_width: f64) -> Result<PeakDescriptor> {
    let (lo, hi) = search_window;
    let mut best: Option<usize> = None;
    for (k, &v) in curve.voltage_grid.iter().enumerate() {
        if v < lo || v > hi {
            continue;
        }
        if best.is_none_or(|b| curve.dqdv[k] > curve.dqdv[b]) {
            best = Some(k);
        }
    }
    let k = best.ok_or_else(|| {
        Error::invalid(format!(
            "search window [{lo}, {hi}] V misses the curve of cycle {}",
            curve.cycle_index
        ))
    })?;
    let (e_lo, e_hi) = curve.extent();
    let peak_voltage = curve.voltage_grid[k];
    Ok(PeakDescriptor {
        peak_voltage,
        peak_height: curve.dqdv[k],
        lower_bound: (peak_voltage - half_width).max(e_lo),
        upper_bound: (peak_voltage + half_width).min(e_hi),
    })
}

/// Trapezoidal integral of dQ/dV over `[lower, upper]` in Ah.
pub fn integrate_area(curve: &IcCurve, lower: f64, upper: f64) -> Result<f64> {
    let (e_lo, e_hi) = curve.extent();
    let tol = 1e-9 * curve.bin_width;
    if !(lower < upper) {
        return Err(Error::invalid(format!("empty interval [{lower}, {upper}]")));
    }
    if lower < e_lo - tol || upper > e_hi + tol {
        return Err(Error::invalid(format!(
            "interval [{lower}, {upper}] outside curve extent [{e_lo}, {e_hi}]"
        )));
    }
    let (lower, upper) = (lower.max(e_lo), upper.min(e_hi));
    let n = curve.len();
    let mut xs = Vec::with_capacity(n + 2);
    let mut ys = Vec::with_capacity(n + 2);
    xs.push(e_lo);
    ys.push(curve.dqdv[0]);
    xs.extend_from_slice(&curve.voltage_grid);
    ys.extend_from_slice(&curve.dqdv);
    xs.push(e_hi);
    ys.push(curve.dqdv[n - 1]);

    let mut area = 0.0;
    for k in 0..xs.len() - 1 {
        let a = xs[k].max(lower);
        let b = xs[k + 1].min(upper);
        if b <= a {
            continue;
        }
        let at = |x: f64| ys[k] + (ys[k + 1] - ys[k]) * (x - xs[k]) / (xs[k + 1] - xs[k]);
        area += 0.5 * (at(a) + at(b)) * (b - a);
    }
    Ok(area)
}

/// Crest, pulse, margin and waveform factors plus excess kurtosis of a sample.
pub fn dimensionless_features(values: &[f64]) -> Result<DimensionlessFeatures> {
    if values.len() < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    if values.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("all-zero sample"));
    }
    let n = values.len() as f64;
    let peak = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq = values.iter().map(|v| v * v).sum::<f64>() / n;
    let mean_root = values.iter().map(|v| v.abs().sqrt()).sum::<f64>() / n;
    let mean_quad = values.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    let rms = mean_sq.sqrt();
    Ok(DimensionlessFeatures {
        cf: peak / rms,
        pf: peak / mean_abs,
        mf: peak / (mean_root * mean_root),
        wf: rms / mean_abs,
        kur: mean_quad / (mean_sq * mean_sq) - 3.0,
    })
}

/// Assembles the full feature row of a smoothed curve given its area bounds.
pub fn feature_row(curve: &IcCurve, peak: &PeakDescriptor) -> Result<FeatureRow> {
    let d = dimensionless_features(&curve.dqdv)?;
    Ok(FeatureRow {
        cycle_index: curve.cycle_index,
        cf: d.cf,
        pf: d.pf,
        mf: d.mf,
        wf: d.wf,
        kur: d.kur,
        area: integrate_area(curve, peak.lower_bound, peak.upper_bound)?,
        peak: peak.peak_height,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaCandidate {
    pub below_peak: f64,
    pub above_peak: f64,
    /// `None` when the candidate was skipped.
    pub correlation: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaSweep {
    /// Chosen distance from the peak to the lower boundary, in volts.
    pub below_peak: f64,
    /// Chosen distance from the peak to the upper boundary, in volts.
    pub above_peak: f64,
    /// Per-cycle peak and area boundaries under the chosen widths.
    pub descriptors: Vec<PeakDescriptor>,
    pub series: HiSeries,
    /// Correlation of the chosen series with SOH; 0 when degenerate.
    pub correlation: f64,
    pub degenerate: bool,
    pub candidates: Vec<AreaCandidate>,
}

/// Tries every (below, above) pair drawn from `halfwidths` around each
/// cycle's own peak and keeps the area series with the largest |correlation|
/// to SOH.
pub fn sweep_area_boundaries(
    curves: &[IcCurve],
    soh: &SohSeries,
    halfwidths: &[f64],
    search_window: (f64, f64),
    mode: CorrelationMode,
) -> Result<AreaSweep> {
    if curves.len() != soh.len() {
        return Err(Error::LengthMismatch {
            left: curves.len(),
            right: soh.len(),
        });
    }
    if halfwidths.is_empty() {
        return Err(Error::invalid("no boundary candidates"));
    }
    let peaks = curves
        .iter()
        .map(|c| locate_peak(c, search_window, DEFAULT_PEAK_HALFWIDTH))
        .collect::<Result<Vec<_>>>()?;

    let mut candidates = Vec::new();
    let mut best: Option<(usize, f64, Vec<PeakDescriptor>, Vec<f64>)> = None;
    let mut first: Option<(Vec<PeakDescriptor>, Vec<f64>)> = None;
    for &below in halfwidths {
        for &above in halfwidths {
            let mut descs = Vec::with_capacity(curves.len());
            let mut areas = Vec::with_capacity(curves.len());
            let mut failure = None;
            for (c, p) in curves.iter().zip(&peaks) {
                let (e_lo, e_hi) = c.extent();
                let d = PeakDescriptor {
                    lower_bound: (p.peak_voltage - below).max(e_lo),
                    upper_bound: (p.peak_voltage + above).min(e_hi),
                    ..*p
                };
                match integrate_area(c, d.lower_bound, d.upper_bound) {
                    Ok(a) => {
                        descs.push(d);
                        areas.push(a);
                    }
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            }
            if let Some(note) = failure {
                candidates.push(AreaCandidate {
                    below_peak: below,
                    above_peak: above,
                    correlation: None,
                    note: Some(note),
                });
                continue;
            }
            if first.is_none() {
                first = Some((descs.clone(), areas.clone()));
            }
            let corr = spearman(&areas, &soh.values, mode)?;
            if corr.degenerate {
                candidates.push(AreaCandidate {
                    below_peak: below,
                    above_peak: above,
                    correlation: None,
                    note: Some("constant series".into()),
                });
                continue;
            }
            candidates.push(AreaCandidate {
                below_peak: below,
                above_peak: above,
                correlation: Some(corr.coefficient),
                note: None,
            });
            if best.as_ref().is_none_or(|b| corr.coefficient.abs() > b.1.abs()) {
                best = Some((candidates.len() - 1, corr.coefficient, descs, areas));
            }
        }
    }
    let (pick, correlation, descriptors, areas, degenerate) = match best {
        Some((i, c, d, a)) => (i, c, d, a, false),
        None => {
            let (d, a) = first.ok_or_else(|| Error::invalid("every boundary candidate failed"))?;
            let i = candidates
                .iter()
                .position(|c| c.note.as_deref() == Some("constant series"))
                .unwrap_or(0);
            (i, 0.0, d, a, true)
        }
    };
    Ok(AreaSweep {
        below_peak: candidates[pick].below_peak,
        above_peak: candidates[pick].above_peak,
        descriptors,
        series: HiSeries::new(HiName::Area, areas),
        correlation,
        degenerate,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ChargePoint;

    fn record_from(q: impl Fn(f64) -> f64, v0: f64, v1: f64, n: usize) -> CycleRecord {
        let charge_curve = (0..n)
            .map(|k| {
                let v = v0 + (v1 - v0) * k as f64 / (n - 1) as f64;
                ChargePoint {
                    time: k as f64,
                    voltage: v,
                    charge: q(v),
                }
            })
            .collect();
        CycleRecord {
            cycle_index: 1,
            charge_curve,
            measured_capacity: q(v1) - q(v0),
        }
    }

    fn curve(values: Vec<f64>, v0: f64, bw: f64) -> IcCurve {
        IcCurve {
            cycle_index: 1,
            voltage_grid: (0..values.len()).map(|k| v0 + bw * k as f64).collect(),
            dqdv: values,
            bin_width: bw,
            smoothed: true,
        }
    }

    #[test]
    fn linear_charge_gives_constant_dqdv() {
        let rec = record_from(|v| 2.0 * (v - 3.0), 3.0, 4.0, 2001);
        let ic = compute_ic_curve(&rec, 0.01).unwrap();
        assert_eq!(ic.len(), 100);
        for d in &ic.dqdv {
            assert!((d - 2.0).abs() < 1e-9, "{d}");
        }
    }

    #[test]
    fn logistic_step_peaks_at_centre() {
        let q = |v: f64| 0.5 / (1.0 + (-(v - 3.65) / 0.02).exp());
        let rec = record_from(q, 3.0, 4.2, 5000);
        let ic = compute_ic_curve(&rec, 0.01).unwrap();
        let p = locate_peak(&ic, (3.0, 4.2), 0.1).unwrap();
        assert!((p.peak_voltage - 3.65).abs() <= 0.01 + 1e-12, "{}", p.peak_voltage);
        let (lo, hi) = ic.extent();
        let total = integrate_area(&ic, lo, hi).unwrap();
        assert!((total - rec.delta_charge()).abs() <= 0.01 * rec.delta_charge());
    }

    #[test]
    fn voltage_reversal_is_rejected() {
        let mut rec = record_from(|v| v, 3.0, 4.0, 100);
        rec.charge_curve[50].voltage = 3.0;
        assert!(compute_ic_curve(&rec, 0.01).is_err());
        let rec = record_from(|v| v, 3.0, 3.004, 10);
        assert!(compute_ic_curve(&rec, 0.01).is_err());
    }

    #[test]
    fn empty_bins_are_interpolated() {
        // Samples only every 0.03 V: two of every three bins have no sample.
        let rec = record_from(|v| 2.0 * v, 3.0, 3.9, 31);
        let ic = compute_ic_curve(&rec, 0.01).unwrap();
        assert!(ic.dqdv.iter().all(|d| (d - 2.0).abs() < 1e-9));
    }

    #[test]
    fn savitzky_golay_reproduces_constants_and_quadratics() {
        let c = curve(vec![3.3; 40], 3.0, 0.01);
        let s = savitzky_golay(&c, 21, 3).unwrap();
        assert!(s.smoothed);
        for v in &s.dqdv {
            assert!((v - 3.3).abs() < 1e-12);
        }
        let q: Vec<f64> = (0..50).map(|k| 0.5 + 0.1 * k as f64 - 0.003 * (k * k) as f64).collect();
        let s = savitzky_golay(&curve(q.clone(), 3.0, 0.01), 11, 2).unwrap();
        for (a, b) in s.dqdv.iter().zip(&q) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn savitzky_golay_rejects_bad_windows() {
        let c = curve(vec![1.0; 10], 3.0, 0.01);
        assert!(savitzky_golay(&c, 4, 2).is_err());
        assert!(savitzky_golay(&c, 3, 3).is_err());
        assert!(savitzky_golay(&c, 11, 3).is_err());
    }

    #[test]
    fn peak_tie_breaks_low() {
        let c = curve(vec![1.0; 20], 3.0, 0.01);
        let p = locate_peak(&c, (3.05, 3.15), 0.1).unwrap();
        assert!((p.peak_voltage - 3.05).abs() < 1e-12);
        assert!(p.lower_bound < p.peak_voltage && p.peak_voltage < p.upper_bound);

        let grid: Vec<f64> = (0..=60).map(|k| 3.5 + 0.01 * k as f64).collect();
        let vals = grid
            .iter()
            .map(|v| (-(v - 3.6f64).powi(2) / 0.001).exp() + (-(v - 4.0f64).powi(2) / 0.001).exp())
            .collect();
        let c = curve(vals, 3.5, 0.01);
        let p = locate_peak(&c, (3.5, 4.1), 0.1).unwrap();
        assert!((p.peak_voltage - 3.6).abs() < 1e-9);
        assert!(locate_peak(&c, (5.0, 6.0), 0.1).is_err());
    }

    #[test]
    fn area_of_constant_and_triangle() {
        let c = curve(vec![2.0; 101], 3.0, 0.01);
        assert!((integrate_area(&c, 3.0, 3.5).unwrap() - 1.0).abs() < 1e-12);
        // Triangle with apex 1 at 3.5 V and zero at 3.3 and 3.7 V.
        let vals = (0..101)
            .map(|k| {
                let v = 3.0 + 0.01 * k as f64;
                (1.0 - (v - 3.5).abs() / 0.2).max(0.0)
            })
            .collect();
        let c = curve(vals, 3.0, 0.01);
        assert!((integrate_area(&c, 3.2, 3.8).unwrap() - 0.2).abs() < 1e-9);
        assert!(integrate_area(&c, 2.0, 3.5).is_err());
        assert!(integrate_area(&c, 3.5, 3.5).is_err());
    }

    #[test]
    fn dimensionless_known_values() {
        let f = dimensionless_features(&[2.5; 8]).unwrap();
        for v in [f.cf, f.pf, f.mf, f.wf] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!((f.kur + 2.0).abs() < 1e-12);
        let f = dimensionless_features(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert!((f.cf - 1.0).abs() < 1e-12 && (f.kur + 2.0).abs() < 1e-12);
        let f = dimensionless_features(&[0.0, 0.0, 0.0, 4.0]).unwrap();
        assert!((f.pf - 4.0).abs() < 1e-12);
        assert!((f.cf - 2.0).abs() < 1e-12);
        // mean sqrt = 0.5, squared 0.25
        assert!((f.mf - 16.0).abs() < 1e-12);
        assert!((f.wf - 2.0).abs() < 1e-12);
        assert!((f.kur - 1.0).abs() < 1e-12);
        assert!(dimensionless_features(&[0.0, 0.0]).is_err());
        assert!(dimensionless_features(&[1.0]).is_err());
    }

    #[test]
    fn sweep_single_candidate_and_constant_soh() {
        let curves: Vec<IcCurve> = (0..6)
            .map(|k| {
                let h = 1.0 + 0.1 * k as f64;
                let vals = (0..60)
                    .map(|i| h * (-((i as f64 - 30.0) / 5.0).powi(2)).exp())
                    .collect();
                curve(vals, 3.4, 0.01)
            })
            .collect();
        let soh = SohSeries::new((1..=6).collect(), (0..6).map(|k| 1.0 - 0.01 * k as f64).collect()).unwrap();
        let s = sweep_area_boundaries(&curves, &soh, &[0.07], (3.4, 4.0), CorrelationMode::Literal).unwrap();
        assert_eq!(s.candidates.len(), 1);
        assert!((s.below_peak - 0.07).abs() < 1e-15);
        assert!(s.correlation < -0.99);

        let flat = SohSeries::new((1..=6).collect(), vec![1.0; 6]).unwrap();
        let s = sweep_area_boundaries(&curves, &flat, &[0.05, 0.1], (3.4, 4.0), CorrelationMode::Literal).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.correlation, 0.0);
    }
}
