use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hiselect::{
    condition, rank_his, Conditioning, CorrelationMode, CorrelationReport, HiName, HiSeries, RankSelection,
};
use crate::icfeatures::{
    compute_ic_curve, feature_row, savitzky_golay, sweep_area_boundaries, AreaSweep, FeatureRow, IcCurve,
    DEFAULT_BIN_WIDTH, DEFAULT_HALFWIDTHS, DEFAULT_SG_ORDER, DEFAULT_SG_WINDOW,
};
use crate::ingest::{compute_soh, CycleRecord, SohDenominator, SohSeries};

/// Settings for turning cycle records into conditioned indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub bin_width: f64,
    pub sg_window: usize,
    pub sg_order: usize,
    /// Voltage range searched for the main peak; the whole curve when unset.
    pub peak_window: Option<[f64; 2]>,
    /// Candidate distances from the peak to each area boundary.
    pub halfwidths: Vec<f64>,
    pub soh_denominator: SohDenominator,
    /// `auto` picks the indicator ranked first; otherwise an indicator name.
    pub hi: String,
    pub denoise: bool,
    pub rank: RankSelection,
    pub correlation: CorrelationMode,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            bin_width: DEFAULT_BIN_WIDTH,
            sg_window: DEFAULT_SG_WINDOW,
            sg_order: DEFAULT_SG_ORDER,
            peak_window: None,
            halfwidths: DEFAULT_HALFWIDTHS.to_vec(),
            soh_denominator: SohDenominator::First,
            hi: "auto".into(),
            denoise: true,
            rank: RankSelection::default(),
            correlation: CorrelationMode::Literal,
        }
    }
}

impl ExtractionConfig {
    pub fn conditioning(&self) -> Conditioning {
        Conditioning {
            denoise: self.denoise.then_some(self.rank),
            mode: self.correlation,
        }
    }

    /// `None` means automatic selection.
    pub fn hi_choice(&self) -> Result<Option<HiName>> {
        if self.hi.eq_ignore_ascii_case("auto") {
            Ok(None)
        } else {
            self.hi.parse().map(Some)
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.bin_width > 0.0) {
            out.push(format!("bin_width {} must be positive", self.bin_width));
        }
        if self.sg_window % 2 == 0 || self.sg_window <= self.sg_order {
            out.push(format!(
                "sg_window {} must be odd and exceed sg_order {}",
                self.sg_window, self.sg_order
            ));
        }
        if let Some([lo, hi]) = self.peak_window {
            if !(lo < hi) {
                out.push(format!("peak_window [{lo}, {hi}] must be increasing"));
            }
        }
        if self.halfwidths.is_empty() || self.halfwidths.iter().any(|h| !(*h > 0.0)) {
            out.push("halfwidths must be a non-empty list of positive widths".to_string());
        }
        if let Err(e) = self.hi_choice() {
            out.push(e.to_string());
        }
        match self.rank {
            RankSelection::Fixed(0) => out.push("rank must be positive".to_string()),
            RankSelection::Energy(t) if !(t > 0.0 && t <= 1.0) => {
                out.push(format!("energy threshold {t} outside (0, 1]"))
            }
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub curves: Vec<IcCurve>,
    pub features: Vec<FeatureRow>,
    pub soh: SohSeries,
    /// Unconditioned candidates in canonical name order.
    pub candidates: Vec<HiSeries>,
    pub sweep: AreaSweep,
    pub report: CorrelationReport,
    /// The selected indicator after normalization and optional denoising.
    pub chosen: HiSeries,
}

/// Smoothed IC curve of every record.
pub fn ic_curves(records: &[CycleRecord], config: &ExtractionConfig) -> Result<Vec<IcCurve>> {
    records
        .iter()
        .map(|r| {
            let raw = compute_ic_curve(r, config.bin_width)?;
            let window = config
                .sg_window
                .min(if raw.len() % 2 == 1 { raw.len() } else { raw.len() - 1 });
            if window <= config.sg_order {
                return Err(Error::invalid(format!(
                    "cycle {}: IC curve of {} bins is too short to smooth",
                    r.cycle_index,
                    raw.len()
                )));
            }
            savitzky_golay(&raw, window, config.sg_order)
        })
        .collect()
}

/// IC curves, features, SOH, correlation ranking and the chosen indicator.
pub fn extract(records: &[CycleRecord], config: &ExtractionConfig) -> Result<Extraction> {
    let problems = config.violations();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if records.len() < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 cycles, found {}",
            records.len()
        )));
    }
    let curves = ic_curves(records, config)?;
    let caps: Vec<f64> = records.iter().map(|r| r.measured_capacity).collect();
    let mut soh = compute_soh(&caps, config.soh_denominator)?;
    soh.index = records.iter().map(|r| r.cycle_index).collect();

    let window = match config.peak_window {
        Some([lo, hi]) => (lo, hi),
        None => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let sweep = sweep_area_boundaries(&curves, &soh, &config.halfwidths, window, config.correlation)?;
    let features = curves
        .iter()
        .zip(&sweep.descriptors)
        .map(|(c, d)| feature_row(c, d))
        .collect::<Result<Vec<_>>>()?;
    let candidates: Vec<HiSeries> = HiName::ALL
        .iter()
        .map(|&name| HiSeries::new(name, features.iter().map(|f| f.get(name)).collect()))
        .collect();
    let report = rank_his(&candidates, &soh, &config.conditioning())?;
    let pick = match config.hi_choice()? {
        Some(name) => name,
        None => report.ranked_names()[0],
    };
    let raw = candidates
        .iter()
        .find(|c| c.name == pick)
        .expect("every name has a candidate");
    let chosen = condition(raw, config.conditioning().denoise)?;
    Ok(Extraction {
        curves,
        features,
        soh,
        candidates,
        sweep,
        report,
        chosen,
    })
}

/// Normalized raw and denoised variant of each candidate, for ablation.
pub fn ablation_variants(candidates: &[HiSeries], rank: RankSelection) -> Result<Vec<HiSeries>> {
    let mut out = Vec::with_capacity(2 * candidates.len());
    for c in candidates {
        out.push(condition(c, Some(rank))?);
        out.push(condition(c, None)?);
    }
    Ok(out)
}
