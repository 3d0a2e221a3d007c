//! Health-indicator conditioning and selection: min-max scaling, Hankel-SVD
//! denoising and correlation ranking against SOH.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SohSeries;

/// Indicator names; declaration order is the ranking tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HiName {
    #[serde(rename = "MF")]
    Mf,
    #[serde(rename = "PF")]
    Pf,
    #[serde(rename = "Kur")]
    Kur,
    #[serde(rename = "CF")]
    Cf,
    #[serde(rename = "WF")]
    Wf,
    Area,
    Peak,
}

impl HiName {
    pub const ALL: [HiName; 7] = [
        HiName::Mf,
        HiName::Pf,
        HiName::Kur,
        HiName::Cf,
        HiName::Wf,
        HiName::Area,
        HiName::Peak,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HiName::Mf => "MF",
            HiName::Pf => "PF",
            HiName::Kur => "Kur",
            HiName::Cf => "CF",
            HiName::Wf => "WF",
            HiName::Area => "Area",
            HiName::Peak => "Peak",
        }
    }
}

impl fmt::Display for HiName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HiName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HiName::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown health indicator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiSeries {
    pub name: HiName,
    pub values: Vec<f64>,
    pub normalized: bool,
    pub denoised: bool,
}

impl HiSeries {
    pub fn new(name: HiName, values: Vec<f64>) -> Self {
        Self {
            name,
            values,
            normalized: false,
            denoised: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `MF`, `MF-SVD`, ... as used in report tables.
    pub fn label(&self) -> String {
        if self.denoised {
            format!("{}-SVD", self.name)
        } else {
            self.name.to_string()
        }
    }
}

/// Scales to [0, 1]; a constant series maps to 0.5 everywhere.
pub fn min_max_normalize(series: &HiSeries) -> Result<HiSeries> {
    if series.is_empty() {
        return Err(Error::invalid("cannot normalize an empty series"));
    }
    let lo = series.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let values = if span > 0.0 {
        series.values.iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.5; series.len()]
    };
    Ok(HiSeries {
        values,
        normalized: true,
        ..series.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankSelection {
    /// Keep exactly this many singular triplets (capped at the matrix rank).
    Fixed(usize),
    /// Keep the fewest triplets whose squared singular values reach this
    /// fraction of the total.
    Energy(f64),
}

impl Default for RankSelection {
    fn default() -> Self {
        RankSelection::Energy(0.95)
    }
}

/// Embeds the series in a Hankel matrix with `floor(n/2)+1` rows, truncates
/// its singular spectrum and reconstructs by anti-diagonal averaging.
pub fn hankel_svd_denoise(series: &HiSeries, rank: RankSelection) -> Result<HiSeries> {
    let y = &series.values;
    let n = y.len();
    if n < 4 {
        return Err(Error::invalid(format!(
            "Hankel denoising needs at least 4 points, got {n}"
        )));
    }
    let rows = n / 2 + 1;
    let cols = n - rows + 1;
    let hankel = DMatrix::from_fn(rows, cols, |i, j| y[i + j]);
    // Right singular vectors and σ² from the Gram matrix; rank-k approximation is H V_k V_kᵀ.
    let eig = SymmetricEigen::new(hankel.transpose() * &hankel);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let energies: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c].max(0.0)).collect();
    let full = cols;
    let keep = match rank {
        RankSelection::Fixed(k) => {
            if k == 0 {
                return Err(Error::invalid("rank must be positive"));
            }
            k.min(full)
        }
        RankSelection::Energy(t) => {
            if !(t > 0.0 && t < 1.0 + 1e-12) {
                return Err(Error::invalid(format!("energy threshold {t} outside (0, 1]")));
            }
            let total: f64 = energies.iter().sum();
            let mut acc = 0.0;
            let mut k = full;
            for (i, e) in energies.iter().enumerate() {
                acc += e;
                if acc >= t * total {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };
    let basis = DMatrix::from_fn(cols, keep, |i, j| eig.eigenvectors[(i, order[j])]);
    let approx = &hankel * &basis * basis.transpose();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for i in 0..rows {
        for j in 0..cols {
            sums[i + j] += approx[(i, j)];
            counts[i + j] += 1;
        }
    }
    Ok(HiSeries {
        values: sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect(),
        denoised: true,
        ..series.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMode {
    /// Centered-product coefficient on the raw values.
    #[default]
    Literal,
    /// The same coefficient on average ranks.
    Ranked,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub coefficient: f64,
    /// Either input was constant; `coefficient` is then 0.
    pub degenerate: bool,
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn centered_product(x: &[f64], y: &[f64]) -> Correlation {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Correlation {
            coefficient: 0.0,
            degenerate: true,
        };
    }
    Correlation {
        coefficient: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

pub fn spearman(x: &[f64], y: &[f64], mode: CorrelationMode) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("correlation needs at least two points"));
    }
    Ok(match mode {
        CorrelationMode::Literal => centered_product(x, y),
        CorrelationMode::Ranked => centered_product(&average_ranks(x), &average_ranks(y)),
    })
}

/// How candidates are conditioned before correlating with SOH.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    /// `None` skips denoising.
    pub denoise: Option<RankSelection>,
    pub mode: CorrelationMode,
}

impl Default for Conditioning {
    fn default() -> Self {
        Self {
            denoise: Some(RankSelection::default()),
            mode: CorrelationMode::Literal,
        }
    }
}

/// Normalizes and optionally denoises one series.
pub fn condition(series: &HiSeries, denoise: Option<RankSelection>) -> Result<HiSeries> {
    let s = min_max_normalize(series)?;
    match denoise {
        Some(r) => hankel_svd_denoise(&s, r),
        None => Ok(s),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEntry {
    pub name: HiName,
    pub coefficient: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    /// In candidate order.
    pub entries: Vec<CorrelationEntry>,
    /// Candidate positions sorted by |coefficient| descending.
    pub ranking: Vec<usize>,
}

impl CorrelationReport {
    pub fn ranked_names(&self) -> Vec<HiName> {
        self.ranking.iter().map(|&i| self.entries[i].name).collect()
    }
}

pub fn rank_his(candidates: &[HiSeries], soh: &SohSeries, conditioning: &Conditioning) -> Result<CorrelationReport> {
    let mut entries = Vec::with_capacity(candidates.len());
    for c in candidates {
        if c.len() != soh.len() {
            return Err(Error::LengthMismatch {
                left: c.len(),
                right: soh.len(),
            });
        }
        let prepared = condition(c, conditioning.denoise)?;
        let corr = spearman(&prepared.values, &soh.values, conditioning.mode)?;
        entries.push(CorrelationEntry {
            name: c.name,
            coefficient: corr.coefficient,
            degenerate: corr.degenerate,
        });
    }
    let mut ranking: Vec<usize> = (0..entries.len()).collect();
    ranking.sort_by(|&a, &b| {
        let (ea, eb) = (&entries[a], &entries[b]);
        eb.coefficient
            .abs()
            .total_cmp(&ea.coefficient.abs())
            .then(ea.name.cmp(&eb.name))
            .then(a.cmp(&b))
    });
    Ok(CorrelationReport { entries, ranking })
}

/// The `top_k` candidates in ranking order.
pub fn select_hi(report: &CorrelationReport, candidates: &[HiSeries], top_k: usize) -> Result<Vec<HiSeries>> {
    if report.entries.len() != candidates.len() {
        return Err(Error::LengthMismatch {
            left: report.entries.len(),
            right: candidates.len(),
        });
    }
    if top_k == 0 || top_k > candidates.len() {
        return Err(Error::invalid(format!(
            "top_k {top_k} outside 1..={}",
            candidates.len()
        )));
    }
    Ok(report
        .ranking
        .iter()
        .take(top_k)
        .map(|&i| candidates[i].clone())
        .collect())
}
