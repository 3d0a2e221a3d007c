use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Percent; `None` when a true value is zero.
    pub mape: Option<f64>,
}

pub fn evaluate_metrics(truth: &[f64], predicted: &[f64]) -> Result<Metrics> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("metrics need at least one point"));
    }
    let n = truth.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut rel = 0.0;
    let mut mape_defined = true;
    for (t, p) in truth.iter().zip(predicted) {
        let e = t - p;
        sq += e * e;
        abs += e.abs();
        if *t == 0.0 {
            mape_defined = false;
        } else {
            rel += (e / t).abs();
        }
    }
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        mape: mape_defined.then_some(100.0 * rel / n),
    })
}

/// Element-wise mean of several metric sets; MAPE only when every set has it.
pub fn mean_metrics(all: &[Metrics]) -> Option<Metrics> {
    if all.is_empty() {
        return None;
    }
    let n = all.len() as f64;
    let mape = all
        .iter()
        .map(|m| m.mape)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / n);
    Some(Metrics {
        rmse: all.iter().map(|m| m.rmse).sum::<f64>() / n,
        mae: all.iter().map(|m| m.mae).sum::<f64>() / n,
        mape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        let m = evaluate_metrics(&[1.0, 1.0], &[0.0, 2.0]).unwrap();
        assert_eq!((m.rmse, m.mae, m.mape), (1.0, 1.0, Some(100.0)));
        assert_eq!(evaluate_metrics(&[2.0], &[1.0]).unwrap().mape, Some(50.0));
        let z = evaluate_metrics(&[0.3, 0.9], &[0.3, 0.9]).unwrap();
        assert_eq!((z.rmse, z.mae, z.mape), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn zero_truth_drops_only_mape() {
        let m = evaluate_metrics(&[0.0, 1.0], &[0.5, 1.0]).unwrap();
        assert_eq!(m.mape, None);
        assert!((m.rmse - (0.125f64).sqrt()).abs() < 1e-15);
        assert_eq!(m.mae, 0.25);
        assert!(evaluate_metrics(&[], &[]).is_err());
        assert!(evaluate_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }
}
