use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState, Parameters};
use super::network::{Mode, Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_from};

/// Optimizer and schedule settings. Defaults are the reference settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub lr_drop_period: usize,
    pub lr_drop_factor: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            learning_rate: 0.01,
            lr_drop_period: 350,
            lr_drop_factor: 0.01,
            batch_size: 16,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainingConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_epochs == 0 {
            out.push("max_epochs must be positive".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.lr_drop_period == 0 {
            out.push("lr_drop_period must be positive".to_string());
        } else if self.lr_drop_period > self.max_epochs {
            out.push(format!(
                "lr_drop_period {} exceeds max_epochs {}",
                self.lr_drop_period, self.max_epochs
            ));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor <= 1.0) {
            out.push(format!("lr_drop_factor {} outside (0, 1]", self.lr_drop_factor));
        }
        if self.batch_size == 0 {
            out.push("batch_size must be positive".to_string());
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                out.push(format!("{name} {b} outside [0, 1)"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            out.push(format!("adam_epsilon {} must be positive", self.adam_epsilon));
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

/// Sliding windows of an indicator series with one target per window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceBatch {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// Series index of each window's last element.
    pub end_indices: Vec<usize>,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn extend(&mut self, other: SequenceBatch) {
        self.inputs.extend(other.inputs);
        self.targets.extend(other.targets);
        self.end_indices.extend(other.end_indices);
    }
}

pub fn make_windows(hi: &[f64], soh: &[f64], window: usize) -> Result<SequenceBatch> {
    make_windows_in(hi, soh, window, 0..hi.len())
}

/// Stride-1 windows lying entirely inside `region`, each targeting the SOH at
/// its last index.
pub fn make_windows_in(hi: &[f64], soh: &[f64], window: usize, region: Range<usize>) -> Result<SequenceBatch> {
    if hi.len() != soh.len() {
        return Err(Error::LengthMismatch {
            left: hi.len(),
            right: soh.len(),
        });
    }
    if window == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    if region.end > hi.len() || region.start > region.end {
        return Err(Error::invalid(format!(
            "region {region:?} outside a series of length {}",
            hi.len()
        )));
    }
    if region.len() < window {
        return Err(Error::invalid(format!(
            "region of {} points is shorter than the window {window}",
            region.len()
        )));
    }
    let mut batch = SequenceBatch::default();
    for end in region.start + window - 1..region.end {
        batch.inputs.push(hi[end + 1 - window..=end].to_vec());
        batch.targets.push(soh[end]);
        batch.end_indices.push(end);
    }
    Ok(batch)
}

/// Mean squared error and its gradient with respect to each prediction.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::invalid("empty prediction set"));
    }
    let n = predictions.len() as f64;
    let loss = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    Ok((loss, grad))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    /// Mean squared error over each epoch's mini-batches.
    pub loss_history: Vec<f64>,
}

/// Seeded Xavier initialization, input offset at the mean input, dense bias at
/// the mean target, then shuffled mini-batch Adam over `config.max_epochs` epochs.
pub fn train(spec: &NetworkSpec, config: &TrainingConfig, data: &SequenceBatch) -> Result<TrainOutcome> {
    let mut problems = spec.violations();
    problems.extend(config.violations());
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if data.is_empty() {
        return Err(Error::invalid("no training windows"));
    }
    if data.inputs.len() != data.targets.len() {
        return Err(Error::LengthMismatch {
            left: data.inputs.len(),
            right: data.targets.len(),
        });
    }
    let mut init_rng = rng_from(derive_seed(config.seed, "neuralnet.init", 0));
    let mut shuffle_rng = rng_from(derive_seed(config.seed, "neuralnet.shuffle", 0));
    let mut dropout_rng = rng_from(derive_seed(config.seed, "neuralnet.dropout", 0));

    let mut net = Network::initialize(spec, &mut init_rng)?;
    net.dense_bias = data.targets.iter().sum::<f64>() / data.len() as f64;
    let values = data.inputs.iter().flatten();
    net.input_offset = values.clone().sum::<f64>() / values.count().max(1) as f64;
    let mut state = AdamState::new(&net);
    let mut grads = net.zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.max_epochs);

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum_sq = 0.0;
        for batch in order.chunks(config.batch_size) {
            for t in grads.tensors_mut() {
                t.fill(0.0);
            }
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let (pred, cache) = match net.forward(&data.inputs[i], Mode::Train(&mut dropout_rng)) {
                    Ok(v) => v,
                    Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, loss: f64::NAN }),
                    Err(e) => return Err(e),
                };
                let err = pred - data.targets[i];
                sum_sq += err * err;
                net.backward(&cache, scale * err, &mut grads)?;
            }
            adam_step(&mut net, &grads, &mut state, config, epoch)?;
        }
        let loss = sum_sq / data.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        history.push(loss);
    }
    Ok(TrainOutcome {
        network: net,
        loss_history: history,
    })
}

/// Dropout-free predictions, one per window.
pub fn predict(network: &Network, windows: &[Vec<f64>]) -> Result<Vec<f64>> {
    windows.iter().map(|w| network.predict_one(w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts_and_targets() {
        let hi: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let soh: Vec<f64> = (0..10).map(|i| 100.0 + i as f64).collect();
        let b = make_windows(&hi, &soh, 5).unwrap();
        assert_eq!(b.len(), 6);
        assert_eq!(b.inputs[0], vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(b.targets, vec![104.0, 105.0, 106.0, 107.0, 108.0, 109.0]);
        assert_eq!(b.end_indices, vec![4, 5, 6, 7, 8, 9]);
        assert_eq!(make_windows(&hi, &soh, 1).unwrap().len(), 10);
        let r = make_windows_in(&hi, &soh, 3, 4..9).unwrap();
        assert_eq!(r.end_indices, vec![6, 7, 8]);
        assert!(r.inputs.iter().flatten().all(|&v| (4.0..9.0).contains(&v)));
        assert!(make_windows(&hi[..3], &soh[..3], 5).is_err());
        assert!(make_windows(&hi, &soh[..9], 2).is_err());
    }

    #[test]
    fn mse_values_and_gradient() {
        let (l, g) = mse_loss(&[1.0, 1.0], &[0.0, 2.0]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![1.0, -1.0]);
        assert_eq!(mse_loss(&[0.5, 0.2], &[0.5, 0.2]).unwrap().0, 0.0);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());

        let p = [0.3, -1.2, 0.8];
        let t = [0.1, 0.4, 0.9];
        let (_, g) = mse_loss(&p, &t).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut a = p;
            a[i] += h;
            let mut b = p;
            b[i] -= h;
            let fd = (mse_loss(&a, &t).unwrap().0 - mse_loss(&b, &t).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn config_violations_are_listed() {
        let cfg = TrainingConfig {
            max_epochs: 10,
            lr_drop_period: 20,
            learning_rate: -1.0,
            batch_size: 0,
            ..TrainingConfig::default()
        };
        assert_eq!(cfg.violations().len(), 3);
        assert!(TrainingConfig::default().validate().is_ok());
    }
}
