use super::train::TrainingConfig;
use crate::error::{Error, Result};

/// Anything exposing its trainable values as a fixed list of flat tensors.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl Parameters for Vec<f64> {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// Piecewise-constant step decay: `lr · factor^floor(epoch / period)`, with
/// `epoch` counted from zero.
pub fn effective_learning_rate(config: &TrainingConfig, epoch: usize) -> f64 {
    let drops = epoch / config.lr_drop_period.max(1);
    config.learning_rate * config.lr_drop_factor.powi(drops.min(i32::MAX as usize) as i32)
}

pub fn adam_step<P: Parameters + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    config: &TrainingConfig,
    epoch: usize,
) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    let aligned = p.len() == g.len()
        && p.len() == state.m.len()
        && p.iter()
            .zip(&g)
            .zip(&state.m)
            .all(|((a, b), m)| a.len() == b.len() && a.len() == m.len());
    if !aligned {
        return Err(Error::invalid("parameter, gradient and optimizer shapes differ"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = effective_learning_rate(config, epoch);
    for (((pt, gt), mt), vt) in p.iter_mut().zip(&g).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..pt.len() {
            let gi = gt[i];
            mt[i] = b1 * mt[i] + (1.0 - b1) * gi;
            vt[i] = b2 * vt[i] + (1.0 - b2) * gi * gi;
            let m_hat = mt[i] / c1;
            let v_hat = vt[i] / c2;
            pt[i] -= lr * m_hat / (v_hat.sqrt() + config.adam_epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay_boundaries() {
        let cfg = TrainingConfig::default();
        assert_eq!(effective_learning_rate(&cfg, 0), 0.01);
        assert_eq!(effective_learning_rate(&cfg, 349), 0.01);
        assert!((effective_learning_rate(&cfg, 350) - 1e-4).abs() < 1e-18);
        assert!((effective_learning_rate(&cfg, 700) - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let cfg = TrainingConfig::default();
        let mut p = vec![1.5, -2.0];
        let g = vec![0.0, 0.0];
        let mut s = AdamState::new(&p);
        s.m[0] = vec![0.4, -0.2];
        s.v[0] = vec![0.1, 0.3];
        let before = p.clone();
        adam_step(&mut p, &g, &mut s, &cfg, 0).unwrap();
        // Stored moments are non-zero, so the step moves along them; only a
        // fresh state leaves parameters fixed.
        assert_ne!(p, before);
        assert!((s.m[0][0] - 0.36).abs() < 1e-15);
        assert!((s.v[0][1] - 0.2997).abs() < 1e-15);

        let mut p = before.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &cfg, 0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn scalar_quadratic_converges() {
        let cfg = TrainingConfig {
            lr_drop_period: 1000,
            ..TrainingConfig::default()
        };
        let mut p = vec![1.0];
        let mut s = AdamState::new(&p);
        for step in 0..500 {
            let g = vec![2.0 * (p[0] - 0.3)];
            adam_step(&mut p, &g, &mut s, &cfg, step).unwrap();
        }
        assert!((p[0] - 0.3).powi(2) < 1e-6, "{}", p[0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let cfg = TrainingConfig::default();
        let mut p = vec![1.0, 2.0];
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &vec![1.0], &mut s, &cfg, 0).is_err());
    }
}
