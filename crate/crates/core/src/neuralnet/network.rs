use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::adam::Parameters;
use super::gru::{CandidateForm, CellCache, GruCell};
use crate::error::{Error, Result};

/// One recurrent layer: a forward GRU and, when bidirectional, a backward
/// GRU over the flipped sequence. Outputs are concatenated per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub forward_units: usize,
    #[serde(default)]
    pub backward_units: Option<usize>,
    #[serde(default)]
    pub forward_dropout: f64,
    #[serde(default)]
    pub backward_dropout: f64,
}

impl LayerSpec {
    pub fn bidirectional(forward_units: usize, backward_units: usize, dropouts: [f64; 2]) -> Self {
        Self {
            forward_units,
            backward_units: Some(backward_units),
            forward_dropout: dropouts[0],
            backward_dropout: dropouts[1],
        }
    }

    pub fn output_width(&self) -> usize {
        self.forward_units + self.backward_units.unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub window_length: usize,
    #[serde(default = "one")]
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub candidate_form: CandidateForm,
}

fn one() -> usize {
    1
}

pub const MAX_DROPOUT: f64 = 0.5;

impl NetworkSpec {
    /// Two bidirectional modules in series; `units` and `dropouts` are ordered
    /// forward/backward of module 1, then forward/backward of module 2.
    pub fn dual_bigru(window_length: usize, units: [usize; 4], dropouts: [f64; 4]) -> Self {
        Self {
            window_length,
            input_size: 1,
            layers: vec![
                LayerSpec::bidirectional(units[0], units[1], [dropouts[0], dropouts[1]]),
                LayerSpec::bidirectional(units[2], units[3], [dropouts[2], dropouts[3]]),
            ],
            candidate_form: CandidateForm::ResetGated,
        }
    }

    /// The fixed reference network: 128 units and dropout 0.02 everywhere.
    pub fn reference(window_length: usize) -> Self {
        Self::dual_bigru(window_length, [128; 4], [0.02; 4])
    }

    pub fn with_candidate_form(mut self, form: CandidateForm) -> Self {
        self.candidate_form = form;
        self
    }

    /// Width of the final time step's output, i.e. the dense head's input.
    pub fn dense_width(&self) -> usize {
        self.layers.last().map_or(0, LayerSpec::output_width)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.window_length == 0 {
            out.push("window_length must be positive".to_string());
        }
        if self.input_size == 0 {
            out.push("input_size must be positive".to_string());
        }
        if self.layers.is_empty() {
            out.push("at least one recurrent layer is required".to_string());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.forward_units == 0 {
                out.push(format!("layer {}: forward_units must be positive", i + 1));
            }
            if l.backward_units == Some(0) {
                out.push(format!("layer {}: backward_units must be positive", i + 1));
            }
            for (name, d) in [
                ("forward_dropout", l.forward_dropout),
                ("backward_dropout", l.backward_dropout),
            ] {
                if !(0.0..=MAX_DROPOUT).contains(&d) {
                    out.push(format!("layer {}: {name} {d} outside [0, {MAX_DROPOUT}]", i + 1));
                }
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
}

/// Dropout is drawn from the generator only in `Train` mode.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

pub fn flip<T: Clone>(seq: &[T]) -> Vec<T> {
    seq.iter().rev().cloned().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLayer {
    pub forward: GruCell,
    pub backward: Option<GruCell>,
}

#[derive(Debug, Clone)]
struct DirectionCache {
    /// In the cell's own processing order (reversed for the backward GRU).
    cells: Vec<CellCache>,
    /// Inverted-dropout multipliers in sequence order.
    mask: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    forward: DirectionCache,
    backward: Option<DirectionCache>,
}

/// Intermediates of one [`Network::forward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    features: Vec<f64>,
}

impl ForwardCache {
    /// Final time step's concatenated output fed to the dense head.
    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

fn run_direction(cell: &GruCell, seq: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<CellCache>)> {
    let mut h = vec![0.0; cell.hidden_size];
    let mut outs = Vec::with_capacity(seq.len());
    let mut caches = Vec::with_capacity(seq.len());
    for x in seq {
        let (next, cache) = cell.forward(x, &h)?;
        outs.push(next.clone());
        caches.push(cache);
        h = next;
    }
    Ok((outs, caches))
}

fn apply_dropout(outs: &mut [Vec<f64>], rate: f64, mode: &mut Mode) -> Option<Vec<Vec<f64>>> {
    let rng = match mode {
        Mode::Train(rng) if rate > 0.0 => rng,
        _ => return None,
    };
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<Vec<f64>> = outs
        .iter()
        .map(|o| {
            o.iter()
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect()
        })
        .collect();
    for (o, m) in outs.iter_mut().zip(&mask) {
        for (v, k) in o.iter_mut().zip(m) {
            *v *= k;
        }
    }
    Some(mask)
}

/// BPTT through one direction. `d_out` is in the cell's processing order.
fn direction_backward(cell: &GruCell, caches: &[CellCache], d_out: &[Vec<f64>], grads: &mut GruCell) -> Vec<Vec<f64>> {
    let mut carry = vec![0.0; cell.hidden_size];
    let mut dxs = vec![Vec::new(); caches.len()];
    for s in (0..caches.len()).rev() {
        let dh: Vec<f64> = d_out[s].iter().zip(&carry).map(|(a, b)| a + b).collect();
        let (dx, dh_prev) = cell.backward(&caches[s], &dh, grads);
        dxs[s] = dx;
        carry = dh_prev;
    }
    dxs
}

fn masked(d: &[f64], mask: Option<&Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => d.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => d.to_vec(),
    }
}

impl BiLayer {
    pub fn output_width(&self) -> usize {
        self.forward.hidden_size + self.backward.as_ref().map_or(0, |c| c.hidden_size)
    }

    /// Runs the forward GRU in order and the backward GRU over the flipped
    /// sequence, flips the latter back and concatenates per time step.
    pub fn forward(&self, spec: &LayerSpec, seq: &[Vec<f64>], mode: &mut Mode) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward_cached(spec, seq, mode)?.0)
    }

    fn forward_cached(
        &self,
        spec: &LayerSpec,
        seq: &[Vec<f64>],
        mode: &mut Mode,
    ) -> Result<(Vec<Vec<f64>>, LayerCache)> {
        let (mut fwd, fwd_cells) = run_direction(&self.forward, seq)?;
        let fwd_mask = apply_dropout(&mut fwd, spec.forward_dropout, mode);
        let forward = DirectionCache {
            cells: fwd_cells,
            mask: fwd_mask,
        };
        let Some(cell) = &self.backward else {
            return Ok((
                fwd,
                LayerCache {
                    forward,
                    backward: None,
                },
            ));
        };
        let (rev_out, bwd_cells) = run_direction(cell, &flip(seq))?;
        let mut bwd = flip(&rev_out);
        let bwd_mask = apply_dropout(&mut bwd, spec.backward_dropout, mode);
        let out = fwd
            .into_iter()
            .zip(bwd)
            .map(|(mut f, b)| {
                f.extend(b);
                f
            })
            .collect();
        Ok((
            out,
            LayerCache {
                forward,
                backward: Some(DirectionCache {
                    cells: bwd_cells,
                    mask: bwd_mask,
                }),
            },
        ))
    }

    /// Accumulates gradients and returns `dL/dinput` per time step.
    fn backward(&self, cache: &LayerCache, d_out: &[Vec<f64>], grads: &mut BiLayer) -> Vec<Vec<f64>> {
        let hf = self.forward.hidden_size;
        let d_fwd: Vec<Vec<f64>> = d_out
            .iter()
            .enumerate()
            .map(|(t, d)| masked(&d[..hf], cache.forward.mask.as_ref().map(|m| &m[t])))
            .collect();
        let mut dx = direction_backward(&self.forward, &cache.forward.cells, &d_fwd, &mut grads.forward);
        if let (Some(cell), Some(bc), Some(gb)) = (&self.backward, &cache.backward, grads.backward.as_mut()) {
            let d_bwd: Vec<Vec<f64>> = d_out
                .iter()
                .enumerate()
                .map(|(t, d)| masked(&d[hf..], bc.mask.as_ref().map(|m| &m[t])))
                .collect();
            let dx_rev = direction_backward(cell, &bc.cells, &flip(&d_bwd), gb);
            for (acc, d) in dx.iter_mut().zip(flip(&dx_rev)) {
                for (a, b) in acc.iter_mut().zip(d) {
                    *a += b;
                }
            }
        }
        dx
    }
}

/// Stacked recurrent layers read out at the last time step by a dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<BiLayer>,
    pub dense_weights: Vec<f64>,
    pub dense_bias: f64,
    /// Fixed shift subtracted from every input value; not trained.
    pub input_offset: f64,
}

fn xavier(values: &mut [f64], rows: usize, cols: usize, rng: &mut dyn RngCore) {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    for v in values {
        *v = rng.random_range(-limit..limit);
    }
}

impl Network {
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut width = spec.input_size;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for l in &spec.layers {
            layers.push(BiLayer {
                forward: GruCell::zeros(width, l.forward_units, spec.candidate_form),
                backward: l.backward_units.map(|u| GruCell::zeros(width, u, spec.candidate_form)),
            });
            width = l.output_width();
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
            dense_weights: vec![0.0; width],
            dense_bias: 0.0,
            input_offset: 0.0,
        })
    }

    /// Weight matrices uniform in ±sqrt(6 / (fan_in + fan_out)); biases zero.
    pub fn initialize(spec: &NetworkSpec, rng: &mut dyn RngCore) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for layer in &mut net.layers {
            for cell in std::iter::once(&mut layer.forward).chain(layer.backward.as_mut()) {
                let shapes = cell.tensor_shapes();
                for (t, (name, rows, cols)) in cell.tensors_mut().into_iter().zip(shapes) {
                    if name.starts_with("w_") {
                        xavier(t, rows, cols, rng);
                    }
                }
            }
        }
        let width = net.dense_weights.len();
        xavier(&mut net.dense_weights, 1, width, rng);
        Ok(net)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        let expected = self.spec.window_length * self.spec.input_size;
        if window.len() != expected {
            return Err(Error::Dimension {
                context: "network input window",
                expected,
                actual: window.len(),
            });
        }
        Ok(())
    }

    /// `window` holds `window_length × input_size` values, time-major.
    pub fn forward(&self, window: &[f64], mut mode: Mode) -> Result<(f64, ForwardCache)> {
        self.check_window(window)?;
        let mut seq: Vec<Vec<f64>> = window
            .chunks(self.spec.input_size)
            .map(|x| x.iter().map(|v| v - self.input_offset).collect())
            .collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (layer, ls) in self.layers.iter().zip(&self.spec.layers) {
            let (out, cache) = layer.forward_cached(ls, &seq, &mut mode)?;
            caches.push(cache);
            seq = out;
        }
        let features = seq.pop().unwrap_or_default();
        let y = self.dense_bias
            + self
                .dense_weights
                .iter()
                .zip(&features)
                .map(|(w, f)| w * f)
                .sum::<f64>();
        if !y.is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok((
            y,
            ForwardCache {
                layers: caches,
                features,
            },
        ))
    }

    pub fn predict_one(&self, window: &[f64]) -> Result<f64> {
        Ok(self.forward(window, Mode::Eval)?.0)
    }

    /// Accumulates `dL/dθ` into `grads` given `dL/dprediction`.
    pub fn backward(&self, cache: &ForwardCache, d_pred: f64, grads: &mut Network) -> Result<()> {
        let steps = self.spec.window_length;
        let consistent = cache.layers.len() == self.layers.len()
            && grads.layers.len() == self.layers.len()
            && cache.features.len() == self.dense_weights.len()
            && cache
                .layers
                .iter()
                .all(|l| l.forward.cells.len() == steps && l.backward.as_ref().is_none_or(|b| b.cells.len() == steps));
        if !consistent {
            return Err(Error::invalid("forward cache does not match the network"));
        }
        for (g, f) in grads.dense_weights.iter_mut().zip(&cache.features) {
            *g += d_pred * f;
        }
        grads.dense_bias += d_pred;
        let width = self.dense_weights.len();
        let mut d_seq = vec![vec![0.0; width]; steps];
        d_seq[steps - 1] = self.dense_weights.iter().map(|w| d_pred * w).collect();
        for ((layer, lc), g) in self.layers.iter().zip(&cache.layers).zip(grads.layers.iter_mut()).rev() {
            d_seq = layer.backward(lc, &d_seq, g);
        }
        Ok(())
    }
}

impl Parameters for Network {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.forward.tensors());
            if let Some(b) = &layer.backward {
                out.extend(b.tensors());
            }
        }
        out.push(&self.dense_weights);
        out.push(std::slice::from_ref(&self.dense_bias));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.forward.tensors_mut());
            if let Some(b) = &mut layer.backward {
                out.extend(b.tensors_mut());
            }
        }
        out.push(&mut self.dense_weights);
        out.push(std::slice::from_mut(&mut self.dense_bias));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from;

    fn tiny(seed: u64, units: [usize; 4], window: usize) -> Network {
        let spec = NetworkSpec::dual_bigru(window, units, [0.0; 4]);
        let mut rng = rng_from(seed);
        let mut net = Network::initialize(&spec, &mut rng).unwrap();
        net.dense_bias = 0.3;
        for t in net.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.2..0.2);
            }
        }
        net
    }

    #[test]
    fn flip_is_an_involution() {
        assert_eq!(flip(&['a', 'b', 'c']), vec!['c', 'b', 'a']);
        assert_eq!(flip(&[7]), vec![7]);
        let s = vec![1, 2, 3, 4];
        assert_eq!(flip(&flip(&s)), s);
    }

    #[test]
    fn spec_violations_are_all_reported() {
        let mut spec = NetworkSpec::dual_bigru(0, [0, 4, 4, 4], [0.6, 0.0, -0.1, 0.0]);
        spec.input_size = 1;
        let v = spec.violations();
        assert_eq!(v.len(), 4, "{v:?}");
        assert!(NetworkSpec::reference(5).validate().is_ok());
        assert_eq!(NetworkSpec::reference(5).dense_width(), 256);
    }

    #[test]
    fn zero_network_predicts_dense_bias() {
        let spec = NetworkSpec::dual_bigru(3, [2, 2, 2, 2], [0.0; 4]);
        let mut net = Network::zeros(&spec).unwrap();
        net.dense_bias = 0.75;
        net.dense_weights = vec![1.0, -2.0, 0.5, 3.0];
        assert_eq!(net.predict_one(&[0.1, 0.9, -4.0]).unwrap(), 0.75);
        let mut net = tiny(3, [2, 2, 2, 2], 3);
        net.dense_weights.fill(0.0);
        net.dense_bias = -1.25;
        assert_eq!(net.predict_one(&[0.3, 0.2, 0.1]).unwrap(), -1.25);
    }

    #[test]
    fn palindrome_with_shared_weights_is_time_symmetric() {
        let mut rng = rng_from(21);
        let mut cell = GruCell::zeros(1, 3, CandidateForm::ResetGated);
        for t in cell.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let layer = BiLayer {
            forward: cell.clone(),
            backward: Some(cell),
        };
        let spec = LayerSpec::bidirectional(3, 3, [0.0, 0.0]);
        let seq: Vec<Vec<f64>> = [0.2, -0.5, 0.9, -0.5, 0.2].iter().map(|v| vec![*v]).collect();
        let out = layer.forward(&spec, &seq, &mut Mode::Eval).unwrap();
        let n = out.len();
        for t in 0..n {
            let mirror = &out[n - 1 - t];
            assert_eq!(&out[t][..3], &mirror[3..]);
            assert_eq!(&out[t][3..], &mirror[..3]);
        }
    }

    #[test]
    fn eval_mode_ignores_dropout_and_rng() {
        let spec = NetworkSpec::dual_bigru(4, [3, 3, 3, 3], [0.4; 4]);
        let net = Network::initialize(&spec, &mut rng_from(2)).unwrap();
        let w = [0.1, 0.4, 0.2, 0.8];
        let a = net.predict_one(&w).unwrap();
        let b = net.predict_one(&w).unwrap();
        assert_eq!(a, b);
        let mut r1 = rng_from(1);
        let mut r2 = rng_from(1);
        let t1 = net.forward(&w, Mode::Train(&mut r1)).unwrap().0;
        let t2 = net.forward(&w, Mode::Train(&mut r2)).unwrap().0;
        assert_eq!(t1, t2);
    }

    #[test]
    fn hidden_states_stay_bounded() {
        let net = tiny(8, [4, 4, 4, 4], 6);
        let seq: Vec<Vec<f64>> = [5.0, -3.0, 8.0, 0.0, 1.0, -9.0].iter().map(|v| vec![*v]).collect();
        let out = net.layers[0]
            .forward(&net.spec.layers[0], &seq, &mut Mode::Eval)
            .unwrap();
        assert!(out.iter().flatten().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn wrong_window_length_is_rejected() {
        let net = tiny(1, [2, 2, 2, 2], 3);
        assert!(matches!(net.predict_one(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let a = tiny(1, [2, 2, 2, 2], 3);
        let b = tiny(1, [2, 2, 2, 2], 4);
        let (_, cache) = b.forward(&[0.1, 0.2, 0.3, 0.4], Mode::Eval).unwrap();
        let mut g = a.zeros_like();
        assert!(a.backward(&cache, 1.0, &mut g).is_err());
    }
}
