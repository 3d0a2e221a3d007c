use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the reset gate enters the candidate state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateForm {
    /// `tanh(W_h [x, r ⊙ h_prev] + b_h)`.
    #[default]
    ResetGated,
    /// `tanh(W_h [x, r, h_prev] + b_h)`: the gate vector is concatenated
    /// rather than applied. Kept for auditing against the printed form.
    Concatenated,
}

impl CandidateForm {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidateForm::ResetGated => "reset_gated",
            CandidateForm::Concatenated => "concatenated",
        }
    }
}

/// One GRU cell. Weight matrices are row-major with `hidden_size` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub form: CandidateForm,
    /// `hidden × (input + hidden)`
    pub w_update: Vec<f64>,
    /// `hidden × (input + hidden)`
    pub w_reset: Vec<f64>,
    /// `hidden × candidate_width()`
    pub w_candidate: Vec<f64>,
    pub b_update: Vec<f64>,
    pub b_reset: Vec<f64>,
    pub b_candidate: Vec<f64>,
}

/// Activations saved by [`GruCell::forward`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub update: Vec<f64>,
    pub reset: Vec<f64>,
    pub candidate: Vec<f64>,
    /// Input of the candidate affine map.
    pub candidate_input: Vec<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `W · concat(parts) + b` without materializing the concatenation.
fn affine(w: &[f64], b: &[f64], parts: &[&[f64]]) -> Vec<f64> {
    let cols: usize = parts.iter().map(|p| p.len()).sum();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| {
            let row = &w[r * cols..(r + 1) * cols];
            let mut acc = bias;
            let mut off = 0;
            for p in parts {
                acc += row[off..off + p.len()]
                    .iter()
                    .zip(p.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                off += p.len();
            }
            acc
        })
        .collect()
}

/// `dW += δ ⊗ input`, `db += δ`, and returns `Wᵀ δ`.
fn affine_backward(w: &[f64], delta: &[f64], input: &[&[f64]], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let cols: usize = input.iter().map(|p| p.len()).sum();
    let mut d_in = vec![0.0; cols];
    for (r, &d) in delta.iter().enumerate() {
        db[r] += d;
        if d == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        let drow = &mut dw[r * cols..(r + 1) * cols];
        let mut off = 0;
        for p in input {
            for (j, v) in p.iter().enumerate() {
                drow[off + j] += d * v;
            }
            off += p.len();
        }
        for (acc, wv) in d_in.iter_mut().zip(row) {
            *acc += d * wv;
        }
    }
    d_in
}

impl GruCell {
    pub fn zeros(input_size: usize, hidden_size: usize, form: CandidateForm) -> Self {
        let gate = hidden_size * (input_size + hidden_size);
        let cand = hidden_size * candidate_width(input_size, hidden_size, form);
        Self {
            input_size,
            hidden_size,
            form,
            w_update: vec![0.0; gate],
            w_reset: vec![0.0; gate],
            w_candidate: vec![0.0; cand],
            b_update: vec![0.0; hidden_size],
            b_reset: vec![0.0; hidden_size],
            b_candidate: vec![0.0; hidden_size],
        }
    }

    pub fn candidate_width(&self) -> usize {
        candidate_width(self.input_size, self.hidden_size, self.form)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden_size, self.form)
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.w_update,
            &self.w_reset,
            &self.w_candidate,
            &self.b_update,
            &self.b_reset,
            &self.b_candidate,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.w_update,
            &mut self.w_reset,
            &mut self.w_candidate,
            &mut self.b_update,
            &mut self.b_reset,
            &mut self.b_candidate,
        ]
    }

    /// (name, rows, cols) of each tensor in [`GruCell::tensors`] order.
    pub fn tensor_shapes(&self) -> [(&'static str, usize, usize); 6] {
        let h = self.hidden_size;
        let gate = self.input_size + h;
        [
            ("w_update", h, gate),
            ("w_reset", h, gate),
            ("w_candidate", h, self.candidate_width()),
            ("b_update", h, 1),
            ("b_reset", h, 1),
            ("b_candidate", h, 1),
        ]
    }

    pub fn forward(&self, x: &[f64], h_prev: &[f64]) -> Result<(Vec<f64>, CellCache)> {
        if x.len() != self.input_size {
            return Err(Error::Dimension {
                context: "GRU input",
                expected: self.input_size,
                actual: x.len(),
            });
        }
        if h_prev.len() != self.hidden_size {
            return Err(Error::Dimension {
                context: "GRU hidden state",
                expected: self.hidden_size,
                actual: h_prev.len(),
            });
        }
        let update: Vec<f64> = affine(&self.w_update, &self.b_update, &[x, h_prev])
            .into_iter()
            .map(sigmoid)
            .collect();
        let reset: Vec<f64> = affine(&self.w_reset, &self.b_reset, &[x, h_prev])
            .into_iter()
            .map(sigmoid)
            .collect();
        let mut candidate_input = Vec::with_capacity(self.candidate_width());
        candidate_input.extend_from_slice(x);
        match self.form {
            CandidateForm::ResetGated => {
                candidate_input.extend(reset.iter().zip(h_prev).map(|(r, h)| r * h));
            }
            CandidateForm::Concatenated => {
                candidate_input.extend_from_slice(&reset);
                candidate_input.extend_from_slice(h_prev);
            }
        }
        let candidate: Vec<f64> = affine(&self.w_candidate, &self.b_candidate, &[&candidate_input])
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h_new: Vec<f64> = (0..self.hidden_size)
            .map(|k| (1.0 - update[k]) * h_prev[k] + update[k] * candidate[k])
            .collect();
        if h_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GRU hidden state".into()));
        }
        Ok((
            h_new,
            CellCache {
                x: x.to_vec(),
                h_prev: h_prev.to_vec(),
                update,
                reset,
                candidate,
                candidate_input,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` given `dL/dh_new`;
    /// returns `(dL/dx, dL/dh_prev)`.
    pub fn backward(&self, cache: &CellCache, dh: &[f64], grads: &mut GruCell) -> (Vec<f64>, Vec<f64>) {
        let h = self.hidden_size;
        let n_in = self.input_size;
        let mut dh_prev: Vec<f64> = (0..h).map(|k| dh[k] * (1.0 - cache.update[k])).collect();
        let d_cand_pre: Vec<f64> = (0..h)
            .map(|k| dh[k] * cache.update[k] * (1.0 - cache.candidate[k] * cache.candidate[k]))
            .collect();
        let d_update_pre: Vec<f64> = (0..h)
            .map(|k| {
                let u = cache.update[k];
                dh[k] * (cache.candidate[k] - cache.h_prev[k]) * u * (1.0 - u)
            })
            .collect();

        let d_cand_in = affine_backward(
            &self.w_candidate,
            &d_cand_pre,
            &[&cache.candidate_input],
            &mut grads.w_candidate,
            &mut grads.b_candidate,
        );
        let mut dx = d_cand_in[..n_in].to_vec();
        let d_reset: Vec<f64> = match self.form {
            CandidateForm::ResetGated => (0..h)
                .map(|k| {
                    let g = d_cand_in[n_in + k];
                    dh_prev[k] += g * cache.reset[k];
                    g * cache.h_prev[k]
                })
                .collect(),
            CandidateForm::Concatenated => {
                for k in 0..h {
                    dh_prev[k] += d_cand_in[n_in + h + k];
                }
                d_cand_in[n_in..n_in + h].to_vec()
            }
        };
        let d_reset_pre: Vec<f64> = (0..h)
            .map(|k| d_reset[k] * cache.reset[k] * (1.0 - cache.reset[k]))
            .collect();

        let gate_in: [&[f64]; 2] = [&cache.x, &cache.h_prev];
        let dz_u = affine_backward(
            &self.w_update,
            &d_update_pre,
            &gate_in,
            &mut grads.w_update,
            &mut grads.b_update,
        );
        let dz_r = affine_backward(
            &self.w_reset,
            &d_reset_pre,
            &gate_in,
            &mut grads.w_reset,
            &mut grads.b_reset,
        );
        for j in 0..n_in {
            dx[j] += dz_u[j] + dz_r[j];
        }
        for k in 0..h {
            dh_prev[k] += dz_u[n_in + k] + dz_r[n_in + k];
        }
        (dx, dh_prev)
    }
}

fn candidate_width(input: usize, hidden: usize, form: CandidateForm) -> usize {
    match form {
        CandidateForm::ResetGated => input + hidden,
        CandidateForm::Concatenated => input + 2 * hidden,
    }
}
