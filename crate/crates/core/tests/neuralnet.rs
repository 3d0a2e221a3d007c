use rand::Rng;
use soh_core::neuralnet::*;
use soh_core::seeding::rng_from;

fn random_net(seed: u64, units: [usize; 4], window: usize, dropout: f64, form: CandidateForm) -> Network {
    let spec = NetworkSpec::dual_bigru(window, units, [dropout; 4]).with_candidate_form(form);
    let mut rng = rng_from(seed);
    let mut net = Network::initialize(&spec, &mut rng).unwrap();
    for t in net.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    net
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Scalar re-implementation of one cell step, reset-gated form.
fn oracle_cell(c: &GruCell, x: &[f64], h: &[f64]) -> Vec<f64> {
    let (ni, nh) = (c.input_size, c.hidden_size);
    let gw = ni + nh;
    let mut z = x.to_vec();
    z.extend_from_slice(h);
    let mut u = vec![0.0; nh];
    let mut r = vec![0.0; nh];
    for k in 0..nh {
        let mut au = c.b_update[k];
        let mut ar = c.b_reset[k];
        for j in 0..gw {
            au += c.w_update[k * gw + j] * z[j];
            ar += c.w_reset[k * gw + j] * z[j];
        }
        u[k] = sig(au);
        r[k] = sig(ar);
    }
    let mut out = vec![0.0; nh];
    for k in 0..nh {
        let mut a = c.b_candidate[k];
        for j in 0..ni {
            a += c.w_candidate[k * gw + j] * x[j];
        }
        for j in 0..nh {
            a += c.w_candidate[k * gw + ni + j] * r[j] * h[j];
        }
        out[k] = (1.0 - u[k]) * h[k] + u[k] * a.tanh();
    }
    out
}

fn oracle_forward(net: &Network, window: &[f64]) -> f64 {
    let mut seq: Vec<Vec<f64>> = window.iter().map(|v| vec![*v]).collect();
    for layer in &net.layers {
        let t_len = seq.len();
        let mut fwd = Vec::new();
        let mut h = vec![0.0; layer.forward.hidden_size];
        for x in &seq {
            h = oracle_cell(&layer.forward, x, &h);
            fwd.push(h.clone());
        }
        let back = layer.backward.as_ref().unwrap();
        let mut bwd = vec![Vec::new(); t_len];
        let mut h = vec![0.0; back.hidden_size];
        for t in (0..t_len).rev() {
            h = oracle_cell(back, &seq[t], &h);
            bwd[t] = h.clone();
        }
        seq = (0..t_len)
            .map(|t| fwd[t].iter().chain(&bwd[t]).copied().collect())
            .collect();
    }
    let last = seq.last().unwrap();
    net.dense_bias + net.dense_weights.iter().zip(last).map(|(a, b)| a * b).sum::<f64>()
}

#[test]
fn forward_matches_stepwise_oracle() {
    for seed in 0..5 {
        let net = random_net(seed, [2, 2, 2, 2], 3, 0.0, CandidateForm::ResetGated);
        let window = [0.2, -0.4, 0.9];
        let got = net.predict_one(&window).unwrap();
        let want = oracle_forward(&net, &window);
        assert!((got - want).abs() <= 1e-10, "seed {seed}: {got} vs {want}");
    }
}

/// Loss over two windows with a dropout mask fixed by reseeding per call.
fn batch_loss(net: &Network, windows: &[Vec<f64>], targets: &[f64], mask_seed: Option<u64>) -> f64 {
    let mut rng = rng_from(mask_seed.unwrap_or(0));
    let preds: Vec<f64> = windows
        .iter()
        .map(|w| {
            let mode = match mask_seed {
                Some(_) => Mode::Train(&mut rng),
                None => Mode::Eval,
            };
            net.forward(w, mode).unwrap().0
        })
        .collect();
    mse_loss(&preds, targets).unwrap().0
}

fn check_gradients(net: &Network, mask_seed: Option<u64>) {
    let windows: Vec<Vec<f64>> = vec![
        (0..net.spec.window_length).map(|i| 0.3 * i as f64 - 0.2).collect(),
        (0..net.spec.window_length).map(|i| 0.8 - 0.25 * i as f64).collect(),
    ];
    let targets = [0.9, 0.4];
    let mut grads = net.zeros_like();
    let mut rng = rng_from(mask_seed.unwrap_or(0));
    let mut preds = Vec::new();
    let mut caches = Vec::new();
    for w in &windows {
        let mode = match mask_seed {
            Some(_) => Mode::Train(&mut rng),
            None => Mode::Eval,
        };
        let (p, c) = net.forward(w, mode).unwrap();
        preds.push(p);
        caches.push(c);
    }
    let (_, dl) = mse_loss(&preds, &targets).unwrap();
    for (c, d) in caches.iter().zip(&dl) {
        net.backward(c, *d, &mut grads).unwrap();
    }

    let h = 1e-5;
    let analytic = grads.tensors();
    let n_tensors = analytic.len();
    let mut worst = 0.0f64;
    for ti in 0..n_tensors {
        for i in 0..analytic[ti].len() {
            let mut plus = net.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = net.clone();
            minus.tensors_mut()[ti][i] -= h;
            let fd = (batch_loss(&plus, &windows, &targets, mask_seed)
                - batch_loss(&minus, &windows, &targets, mask_seed))
                / (2.0 * h);
            let a = analytic[ti][i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            assert!(rel <= 1e-4, "tensor {ti} index {i}: analytic {a} vs numeric {fd}");
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn gradients_match_finite_differences() {
    for (seed, units, window) in [(1, [2, 3, 2, 4], 3), (2, [4, 4, 4, 4], 4), (3, [1, 2, 3, 1], 2)] {
        check_gradients(&random_net(seed, units, window, 0.0, CandidateForm::ResetGated), None);
    }
}

#[test]
fn gradients_match_with_dropout_and_literal_candidate() {
    check_gradients(
        &random_net(5, [3, 2, 2, 3], 4, 0.3, CandidateForm::ResetGated),
        Some(17),
    );
    check_gradients(&random_net(6, [2, 2, 3, 2], 3, 0.0, CandidateForm::Concatenated), None);
}

#[test]
fn frozen_path_has_zero_gradient() {
    let mut net = random_net(9, [2, 2, 2, 2], 3, 0.0, CandidateForm::ResetGated);
    net.dense_weights.fill(0.0);
    let (_, cache) = net.forward(&[0.1, 0.2, 0.3], Mode::Eval).unwrap();
    let mut g = net.zeros_like();
    net.backward(&cache, 1.0, &mut g).unwrap();
    let t = g.tensors();
    let (head, tail) = t.split_at(t.len() - 2);
    assert!(head.iter().all(|x| x.iter().all(|v| *v == 0.0)));
    assert_eq!(tail[1], &[1.0]);
}

#[test]
fn gradients_are_deterministic() {
    let net = random_net(4, [3, 3, 3, 3], 4, 0.2, CandidateForm::ResetGated);
    let run = || {
        let mut rng = rng_from(3);
        let (p, c) = net.forward(&[0.1, 0.5, 0.2, 0.7], Mode::Train(&mut rng)).unwrap();
        let mut g = net.zeros_like();
        net.backward(&c, p - 0.4, &mut g).unwrap();
        g
    };
    assert_eq!(run(), run());
}

fn identity_series(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 - 0.2 * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn identity_mapping_is_learned() {
    let soh = identity_series(60);
    let hi = soh.clone();
    let data = make_windows_in(&hi, &soh, 5, 0..45).unwrap();
    let spec = NetworkSpec::dual_bigru(5, [16; 4], [0.0; 4]);
    let cfg = TrainingConfig {
        max_epochs: 200,
        lr_drop_period: 140,
        batch_size: 8,
        seed: 7,
        ..TrainingConfig::default()
    };
    let out = train(&spec, &cfg, &data).unwrap();
    assert!(out.loss_history.iter().all(|l| l.is_finite()));
    let fit = predict(&out.network, &data.inputs).unwrap();
    let rmse = (fit.iter().zip(&data.targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / fit.len() as f64).sqrt();
    assert!(rmse < 0.01, "training rmse {rmse}");

    let held = make_windows_in(&hi, &soh, 5, 45..60).unwrap();
    let pred = predict(&out.network, &held.inputs).unwrap();
    let rmse = (pred
        .iter()
        .zip(&held.targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len() as f64)
        .sqrt();
    assert!(rmse < 0.05, "held-out rmse {rmse}");

    let again = train(&spec, &cfg, &data).unwrap();
    assert_eq!(again.loss_history, out.loss_history);
    assert_eq!(predict(&again.network, &held.inputs).unwrap(), pred);
}

#[test]
fn saved_model_predicts_identically() {
    let net = random_net(12, [3, 3, 3, 3], 4, 0.1, CandidateForm::ResetGated);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_network(&net, &path).unwrap();
    let back = load_network(&path).unwrap();
    let w = vec![0.3, 0.1, 0.4, 0.1];
    assert_eq!(back.predict_one(&w).unwrap(), net.predict_one(&w).unwrap());
}
