//! Mapping raw regressor outputs onto valid LSP frames.
//!
//! `raw[0]` becomes the (log-compressed) gain through softplus. `raw[1..]`
//! become positive increments `softplus(raw[k]) + MIN_INCREMENT`; a fixed
//! closing increment `ln 2 + MIN_INCREMENT` is appended, and the cumulative
//! sums are divided by the grand total. The frequencies therefore always lie
//! strictly inside `(0, 1)` (times pi), strictly increasing, and an all-zero
//! input lands on the evenly spaced frequencies of a flat spectrum.

use std::f64::consts::{LN_2, PI};

use crate::audio::LspFrame;

const MIN_INCREMENT: f64 = 1e-6;
/// Raw frequency inputs are clamped here so increments stay well-conditioned.
const RAW_LIMIT: f64 = 30.0;

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `[softplus(raw[0]), w_1/pi, ..., w_P/pi]`: the normalized target space.
pub fn project_normalized(raw: &[f64]) -> Vec<f64> {
    assert!(raw.len() >= 2, "need a gain and at least one frequency");
    let increments: Vec<f64> = raw[1..]
        .iter()
        .map(|&r| softplus(r.clamp(-RAW_LIMIT, RAW_LIMIT)) + MIN_INCREMENT)
        .collect();
    let total: f64 = increments.iter().sum::<f64>() + LN_2 + MIN_INCREMENT;
    let mut out = Vec::with_capacity(raw.len());
    out.push(softplus(raw[0]));
    let mut acc = 0.0;
    for s in increments {
        acc += s;
        out.push(acc / total);
    }
    out
}

/// Vector-Jacobian product of [`project_normalized`].
pub fn project_normalized_backward(raw: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let p = raw.len() - 1;
    let increments: Vec<f64> = raw[1..]
        .iter()
        .map(|&r| softplus(r.clamp(-RAW_LIMIT, RAW_LIMIT)) + MIN_INCREMENT)
        .collect();
    let total: f64 = increments.iter().sum::<f64>() + LN_2 + MIN_INCREMENT;
    let mut cum = Vec::with_capacity(p);
    let mut acc = 0.0;
    for s in &increments {
        acc += s;
        cum.push(acc);
    }
    let weighted: f64 = grad_out[1..].iter().zip(&cum).map(|(g, c)| g * c).sum();

    let mut grad = vec![0.0; raw.len()];
    grad[0] = grad_out[0] * sigmoid(raw[0]);
    // suffix sums of the upstream gradient
    let mut suffix = 0.0;
    for j in (0..p).rev() {
        suffix += grad_out[j + 1];
        let d_inc = suffix / total - weighted / (total * total);
        let r = raw[j + 1];
        let d_raw = if r.abs() < RAW_LIMIT { sigmoid(r) } else { 0.0 };
        grad[j + 1] = d_inc * d_raw;
    }
    grad
}

/// Turns a raw prediction into a valid [`LspFrame`]. The gain stays in the
/// compressed units of the training targets.
pub fn project_to_lsp(raw: &[f64]) -> LspFrame {
    let normalized = project_normalized(raw);
    LspFrame {
        gain: normalized[0],
        freqs: normalized[1..].iter().map(|u| u * PI).collect(),
        is_silent: false,
    }
}
