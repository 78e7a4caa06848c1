//! Single-layer LSTM over a short sequence, with backpropagation through time.
//!
//! Gate layout in the `[4H, D + H]` weight matrix: input, forget, candidate,
//! output. The initial hidden and cell states are zero.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    /// `[x_t; h_{t-1}]`
    concat: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    input_dim: usize,
    hidden: usize,
    steps: Vec<StepCache>,
}

#[derive(Debug, Clone)]
pub struct LstmOutput {
    /// Hidden state after every step; the last entry is the sequence summary.
    pub hidden_states: Vec<Vec<f64>>,
    pub cell_states: Vec<Vec<f64>>,
}

impl LstmOutput {
    pub fn final_hidden(&self) -> &[f64] {
        self.hidden_states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn lstm_dims(weight: &Tensor, bias: &Tensor, input_dim: usize) -> Result<usize> {
    match *weight.shape() {
        [rows, cols] if rows % 4 == 0 && cols == input_dim + rows / 4 && bias.shape() == [rows] => {
            Ok(rows / 4)
        }
        ref s => Err(Error::ShapeMismatch(format!(
            "lstm weight {s:?} / bias {:?} for input dim {input_dim}",
            bias.shape()
        ))),
    }
}

pub fn lstm_forward(inputs: &[&[f64]], weight: &Tensor, bias: &Tensor) -> Result<(LstmOutput, LstmCache)> {
    let input_dim = inputs
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::ShapeMismatch("empty lstm sequence".into()))?;
    if inputs.iter().any(|x| x.len() != input_dim) {
        return Err(Error::ShapeMismatch("ragged lstm inputs".into()));
    }
    let hidden = lstm_dims(weight, bias, input_dim)?;
    let width = input_dim + hidden;

    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut out = LstmOutput {
        hidden_states: Vec::with_capacity(inputs.len()),
        cell_states: Vec::with_capacity(inputs.len()),
    };
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let mut concat = Vec::with_capacity(width);
        concat.extend_from_slice(x);
        concat.extend_from_slice(&h);
        let mut z = bias.data().to_vec();
        gemm(4 * hidden, width, 1, weight.data(), false, &concat, false, 1.0, &mut z);

        let i: Vec<f64> = z[..hidden].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = z[hidden..2 * hidden].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * hidden..3 * hidden].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * hidden..].iter().map(|&v| sigmoid(v)).collect();
        let c_prev = c.clone();
        for j in 0..hidden {
            c[j] = f[j] * c_prev[j] + i[j] * g[j];
        }
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        for j in 0..hidden {
            h[j] = o[j] * tanh_c[j];
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lstm"));
        }
        out.hidden_states.push(h.clone());
        out.cell_states.push(c.clone());
        steps.push(StepCache {
            concat,
            i,
            f,
            g,
            o,
            c_prev,
            tanh_c,
        });
    }
    Ok((
        out,
        LstmCache {
            input_dim,
            hidden,
            steps,
        },
    ))
}

pub struct LstmGrads {
    pub inputs: Vec<Vec<f64>>,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Backpropagation through time from a gradient on the final hidden state.
pub fn lstm_backward(cache: &LstmCache, weight: &Tensor, grad_final_h: &[f64]) -> Result<LstmGrads> {
    let (d, hd) = (cache.input_dim, cache.hidden);
    if grad_final_h.len() != hd {
        return Err(Error::ShapeMismatch("lstm upstream gradient".into()));
    }
    let width = d + hd;
    let mut gw = vec![0.0; 4 * hd * width];
    let mut gb = vec![0.0; 4 * hd];
    let mut g_inputs = vec![Vec::new(); cache.steps.len()];
    let mut dh = grad_final_h.to_vec();
    let mut dc = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];
    let mut dconcat = vec![0.0; width];

    for (t, s) in cache.steps.iter().enumerate().rev() {
        for j in 0..hd {
            let do_ = dh[j] * s.tanh_c[j];
            let dct = dc[j] + dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            let di = dct * s.g[j];
            let dg = dct * s.i[j];
            let df = dct * s.c_prev[j];
            dz[j] = di * s.i[j] * (1.0 - s.i[j]);
            dz[hd + j] = df * s.f[j] * (1.0 - s.f[j]);
            dz[2 * hd + j] = dg * (1.0 - s.g[j] * s.g[j]);
            dz[3 * hd + j] = do_ * s.o[j] * (1.0 - s.o[j]);
            dc[j] = dct * s.f[j];
        }
        for (b, z) in gb.iter_mut().zip(&dz) {
            *b += z;
        }
        gemm(4 * hd, 1, width, &dz, false, &s.concat, false, 1.0, &mut gw);
        gemm(width, 4 * hd, 1, weight.data(), true, &dz, false, 0.0, &mut dconcat);
        g_inputs[t] = dconcat[..d].to_vec();
        dh.copy_from_slice(&dconcat[d..]);
    }
    Ok(LstmGrads {
        inputs: g_inputs,
        weight: Tensor::new(vec![4 * hd, width], gw)?,
        bias: Tensor::from_vec(gb),
    })
}
