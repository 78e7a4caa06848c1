//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use silentspeech::multiview::{FusionStrategy, ViewId};
use silentspeech::nn::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, loss, lstm_backward,
    lstm_forward, maxpool2d_backward, maxpool2d_forward, project_normalized,
    project_normalized_backward, EncoderStage, LossConfig, Network, NetworkSpec, Tensor,
};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors of near-zero gradient entries.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

pub fn tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, normals(rng, n, scale)).unwrap()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central differences of a scalar function at `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| rel_err(*a, *n))
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::new(t.shape().to_vec(), data.to_vec()).unwrap()
}

/// Conv layer: input, weight and bias gradients of `w . conv(x)`.
pub fn conv_case(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, o: usize, k: usize, stride: usize) -> f64 {
    let x = tensor(rng, vec![c, h, w], 1.0);
    let wt = tensor(rng, vec![o, c, k, k], 0.5);
    let b = tensor(rng, vec![o], 0.5);
    let (out, cache) = conv2d_forward(&x, &wt, &b, stride).unwrap();
    let proj = normals(rng, out.len(), 1.0);
    let g = conv2d_backward(&cache, &wt, &Tensor::new(out.shape().to_vec(), proj.clone()).unwrap(), true).unwrap();
    let f = |x: &Tensor, wt: &Tensor, b: &Tensor| dot(&proj, conv2d_forward(x, wt, b, stride).unwrap().0.data());
    let nx = numeric_grad(x.data(), |d| f(&with_data(&x, d), &wt, &b));
    let nw = numeric_grad(wt.data(), |d| f(&x, &with_data(&wt, d), &b));
    let nb = numeric_grad(b.data(), |d| f(&x, &wt, &with_data(&b, d)));
    max_rel_err(g.input.unwrap().data(), &nx)
        .max(max_rel_err(g.weight.data(), &nw))
        .max(max_rel_err(g.bias.data(), &nb))
}

pub fn pool_case(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, k: usize) -> f64 {
    let x = tensor(rng, vec![c, h, w], 1.0);
    let (out, cache) = maxpool2d_forward(&x, k).unwrap();
    let proj = normals(rng, out.len(), 1.0);
    let g = maxpool2d_backward(&cache, &Tensor::new(out.shape().to_vec(), proj.clone()).unwrap()).unwrap();
    let n = numeric_grad(x.data(), |d| dot(&proj, maxpool2d_forward(&with_data(&x, d), k).unwrap().0.data()));
    max_rel_err(g.data(), &n)
}

pub fn dense_case(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize) -> f64 {
    let x = tensor(rng, vec![d_in], 1.0);
    let wt = tensor(rng, vec![d_out, d_in], 0.5);
    let b = tensor(rng, vec![d_out], 0.5);
    let proj = normals(rng, d_out, 1.0);
    let g = dense_backward(&x, &wt, &Tensor::from_vec(proj.clone())).unwrap();
    let f = |x: &Tensor, wt: &Tensor, b: &Tensor| dot(&proj, dense_forward(x, wt, b).unwrap().data());
    let nx = numeric_grad(x.data(), |d| f(&with_data(&x, d), &wt, &b));
    let nw = numeric_grad(wt.data(), |d| f(&x, &with_data(&wt, d), &b));
    let nb = numeric_grad(b.data(), |d| f(&x, &wt, &with_data(&b, d)));
    max_rel_err(g.input.data(), &nx)
        .max(max_rel_err(g.weight.data(), &nw))
        .max(max_rel_err(g.bias.data(), &nb))
}

pub fn lstm_case(rng: &mut ChaCha8Rng, steps: usize, d: usize, hidden: usize) -> f64 {
    let xs: Vec<Vec<f64>> = (0..steps).map(|_| normals(rng, d, 1.0)).collect();
    let wt = tensor(rng, vec![4 * hidden, d + hidden], 0.5);
    let b = tensor(rng, vec![4 * hidden], 0.5);
    let proj = normals(rng, hidden, 1.0);
    let run = |xs: &[Vec<f64>], wt: &Tensor, b: &Tensor| {
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        lstm_forward(&refs, wt, b).unwrap()
    };
    let (_, cache) = run(&xs, &wt, &b);
    let g = lstm_backward(&cache, &wt, &proj).unwrap();
    let f = |xs: &[Vec<f64>], wt: &Tensor, b: &Tensor| dot(&proj, run(xs, wt, b).0.final_hidden());
    let nw = numeric_grad(wt.data(), |dd| f(&xs, &with_data(&wt, dd), &b));
    let nb = numeric_grad(b.data(), |dd| f(&xs, &wt, &with_data(&b, dd)));
    let mut worst = max_rel_err(g.weight.data(), &nw).max(max_rel_err(g.bias.data(), &nb));
    for t in 0..steps {
        let nx = numeric_grad(&xs[t], |dd| {
            let mut ys = xs.clone();
            ys[t] = dd.to_vec();
            f(&ys, &wt, &b)
        });
        worst = worst.max(max_rel_err(&g.inputs[t], &nx));
    }
    worst
}

pub fn project_case(rng: &mut ChaCha8Rng, p: usize) -> f64 {
    let raw = normals(rng, p + 1, 2.0);
    let proj = normals(rng, p + 1, 1.0);
    let g = project_normalized_backward(&raw, &proj);
    let n = numeric_grad(&raw, |r| dot(&proj, &project_normalized(r)));
    max_rel_err(&g, &n)
}

pub fn loss_case(rng: &mut ChaCha8Rng, batch: usize, dim: usize, lambda: f64) -> f64 {
    let pred = tensor(rng, vec![batch, dim], 1.0);
    let target = tensor(rng, vec![batch, dim], 1.0);
    let cfg = LossConfig { lambda };
    let (_, g) = loss(&pred, &target, &cfg).unwrap();
    let n = numeric_grad(pred.data(), |d| loss(&with_data(&pred, d), &target, &cfg).unwrap().0);
    max_rel_err(g.data(), &n)
}

pub fn toy_spec(views: Vec<ViewId>, fusion: FusionStrategy, tied: bool, out_dim: usize) -> NetworkSpec {
    NetworkSpec {
        views,
        input_height: 7,
        input_width: 7,
        encoder: vec![
            EncoderStage::Conv {
                out_channels: 2,
                kernel: 3,
                stride: 2,
            },
            EncoderStage::Relu,
            EncoderStage::MaxPool { kernel: 2 },
            EncoderStage::Dense { out: 3 },
        ],
        fusion,
        tied_encoders: tied,
        lstm_hidden: 4,
        timesteps: 3,
        out_dim,
    }
}

/// Every parameter of a small network against `w . raw_output`.
pub fn network_case(rng: &mut ChaCha8Rng, spec: NetworkSpec) -> f64 {
    let seed = rng.random();
    let mut net = Network::new(spec.clone(), seed).unwrap();
    // nonzero biases so every path carries gradient
    for t in net.params_mut().tensors_mut() {
        if t.shape().len() == 1 {
            for v in t.data_mut() {
                *v = 0.3 * normal(rng);
            }
        }
    }
    let frames: Vec<Vec<Tensor>> = spec
        .views
        .iter()
        .map(|_| (0..spec.timesteps).map(|_| tensor(rng, vec![spec.input_height, spec.input_width], 1.0)).collect())
        .collect();
    let window: Vec<Vec<&Tensor>> = frames.iter().map(|v| v.iter().collect()).collect();
    let proj = normals(rng, spec.out_dim, 1.0);
    let (_, trace) = net.forward(&window).unwrap();
    let mut grads = net.zero_grads();
    net.backward(&trace, &proj, &mut grads).unwrap();
    let mut worst: f64 = 0.0;
    for idx in 0..net.params().len() {
        let base = net.params().get(idx).clone();
        let numeric = {
            let mut probe = net.clone();
            numeric_grad(base.data(), |d| {
                probe.params_mut().get_mut(idx).data_mut().copy_from_slice(d);
                dot(&proj, &probe.predict(&window).unwrap())
            })
        };
        worst = worst.max(max_rel_err(grads.get(idx).data(), &numeric));
    }
    worst
}

/// Reflection coefficients to direct-form `a_1..a_P` (step-up recursion).
pub fn reflection_to_lpc(k: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(k.len());
    for (i, &ki) in k.iter().enumerate() {
        let prev = a.clone();
        for j in 0..i {
            a[j] = prev[j] + ki * prev[i - 1 - j];
        }
        a.push(ki);
    }
    a
}

/// Moduli of the roots of `1 + a_1 z^-1 + ... + a_P z^-P`, from the
/// eigenvalues of the companion matrix.
pub fn root_moduli(a: &[f64]) -> Vec<f64> {
    let p = a.len();
    let m = DMatrix::from_fn(p, p, |r, c| {
        if r == 0 {
            -a[c]
        } else if r == c + 1 {
            1.0
        } else {
            0.0
        }
    });
    // The unshifted QR iteration can stall on some companion matrices, so cap
    // it and fall back to the largest modulus implied by the step-down test.
    match nalgebra::linalg::Schur::try_new(m, 1e-14, 20_000) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).collect(),
        None => vec![if schur_cohn_stable(a) { 0.0 } else { 1.0 }],
    }
}

/// Schur-Cohn step-down: every reflection of the polynomial is inside (-1, 1).
pub fn schur_cohn_stable(a: &[f64]) -> bool {
    let mut c = a.to_vec();
    while let Some(&k) = c.last() {
        if k.abs() >= 1.0 {
            return false;
        }
        let q = c.len();
        let d = 1.0 - k * k;
        c = (0..q - 1).map(|i| (c[i] - k * c[q - 2 - i]) / d).collect();
    }
    true
}

/// Glottal pulse train through two resonators, with a little noise.
pub fn two_formant_speech(sample_rate: u32, seconds: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let n = (sample_rate as f64 * seconds) as usize;
    let sr = sample_rate as f64;
    let resonator = |f: f64, bw: f64| {
        let rad = (-std::f64::consts::PI * bw / sr).exp();
        let th = 2.0 * std::f64::consts::PI * f / sr;
        (2.0 * rad * th.cos(), -rad * rad)
    };
    let (a1, a2) = resonator(700.0, 90.0);
    let (b1, b2) = resonator(1220.0, 110.0);
    let period = (sr / 120.0) as usize;
    let (mut y1, mut y2, mut z1, mut z2) = (0.0, 0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let e = if i % period == 0 { 1.0 } else { 0.0 } + 0.01 * normal(&mut r);
        let y = e + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        let z = y + b1 * z1 + b2 * z2;
        z2 = z1;
        z1 = z;
        out.push(z);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.iter().map(|v| 0.5 * v / peak).collect()
}
