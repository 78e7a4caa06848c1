//! Convolution, pooling, ReLU and dense layers with explicit backward passes.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

fn dims3(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::ShapeMismatch(format!("{what} must be [C, H, W], got {s:?}"))),
    }
}

/// State kept by [`conv2d_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    input_shape: (usize, usize, usize),
    kernel: usize,
    stride: usize,
    out_hw: (usize, usize),
    /// `[C*K*K, H'*W']` patch matrix.
    cols: Vec<f64>,
}

fn im2col(input: &[f64], (c, h, w): (usize, usize, usize), k: usize, s: usize, (oh, ow): (usize, usize)) -> Vec<f64> {
    let n = oh * ow;
    let mut cols = vec![0.0; c * k * k * n];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let src = &input[(ci * h + oy * s + ky) * w + kx..];
                    for ox in 0..ow {
                        dst[oy * ow + ox] = src[ox * s];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], (c, h, w): (usize, usize, usize), k: usize, s: usize, (oh, ow): (usize, usize)) -> Vec<f64> {
    let n = oh * ow;
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let base = (ci * h + oy * s + ky) * w + kx;
                    for ox in 0..ow {
                        out[base + ox * s] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
    out
}

/// Valid-padding cross-correlation. `weight` is `[O, C, K, K]`, `bias` `[O]`.
/// Output spatial size is `floor((H - K) / stride) + 1`.
pub fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
) -> Result<(Tensor, ConvCache)> {
    let (c, h, w) = dims3(input, "conv input")?;
    let (o, k) = match *weight.shape() {
        [o, wc, k, k2] if wc == c && k == k2 => (o, k),
        ref s => {
            return Err(Error::ShapeMismatch(format!(
                "conv weight {s:?} does not fit input with {c} channels"
            )))
        }
    };
    if bias.shape() != [o] {
        return Err(Error::ShapeMismatch(format!("conv bias {:?}, expected [{o}]", bias.shape())));
    }
    if stride == 0 || k == 0 || k > h || k > w {
        return Err(Error::ShapeMismatch(format!(
            "kernel {k} stride {stride} does not fit {h}x{w}"
        )));
    }
    let out_hw = ((h - k) / stride + 1, (w - k) / stride + 1);
    let n = out_hw.0 * out_hw.1;
    let cols = im2col(input.data(), (c, h, w), k, stride, out_hw);
    let mut out = vec![0.0; o * n];
    for (oc, row) in out.chunks_mut(n).enumerate() {
        row.fill(bias.data()[oc]);
    }
    gemm(o, c * k * k, n, weight.data(), false, &cols, false, 1.0, &mut out);
    let out = Tensor::new(vec![o, out_hw.0, out_hw.1], out)?;
    out.ensure_finite("conv2d")?;
    Ok((
        out,
        ConvCache {
            input_shape: (c, h, w),
            kernel: k,
            stride,
            out_hw,
            cols,
        },
    ))
}

pub struct ConvGrads {
    /// `None` when the caller did not ask for it.
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    cache: &ConvCache,
    weight: &Tensor,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> Result<ConvGrads> {
    let (c, h, w) = cache.input_shape;
    let k = cache.kernel;
    let o = weight.shape()[0];
    let n = cache.out_hw.0 * cache.out_hw.1;
    if grad_out.shape() != [o, cache.out_hw.0, cache.out_hw.1] {
        return Err(Error::ShapeMismatch(format!(
            "conv upstream gradient {:?}",
            grad_out.shape()
        )));
    }
    let g = grad_out.data();
    let bias: Vec<f64> = g.chunks(n).map(|row| row.iter().sum()).collect();
    let mut gw = vec![0.0; o * c * k * k];
    gemm(o, n, c * k * k, g, false, &cache.cols, true, 0.0, &mut gw);
    let input = if need_input_grad {
        let mut gcols = vec![0.0; c * k * k * n];
        gemm(c * k * k, o, n, weight.data(), true, g, false, 0.0, &mut gcols);
        Some(Tensor::new(
            vec![c, h, w],
            col2im(&gcols, (c, h, w), k, cache.stride, cache.out_hw),
        )?)
    } else {
        None
    };
    Ok(ConvGrads {
        input,
        weight: Tensor::new(weight.shape().to_vec(), gw)?,
        bias: Tensor::from_vec(bias),
    })
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Non-overlapping `k x k` max pooling; trailing rows/columns that do not
/// fill a window are dropped.
pub fn maxpool2d_forward(input: &Tensor, k: usize) -> Result<(Tensor, PoolCache)> {
    let (c, h, w) = dims3(input, "pool input")?;
    if k == 0 || k > h || k > w {
        return Err(Error::ShapeMismatch(format!("pool {k} does not fit {h}x{w}")));
    }
    let (oh, ow) = (h / k, w / k);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (f64::NEG_INFINITY, 0);
                for dy in 0..k {
                    for dx in 0..k {
                        let idx = (ci * h + oy * k + dy) * w + ox * k + dx;
                        if x[idx] > best.0 {
                            best = (x[idx], idx);
                        }
                    }
                }
                out.push(best.0);
                argmax.push(best.1);
            }
        }
    }
    Ok((
        Tensor::new(vec![c, oh, ow], out)?,
        PoolCache {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool2d_backward(cache: &PoolCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::ShapeMismatch("pool upstream gradient".into()));
    }
    let mut g = Tensor::zeros(cache.input_shape.clone());
    for (&idx, &v) in cache.argmax.iter().zip(grad_out.data()) {
        g.data_mut()[idx] += v;
    }
    Ok(g)
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Gradient through ReLU given the forward input.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// `y = W x + b` on the flattened input. `weight` is `[out, in]`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (o, i) = match *weight.shape() {
        [o, i] if i == input.len() && bias.shape() == [o] => (o, i),
        ref s => {
            return Err(Error::ShapeMismatch(format!(
                "dense weight {s:?} / bias {:?} vs input of {}",
                bias.shape(),
                input.len()
            )))
        }
    };
    let mut out = bias.data().to_vec();
    gemm(o, i, 1, weight.data(), false, input.data(), false, 1.0, &mut out);
    let out = Tensor::from_vec(out);
    out.ensure_finite("dense")?;
    Ok(out)
}

pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Input gradient comes back with the input's original shape.
pub fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let (o, i) = (weight.shape()[0], weight.shape()[1]);
    if grad_out.len() != o {
        return Err(Error::ShapeMismatch("dense upstream gradient".into()));
    }
    let mut gw = vec![0.0; o * i];
    gemm(o, 1, i, grad_out.data(), false, input.data(), false, 0.0, &mut gw);
    let mut gx = vec![0.0; i];
    gemm(i, o, 1, weight.data(), true, grad_out.data(), false, 0.0, &mut gx);
    Ok(DenseGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weight: Tensor::new(vec![o, i], gw)?,
        bias: grad_out.clone().reshape(vec![o])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_identity() {
        let input = Tensor::new(vec![1, 3, 4], (0..12).map(|v| v as f64).collect()).unwrap();
        let w = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(vec![1]);
        let (out, _) = conv2d_forward(&input, &w, &b, 1).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn zero_input_gives_bias() {
        let input = Tensor::zeros(vec![2, 7, 7]);
        let w = Tensor::new(vec![3, 2, 3, 3], (0..54).map(|v| v as f64 * 0.1).collect()).unwrap();
        let b = Tensor::from_vec(vec![0.5, -1.0, 2.0]);
        let (out, _) = conv2d_forward(&input, &w, &b, 2).unwrap();
        assert_eq!(out.shape(), &[3, 3, 3]);
        for (oc, row) in out.data().chunks(9).enumerate() {
            assert!(row.iter().all(|&v| v == b.data()[oc]));
        }
    }

    #[test]
    fn direct_convolution_matches() {
        let input = Tensor::new(vec![2, 6, 5], (0..60).map(|v| ((v * 7) % 11) as f64 - 5.0).collect()).unwrap();
        let w = Tensor::new(vec![2, 2, 3, 3], (0..36).map(|v| ((v * 5) % 7) as f64 * 0.3 - 1.0).collect()).unwrap();
        let b = Tensor::from_vec(vec![0.1, -0.2]);
        let (out, _) = conv2d_forward(&input, &w, &b, 2).unwrap();
        assert_eq!(out.shape(), &[2, 2, 2]);
        let x = |c: usize, y: usize, xx: usize| input.data()[(c * 6 + y) * 5 + xx];
        let wt = |o: usize, c: usize, y: usize, xx: usize| w.data()[((o * 2 + c) * 3 + y) * 3 + xx];
        for o in 0..2 {
            for oy in 0..2 {
                for ox in 0..2 {
                    let mut s = b.data()[o];
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                s += wt(o, c, ky, kx) * x(c, oy * 2 + ky, ox * 2 + kx);
                            }
                        }
                    }
                    assert!((out.data()[(o * 2 + oy) * 2 + ox] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let input = Tensor::zeros(vec![1, 2, 2]);
        let w = Tensor::zeros(vec![1, 1, 3, 3]);
        assert!(conv2d_forward(&input, &w, &Tensor::zeros(vec![1]), 1).is_err());
        let w = Tensor::zeros(vec![1, 2, 1, 1]);
        assert!(conv2d_forward(&input, &w, &Tensor::zeros(vec![1]), 1).is_err());
    }

    #[test]
    fn pool_routes_gradient_to_max() {
        let input = Tensor::new(vec![1, 2, 3], vec![1.0, 5.0, 9.0, 3.0, 2.0, 0.0]).unwrap();
        let (out, cache) = maxpool2d_forward(&input, 2).unwrap();
        assert_eq!(out.data(), &[5.0]);
        let g = maxpool2d_backward(&cache, &Tensor::new(vec![1, 1, 1], vec![2.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
