use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Rows whose centred squared norm falls below this count as constant.
const ZERO_VARIANCE: f64 = 1e-20;

/// Weight of the correlation term in `MSE + lambda * mean(1 - rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

/// Pearson correlation of two equal-length rows, or `None` if either is
/// constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // one square root of the product keeps rho(x, x) exactly 1
    (saa > ZERO_VARIANCE && sbb > ZERO_VARIANCE).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// `1 - rho` for one row, zero for constant rows.
pub fn correlation_term(pred: &[f64], target: &[f64]) -> f64 {
    pearson(pred, target).map_or(0.0, |r| 1.0 - r)
}

/// Loss contribution and gradient of a single row inside a batch of
/// `batch` rows, so that summing over rows gives the batch loss.
pub fn row_loss(pred: &[f64], target: &[f64], batch: usize, cfg: &LossConfig) -> (f64, Vec<f64>) {
    let d = pred.len();
    let scale = 1.0 / (batch * d) as f64;
    let mut loss = 0.0;
    let mut grad: Vec<f64> = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p - t;
            loss += e * e * scale;
            2.0 * e * scale
        })
        .collect();

    if cfg.lambda != 0.0 {
        let n = d as f64;
        let mp = pred.iter().sum::<f64>() / n;
        let mt = target.iter().sum::<f64>() / n;
        let pc: Vec<f64> = pred.iter().map(|p| p - mp).collect();
        let tc: Vec<f64> = target.iter().map(|t| t - mt).collect();
        let spp: f64 = pc.iter().map(|v| v * v).sum();
        let stt: f64 = tc.iter().map(|v| v * v).sum();
        if spp > ZERO_VARIANCE && stt > ZERO_VARIANCE {
            let spt: f64 = pc.iter().zip(&tc).map(|(a, b)| a * b).sum();
            let (np, nt) = (spp.sqrt(), stt.sqrt());
            let rho = spt / (spp * stt).sqrt();
            let w = cfg.lambda / batch as f64;
            // rounding can put rho a few ulps above 1
            loss += w * (1.0 - rho).max(0.0);
            // d rho / d pred = tc / (|pc||tc|) - rho * pc / |pc|^2 (already centred)
            for ((g, a), b) in grad.iter_mut().zip(&pc).zip(&tc) {
                *g -= w * (b / (np * nt) - rho * a / spp);
            }
        }
    }
    (loss, grad)
}

/// `MSE(pred, target) + lambda * mean_rows(1 - rho_row)` and its gradient
/// with respect to `pred`. Both tensors are `[B, D]`.
pub fn loss(pred: &Tensor, target: &Tensor, cfg: &LossConfig) -> Result<(f64, Tensor)> {
    let (b, d) = match *pred.shape() {
        [b, d] if b >= 1 && d >= 1 && pred.shape() == target.shape() => (b, d),
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "loss needs equal [B, D] tensors, got {:?} and {:?}",
                pred.shape(),
                target.shape()
            )))
        }
    };
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(b * d);
    for (p, t) in pred.data().chunks(d).zip(target.data().chunks(d)) {
        let (l, g) = row_loss(p, t, b, cfg);
        total += l;
        grad.extend(g);
    }
    Ok((total, Tensor::new(vec![b, d], grad)?))
}
