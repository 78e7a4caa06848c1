use super::{LpcFrame, SILENCE_THRESHOLD};

/// Reflection coefficients at or beyond `1 - BREAKDOWN_MARGIN` in magnitude
/// stop the recursion.
const BREAKDOWN_MARGIN: f64 = 1e-9;

/// `r[k] = sum_n frame[n] * frame[n + k]` for `k = 0..=order`.
pub fn autocorrelate(frame: &[f64], order: usize) -> Vec<f64> {
    (0..=order)
        .map(|k| {
            frame
                .iter()
                .zip(frame.iter().skip(k))
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevinsonOutput {
    pub frame: LpcFrame,
    /// Reflection coefficients of every completed order.
    pub reflection: Vec<f64>,
    /// Order at which the recursion hit a reflection coefficient with
    /// `|k| >= 1 - eps`. The returned coefficients are those of the last
    /// stable order, zero-padded to the requested order.
    pub breakdown: Option<usize>,
}

impl LevinsonOutput {
    /// Final prediction error energy.
    pub fn error(&self) -> f64 {
        self.frame.gain * self.frame.gain
    }
}

pub fn levinson_durbin(r: &[f64]) -> LevinsonOutput {
    levinson_durbin_with(r, SILENCE_THRESHOLD)
}

/// Solves the Toeplitz normal equations for `A(z) = 1 + sum a_k z^-k`.
///
/// Sign convention: `k_i = -(r[i] + sum_{j<i} a_j r[i-j]) / E_{i-1}` so an
/// AR(1) source with `r[k] = rho^k` gives `a_1 = k_1 = -rho`.
pub fn levinson_durbin_with(r: &[f64], silence_threshold: f64) -> LevinsonOutput {
    assert!(!r.is_empty(), "autocorrelation needs at least r[0]");
    let order = r.len() - 1;
    if r[0] <= silence_threshold {
        return LevinsonOutput {
            frame: LpcFrame::silent(order),
            reflection: Vec::new(),
            breakdown: None,
        };
    }

    let mut a = vec![0.0; order];
    let mut scratch = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);
    let mut err = r[0];
    let mut breakdown = None;

    for i in 1..=order {
        let acc = r[i] + (1..i).map(|j| a[j - 1] * r[i - j]).sum::<f64>();
        let k = -acc / err;
        if !k.is_finite() || k.abs() >= 1.0 - BREAKDOWN_MARGIN {
            breakdown = Some(i);
            break;
        }
        scratch[..i - 1].copy_from_slice(&a[..i - 1]);
        for j in 1..i {
            a[j - 1] = scratch[j - 1] + k * scratch[i - j - 1];
        }
        a[i - 1] = k;
        err *= 1.0 - k * k;
        reflection.push(k);
    }

    LevinsonOutput {
        frame: LpcFrame {
            gain: err.max(0.0).sqrt(),
            coeffs: a,
            is_silent: false,
        },
        reflection,
        breakdown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autocorrelation_of_impulse_and_ones() {
        assert_eq!(autocorrelate(&[1.0, 0.0, 0.0, 0.0], 2), vec![1.0, 0.0, 0.0]);
        assert_eq!(autocorrelate(&[1.0; 4], 1), vec![4.0, 3.0]);
    }

    #[test]
    fn autocorrelation_of_sinusoid() {
        let frame: Vec<f64> = (0..64)
            .map(|n| (2.0 * std::f64::consts::PI * n as f64 / 8.0).sin())
            .collect();
        // brute-force oracle: sum the lagged products directly
        let r0: f64 = frame.iter().map(|x| x * x).sum();
        let r1: f64 = (0..63).map(|n| frame[n] * frame[n + 1]).sum();
        let r = autocorrelate(&frame, 2);
        assert!((r[0] - r0).abs() < 1e-12 && (r[1] - r1).abs() < 1e-12);
        assert!((r[1] / r[0] - (std::f64::consts::PI / 4.0).cos()).abs() < 0.05);
    }

    #[test]
    fn white_autocorrelation_gives_flat_predictor() {
        let out = levinson_durbin(&[1.0, 0.0, 0.0]);
        assert_eq!(out.frame.coeffs, vec![0.0, 0.0]);
        assert_eq!(out.frame.gain, 1.0);
        assert!(!out.frame.is_silent);
        assert!(out.breakdown.is_none());
    }

    #[test]
    fn ar1_recursion() {
        let r: Vec<f64> = (0..2).map(|k| 0.9f64.powi(k)).collect();
        let out = levinson_durbin(&r);
        assert!((out.frame.coeffs[0] + 0.9).abs() < 1e-15);
        assert!((out.reflection[0] + 0.9).abs() < 1e-15);
        // 1x1 normal equation: r0 * a1 = -r1
        assert!((out.error() - (1.0 - 0.81)).abs() < 1e-12);
    }

    #[test]
    fn silent_frame() {
        let out = levinson_durbin(&[0.0, 0.0, 0.0]);
        assert!(out.frame.is_silent);
        assert_eq!(out.frame.gain, 0.0);
        assert_eq!(out.frame.coeffs, vec![0.0, 0.0]);
    }

    #[test]
    fn singular_autocorrelation_breaks_down_at_last_stable_order() {
        // a pure DC sequence: r[k] = r[0] makes k_1 = -1
        let out = levinson_durbin(&[4.0, 4.0, 4.0]);
        assert_eq!(out.breakdown, Some(1));
        assert!(!out.frame.is_silent);
        assert_eq!(out.frame.coeffs, vec![0.0, 0.0]);
        assert_eq!(out.frame.gain, 2.0);
    }
}
