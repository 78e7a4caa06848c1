//! LPC <-> line spectral pair conversion.
//!
//! `P(z) = A(z) + z^-(p+1) A(1/z)` and `Q(z) = A(z) - z^-(p+1) A(1/z)` have all
//! their roots on the unit circle when `1/A(z)` is stable. The trivial roots at
//! `z = +-1` are divided out, leaving symmetric polynomials of even degree
//! whose unit-circle values are Chebyshev series in `cos(w)`. Roots are found
//! by a sign-change scan followed by bisection.

use std::f64::consts::PI;

use super::{LpcFrame, LspFrame};
use crate::error::{Error, Result};

const GRID_PER_ORDER: usize = 64;
const GRID_REFINEMENTS: usize = 3;
const BISECTION_TOL: f64 = 1e-13;

/// Symmetric (`P`) and antisymmetric (`Q`) parts of `A(z)` with the trivial
/// unit-circle roots removed. Both are returned as coefficient vectors in
/// powers of `z^-1`.
fn reduced_polynomials(coeffs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let order = coeffs.len();
    let mut a = Vec::with_capacity(order + 2);
    a.push(1.0);
    a.extend_from_slice(coeffs);
    a.push(0.0);
    let n = a.len();
    let sym: Vec<f64> = (0..n).map(|k| a[k] + a[n - 1 - k]).collect();
    let anti: Vec<f64> = (0..n).map(|k| a[k] - a[n - 1 - k]).collect();

    if order.is_multiple_of(2) {
        // P(-1) = 0 and Q(1) = 0
        (divide_linear(&sym, 1.0), divide_linear(&anti, -1.0))
    } else {
        // Q(1) = Q(-1) = 0
        (sym, divide_quadratic_minus(&anti))
    }
}

/// Exact quotient of `poly / (1 + c z^-1)`.
fn divide_linear(poly: &[f64], c: f64) -> Vec<f64> {
    let mut out = vec![0.0; poly.len() - 1];
    let mut prev = 0.0;
    for (k, slot) in out.iter_mut().enumerate() {
        prev = poly[k] - c * prev;
        *slot = prev;
    }
    out
}

/// Exact quotient of `poly / (1 - z^-2)`.
fn divide_quadratic_minus(poly: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; poly.len() - 2];
    for k in 0..out.len() {
        out[k] = poly[k] + if k >= 2 { out[k - 2] } else { 0.0 };
    }
    out
}

/// Chebyshev coefficients of `e^{jmw} G(e^{jw})` for a symmetric `G` of
/// degree `2m`: `c_0 = g_m`, `c_i = 2 g_{m-i}`.
fn chebyshev_coeffs(sym: &[f64]) -> Vec<f64> {
    let m = (sym.len() - 1) / 2;
    (0..=m)
        .map(|i| if i == 0 { sym[m] } else { 2.0 * sym[m - i] })
        .collect()
}

/// Clenshaw evaluation of `sum c_i T_i(x)`.
fn clenshaw(c: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ci in c.iter().skip(1).rev() {
        let b0 = ci + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0] + x * b1 - b2
}

fn unit_circle_roots(cheb: &[f64], grid: usize) -> Vec<f64> {
    let f = |w: f64| clenshaw(cheb, w.cos());
    let mut roots = Vec::new();
    let mut lo = 0.0;
    let mut f_lo = f(lo);
    for j in 1..=grid {
        let hi = PI * j as f64 / grid as f64;
        let f_hi = f(hi);
        if f_lo.signum() != f_hi.signum() {
            roots.push(bisect(&f, lo, hi, f_lo));
        }
        lo = hi;
        f_lo = f_hi;
    }
    roots
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let sign_lo = f_lo.signum();
    for _ in 0..80 {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Converts a stable (or silent) LPC frame to its line spectral frequencies,
/// merged in ascending order. The gain is copied through.
pub fn lpc_to_lsp(lpc: &LpcFrame) -> Result<LspFrame> {
    let order = lpc.order();
    if lpc.is_silent {
        return Ok(LspFrame::silent(order));
    }
    let (sym, anti) = reduced_polynomials(&lpc.coeffs);
    let (cp, cq) = (chebyshev_coeffs(&sym), chebyshev_coeffs(&anti));
    let (np, nq) = (cp.len() - 1, cq.len() - 1);

    let mut grid = GRID_PER_ORDER * order.max(1);
    let mut found = 0;
    for _ in 0..=GRID_REFINEMENTS {
        let p_roots = unit_circle_roots(&cp, grid);
        let q_roots = unit_circle_roots(&cq, grid);
        found = p_roots.len() + q_roots.len();
        if p_roots.len() == np && q_roots.len() == nq {
            // P roots sit at the odd (1-based) positions.
            let mut freqs = Vec::with_capacity(order);
            for i in 0..np.max(nq) {
                freqs.extend(p_roots.get(i));
                freqs.extend(q_roots.get(i));
            }
            let frame = LspFrame {
                gain: lpc.gain,
                freqs,
                is_silent: false,
            };
            if frame.is_ordered() {
                return Ok(frame);
            }
        }
        grid *= 8;
    }
    Err(Error::RootIsolationFailure {
        expected: order,
        found,
    })
}

fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn product_of_pairs<'a>(freqs: impl Iterator<Item = &'a f64>) -> Vec<f64> {
    freqs.fold(vec![1.0], |acc, &w| {
        multiply(&acc, &[1.0, -2.0 * w.cos(), 1.0])
    })
}

/// Rebuilds `A(z) = (P(z) + Q(z)) / 2` from the unit-circle root angles.
pub fn lsp_to_lpc(lsp: &LspFrame) -> Result<LpcFrame> {
    let order = lsp.order();
    if lsp.is_silent {
        return Ok(LpcFrame::silent(order));
    }
    if !lsp.is_ordered() {
        return Err(Error::InvalidOrdering);
    }
    let p_prime = product_of_pairs(lsp.freqs.iter().step_by(2));
    let q_prime = product_of_pairs(lsp.freqs.iter().skip(1).step_by(2));
    let (p, q) = if order.is_multiple_of(2) {
        (
            multiply(&p_prime, &[1.0, 1.0]),
            multiply(&q_prime, &[1.0, -1.0]),
        )
    } else {
        (p_prime, multiply(&q_prime, &[1.0, 0.0, -1.0]))
    };
    let coeffs = (1..=order).map(|k| 0.5 * (p[k] + q[k])).collect();
    Ok(LpcFrame {
        gain: lsp.gain,
        coeffs,
        is_silent: false,
    })
}

/// Uniform quantizer on `(0, pi)` with `2^bits` cells. Each frequency moves
/// to its cell centre; collisions are pushed up one cell to keep the frame
/// strictly ordered.
pub fn quantize_lsp(lsp: &LspFrame, bits: u32) -> Result<LspFrame> {
    if lsp.is_silent {
        return Ok(lsp.clone());
    }
    let levels = 1usize
        .checked_shl(bits)
        .filter(|&l| l >= lsp.order() && bits < 32)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{bits} bits cannot hold {} ordered frequencies",
                lsp.order()
            ))
        })?;
    let step = PI / levels as f64;
    let mut cells: Vec<usize> = lsp
        .freqs
        .iter()
        .map(|w| ((w / step).floor() as usize).min(levels - 1))
        .collect();
    for i in 1..cells.len() {
        if cells[i] <= cells[i - 1] {
            cells[i] = cells[i - 1] + 1;
        }
    }
    // walk back down if the top was pushed past the last cell
    let n = cells.len();
    if cells[n - 1] >= levels {
        cells[n - 1] = levels - 1;
        for i in (0..n - 1).rev() {
            if cells[i] >= cells[i + 1] {
                cells[i] = cells[i + 1] - 1;
            }
        }
    }
    Ok(LspFrame {
        gain: lsp.gain,
        freqs: cells.iter().map(|&c| (c as f64 + 0.5) * step).collect(),
        is_silent: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_filter_gives_evenly_spaced_frequencies() {
        for order in 2..=9 {
            let lsp = lpc_to_lsp(&LpcFrame {
                gain: 1.0,
                coeffs: vec![0.0; order],
                is_silent: false,
            })
            .unwrap();
            for (k, w) in lsp.freqs.iter().enumerate() {
                let expected = PI * (k + 1) as f64 / (order + 1) as f64;
                assert!((w - expected).abs() < 1e-10, "order {order}: {w} vs {expected}");
            }
        }
    }

    #[test]
    fn silent_passthrough() {
        let lsp = lpc_to_lsp(&LpcFrame::silent(4)).unwrap();
        assert!(lsp.is_silent);
        assert_eq!(lsp.freqs, vec![0.0; 4]);
        assert!(lsp_to_lpc(&lsp).unwrap().is_silent);
    }

    #[test]
    fn misordered_frequencies_rejected() {
        let lsp = LspFrame {
            gain: 1.0,
            freqs: vec![0.5, 0.4],
            is_silent: false,
        };
        assert!(matches!(lsp_to_lpc(&lsp), Err(Error::InvalidOrdering)));
    }

    #[test]
    fn deflation_recovers_factor() {
        let close = |a: Vec<f64>, b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        let poly = multiply(&[1.0, 0.3, -0.2], &[1.0, 1.0]);
        assert!(close(divide_linear(&poly, 1.0), &[1.0, 0.3, -0.2]));
        let poly = multiply(&[1.0, 0.3, 1.0], &[1.0, 0.0, -1.0]);
        assert!(close(divide_quadratic_minus(&poly), &[1.0, 0.3, 1.0]));
    }

    #[test]
    fn unstable_filter_fails_isolation() {
        // pole pair outside the unit circle
        let lpc = LpcFrame {
            gain: 1.0,
            coeffs: vec![-2.4, 1.44 * 1.2],
            is_silent: false,
        };
        assert!(matches!(
            lpc_to_lsp(&lpc),
            Err(Error::RootIsolationFailure { .. })
        ));
    }

    #[test]
    fn quantizer_keeps_order() {
        let lsp = LspFrame {
            gain: 0.3,
            freqs: vec![0.100, 0.101, 0.102, 3.1],
            is_silent: false,
        };
        let q = quantize_lsp(&lsp, 4).unwrap();
        assert!(q.is_ordered());
        assert_eq!(q.gain, 0.3);
        assert!(quantize_lsp(&lsp, 1).is_err());
    }
}
