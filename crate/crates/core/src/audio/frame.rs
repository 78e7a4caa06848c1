use std::f64::consts::PI;

use super::{AnalysisConfig, AudioSignal, Window};
use crate::error::{Error, Result};

/// `y[n] = x[n] - c * x[n-1]` with `x[-1] = 0`.
pub fn pre_emphasize(samples: &[f64], coeff: f64) -> Vec<f64> {
    let mut prev = 0.0;
    samples
        .iter()
        .map(|&x| {
            let y = x - coeff * prev;
            prev = x;
            y
        })
        .collect()
}

pub fn window_coefficients(window: Window, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let phase = 2.0 * PI * n as f64 / denom;
            match window {
                Window::Hamming => 0.54 - 0.46 * phase.cos(),
                Window::Hann => 0.5 - 0.5 * phase.cos(),
                Window::Rectangular => 1.0,
            }
        })
        .collect()
}

/// Number of full frames in a signal of `len` samples, or `None` if it is
/// shorter than one frame.
pub fn frame_count(len: usize, config: &AnalysisConfig) -> Option<usize> {
    (len >= config.frame_len).then(|| (len - config.frame_len) / config.hop + 1)
}

/// Pre-emphasises the whole signal, then cuts it into windowed frames.
pub fn frame_signal(signal: &AudioSignal, config: &AnalysisConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let count = frame_count(signal.len(), config).ok_or(Error::SignalTooShort {
        len: signal.len(),
        needed: config.frame_len,
    })?;
    let emphasized = pre_emphasize(signal.samples(), config.pre_emphasis);
    let window = window_coefficients(config.window, config.frame_len);
    Ok((0..count)
        .map(|f| {
            let start = f * config.hop;
            emphasized[start..start + config.frame_len]
                .iter()
                .zip(&window)
                .map(|(x, w)| x * w)
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(frame_len: usize, hop: usize, window: Window, pre: f64) -> AnalysisConfig {
        AnalysisConfig {
            frame_len,
            hop,
            lpc_order: 2,
            pre_emphasis: pre,
            window,
            lsp_quant_bits: None,
        }
    }

    #[test]
    fn frame_count_formula() {
        let sig = AudioSignal::new(vec![0.1; 480], 8000).unwrap();
        let frames = frame_signal(&sig, &cfg(240, 80, Window::Hamming, 0.97)).unwrap();
        assert_eq!(frames.len(), 4);
        assert!(frames.iter().all(|f| f.len() == 240));
    }

    #[test]
    fn constant_signal_rectangular_frames_identical() {
        let sig = AudioSignal::new(vec![0.25; 1000], 8000).unwrap();
        let frames = frame_signal(&sig, &cfg(100, 37, Window::Rectangular, 0.0)).unwrap();
        assert!(frames.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn hamming_on_ones_is_the_window() {
        let len = 201;
        let sig = AudioSignal::new(vec![1.0; len], 8000).unwrap();
        let frames = frame_signal(&sig, &cfg(len, len, Window::Hamming, 0.0)).unwrap();
        let frame = &frames[0];
        for (n, &v) in frame.iter().enumerate() {
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos();
            assert!((v - w).abs() < 1e-15);
        }
        assert!((frame[100] - 1.0).abs() < 1e-12);
        assert!((frame[0] - 0.08).abs() < 1e-12);
        assert!((frame[len - 1] - 0.08).abs() < 1e-12);
    }

    #[test]
    fn pre_emphasis_applied_before_window() {
        let sig = AudioSignal::new(vec![1.0; 10], 8000).unwrap();
        let frames = frame_signal(&sig, &cfg(10, 10, Window::Rectangular, 0.5)).unwrap();
        assert_eq!(frames[0][0], 1.0);
        assert!(frames[0][1..].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn too_short_signal() {
        let sig = AudioSignal::new(vec![0.0; 100], 8000).unwrap();
        let err = frame_signal(&sig, &cfg(240, 80, Window::Hann, 0.0)).unwrap_err();
        assert!(matches!(err, Error::SignalTooShort { len: 100, needed: 240 }));
    }
}
