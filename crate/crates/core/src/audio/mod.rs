//! Short-time LPC analysis and resynthesis of speech.
//!
//! A signal is pre-emphasised, cut into overlapping windowed frames, and each
//! frame is summarised by an all-pole model `1/A(z)` whose coefficients are
//! carried as line spectral pairs. The frame grid is tied to the video frame
//! rate so one feature frame lines up with one video frame.

mod analysis;
mod frame;
mod lpc;
mod lsp;
pub mod track_io;
pub mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use analysis::{analyze, residual, synthesize, Excitation};
pub use frame::{frame_count, frame_signal, pre_emphasize, window_coefficients};
pub use lpc::{autocorrelate, levinson_durbin, levinson_durbin_with, LevinsonOutput};
pub use lsp::{lpc_to_lsp, lsp_to_lpc, quantize_lsp};

/// Frames with `r[0]` at or below this are treated as digital silence.
pub const SILENCE_THRESHOLD: f64 = 1e-9;

/// Mono audio with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio signal"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hamming,
    Hann,
    Rectangular,
}

/// Parameters of the short-time analysis grid and the LPC model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub lpc_order: usize,
    pub pre_emphasis: f64,
    pub window: Window,
    /// Optional uniform LSP quantizer, in bits per frequency.
    pub lsp_quant_bits: Option<u32>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self::for_video(16_000, 30.0, 16)
    }
}

impl AnalysisConfig {
    /// Grid with one analysis frame per video frame: `hop = round(sr / fps)`,
    /// `frame_len = 2 * hop`, Hamming window, pre-emphasis 0.97.
    pub fn for_video(sample_rate: u32, fps: f64, lpc_order: usize) -> Self {
        let hop = video_hop(sample_rate, fps);
        Self {
            frame_len: 2 * hop,
            hop,
            lpc_order,
            pre_emphasis: 0.97,
            window: Window::Hamming,
            lsp_quant_bits: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "hop {} must be in 1..={}",
                self.hop, self.frame_len
            )));
        }
        if self.lpc_order < 2 || self.lpc_order >= self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "lpc order {} must be in 2..{}",
                self.lpc_order, self.frame_len
            )));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(Error::InvalidConfig(format!(
                "pre-emphasis {} outside [0, 1)",
                self.pre_emphasis
            )));
        }
        Ok(())
    }

    /// Sum of squared window coefficients.
    pub fn window_energy(&self) -> f64 {
        window_coefficients(self.window, self.frame_len)
            .iter()
            .map(|w| w * w)
            .sum()
    }
}

/// Samples per video frame.
pub fn video_hop(sample_rate: u32, fps: f64) -> usize {
    (sample_rate as f64 / fps).round() as usize
}

/// All-pole model of one frame: `A(z) = 1 + sum_k coeffs[k-1] z^-k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcFrame {
    pub gain: f64,
    pub coeffs: Vec<f64>,
    pub is_silent: bool,
}

impl LpcFrame {
    pub fn silent(order: usize) -> Self {
        Self {
            gain: 0.0,
            coeffs: vec![0.0; order],
            is_silent: true,
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `[1, a_1, ..., a_P]`.
    pub fn polynomial(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.coeffs.iter().copied()).collect()
    }
}

/// Line-spectral-pair form of an [`LpcFrame`]. Silent frames carry zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct LspFrame {
    pub gain: f64,
    pub freqs: Vec<f64>,
    pub is_silent: bool,
}

impl LspFrame {
    pub fn silent(order: usize) -> Self {
        Self {
            gain: 0.0,
            freqs: vec![0.0; order],
            is_silent: true,
        }
    }

    pub fn order(&self) -> usize {
        self.freqs.len()
    }

    /// True when the frequencies are strictly increasing inside `(0, pi)`.
    pub fn is_ordered(&self) -> bool {
        let f = &self.freqs;
        !f.is_empty()
            && f[0] > 0.0
            && f[f.len() - 1] < std::f64::consts::PI
            && f.windows(2).all(|w| w[0] < w[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    pub frames: Vec<LspFrame>,
    pub config: AnalysisConfig,
    pub sample_rate: u32,
}

impl FeatureTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn order(&self) -> usize {
        self.config.lpc_order
    }

    /// Checks the per-frame ordering invariant and the order of every frame.
    pub fn validate(&self) -> Result<()> {
        for frame in &self.frames {
            if frame.order() != self.config.lpc_order {
                return Err(Error::TrackMismatch(format!(
                    "frame of order {} in a track of order {}",
                    frame.order(),
                    self.config.lpc_order
                )));
            }
            if !frame.is_silent && !frame.is_ordered() {
                return Err(Error::InvalidOrdering);
            }
        }
        Ok(())
    }
}
