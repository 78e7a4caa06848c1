use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::frame::{frame_count, frame_signal, pre_emphasize};
use super::lpc::{autocorrelate, levinson_durbin};
use super::lsp::{lpc_to_lsp, lsp_to_lpc, quantize_lsp};
use super::{AnalysisConfig, AudioSignal, FeatureTrack, LpcFrame};
use crate::error::{Error, Result};

/// Source signal driven through the all-pole synthesis filters.
#[derive(Debug, Clone)]
pub enum Excitation {
    /// Unit-variance Gaussian noise, scaled per frame so its windowed energy
    /// matches the frame's prediction error.
    WhiteNoise(u64),
    /// A residual in the pre-emphasised domain, used as is.
    Provided(AudioSignal),
}

pub fn analyze(signal: &AudioSignal, config: &AnalysisConfig) -> Result<FeatureTrack> {
    let frames = frame_signal(signal, config)?;
    let lsp_frames = frames
        .iter()
        .map(|frame| {
            let lpc = levinson_durbin(&autocorrelate(frame, config.lpc_order)).frame;
            let lsp = lpc_to_lsp(&lpc)?;
            match config.lsp_quant_bits {
                Some(bits) => quantize_lsp(&lsp, bits),
                None => Ok(lsp),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureTrack {
        frames: lsp_frames,
        config: config.clone(),
        sample_rate: signal.sample_rate(),
    })
}

/// Frame `f` owns the hop-long segment centred in its analysis window. The
/// first and last frames also own the leading and trailing samples, so the
/// segments tile `0..len`.
fn segment_bounds(frames: usize, len: usize, config: &AnalysisConfig) -> Vec<(usize, usize)> {
    let offset = (config.frame_len - config.hop) / 2;
    (0..frames)
        .map(|f| {
            let start = if f == 0 { 0 } else { offset + f * config.hop };
            let end = if f + 1 == frames {
                len
            } else {
                offset + (f + 1) * config.hop
            };
            (start, end)
        })
        .collect()
}

fn track_lpc(track: &FeatureTrack) -> Result<Vec<LpcFrame>> {
    track.frames.iter().map(lsp_to_lpc).collect()
}

fn check_grid(len: usize, track: &FeatureTrack) -> Result<()> {
    track.config.validate()?;
    let expected = frame_count(len, &track.config);
    if expected != Some(track.len()) || track.is_empty() {
        return Err(Error::GridMismatch(format!(
            "{len} samples give {expected:?} frames, track has {}",
            track.len()
        )));
    }
    Ok(())
}

/// Inverse filters the pre-emphasised signal: `e[n] = x[n] + sum a_k x[n-k]`,
/// each hop segment with its own frame's coefficients. Silent frames yield
/// zeros.
pub fn residual(signal: &AudioSignal, track: &FeatureTrack) -> Result<AudioSignal> {
    check_grid(signal.len(), track)?;
    let x = pre_emphasize(signal.samples(), track.config.pre_emphasis);
    let lpc = track_lpc(track)?;
    let mut out = vec![0.0; x.len()];
    for ((start, end), frame) in segment_bounds(lpc.len(), x.len(), &track.config)
        .into_iter()
        .zip(&lpc)
    {
        if frame.is_silent {
            continue;
        }
        for n in start..end {
            let mut e = x[n];
            for (k, a) in frame.coeffs.iter().enumerate() {
                if n > k {
                    e += a * x[n - k - 1];
                }
            }
            out[n] = e;
        }
    }
    AudioSignal::new(out, signal.sample_rate())
}

/// Drives the excitation through `1/A(z)` frame by frame, carrying the filter
/// state across segment boundaries, then undoes the pre-emphasis and clips
/// to `[-1, 1]`.
pub fn synthesize(track: &FeatureTrack, excitation: &Excitation) -> Result<AudioSignal> {
    track.config.validate()?;
    track.validate()?;
    let config = &track.config;
    let lpc = track_lpc(track)?;
    let len = match excitation {
        Excitation::Provided(e) => {
            check_grid(e.len(), track)?;
            e.len()
        }
        Excitation::WhiteNoise(_) => {
            if track.is_empty() {
                return Err(Error::GridMismatch("empty track".into()));
            }
            (track.len() - 1) * config.hop + config.frame_len
        }
    };
    let segments = segment_bounds(lpc.len(), len, config);

    let drive: Vec<f64> = match excitation {
        Excitation::Provided(e) => e.samples().to_vec(),
        Excitation::WhiteNoise(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let norm = config.window_energy().sqrt();
            let mut drive = vec![0.0; len];
            for ((start, end), frame) in segments.iter().zip(&lpc) {
                let scale = if frame.is_silent { 0.0 } else { frame.gain / norm };
                for slot in &mut drive[*start..*end] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *slot = scale * z;
                }
            }
            drive
        }
    };

    let mut y = vec![0.0; len];
    for ((start, end), frame) in segments.iter().zip(&lpc) {
        for n in *start..*end {
            let mut v = drive[n];
            for (k, a) in frame.coeffs.iter().enumerate() {
                if n > k {
                    v -= a * y[n - k - 1];
                }
            }
            y[n] = v;
        }
    }

    let c = config.pre_emphasis;
    let mut prev = 0.0;
    let out = y
        .iter()
        .map(|&v| {
            prev = v + c * prev;
            prev.clamp(-1.0, 1.0)
        })
        .collect();
    AudioSignal::new(out, track.sample_rate)
}
