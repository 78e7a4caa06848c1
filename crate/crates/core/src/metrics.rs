//! Objective quality measures: segmental SNR, log-spectral distance, LSP
//! trajectory correlation, and an adapter for an external PESQ tool.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::audio::{analyze, autocorrelate, frame_signal, levinson_durbin, AnalysisConfig, AudioSignal, FeatureTrack, LpcFrame};
use crate::error::{Error, Result};
use crate::nn::pearson;

pub const SNR_FLOOR_DB: f64 = -10.0;
pub const SNR_CEILING_DB: f64 = 35.0;
pub const ENVELOPE_POINTS: usize = 256;
pub const PESQ_RANGE: (f64, f64) = (-0.5, 4.5);
/// Mean-square level below which a reference frame is treated as silent.
const SILENT_FRAME_POWER: f64 = 1e-10;
/// Envelope magnitudes are floored here before taking logs.
const ENVELOPE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegSnrOptions {
    pub frame_len: usize,
    pub hop: usize,
    /// Frames dropped at each end before averaging.
    pub skip_edge_frames: usize,
}

impl SegSnrOptions {
    /// Non-overlapping 20 ms frames.
    pub fn for_rate(sample_rate: u32) -> Self {
        let frame_len = ((sample_rate as f64 * 0.02).round() as usize).max(1);
        Self {
            frame_len,
            hop: frame_len,
            skip_edge_frames: 0,
        }
    }
}

fn check_pair(reference: &AudioSignal, test: &AudioSignal) -> Result<()> {
    if reference.len() != test.len() {
        return Err(Error::LengthMismatch(reference.len(), test.len()));
    }
    if reference.sample_rate() != test.sample_rate() {
        return Err(Error::InvalidConfig(format!(
            "sample rates differ ({} vs {})",
            reference.sample_rate(),
            test.sample_rate()
        )));
    }
    Ok(())
}

pub fn segmental_snr(reference: &AudioSignal, test: &AudioSignal) -> Result<f64> {
    segmental_snr_with(reference, test, &SegSnrOptions::for_rate(reference.sample_rate()))
}

/// Mean over non-silent reference frames of
/// `10 log10(sum ref^2 / sum (ref - test)^2)`, each clamped to `[-10, 35]` dB.
pub fn segmental_snr_with(reference: &AudioSignal, test: &AudioSignal, opts: &SegSnrOptions) -> Result<f64> {
    check_pair(reference, test)?;
    if opts.frame_len == 0 || opts.hop == 0 {
        return Err(Error::InvalidConfig("frame length and hop must be positive".into()));
    }
    let (r, t) = (reference.samples(), test.samples());
    let count = if r.len() >= opts.frame_len {
        (r.len() - opts.frame_len) / opts.hop + 1
    } else {
        0
    };
    let mut total = 0.0;
    let mut used = 0usize;
    let skip = opts.skip_edge_frames;
    for f in skip..count.saturating_sub(skip) {
        let span = f * opts.hop..f * opts.hop + opts.frame_len;
        let signal: f64 = r[span.clone()].iter().map(|x| x * x).sum();
        if signal / (opts.frame_len as f64) < SILENT_FRAME_POWER {
            continue;
        }
        let noise: f64 = r[span.clone()].iter().zip(&t[span]).map(|(a, b)| (a - b) * (a - b)).sum();
        let db = if noise == 0.0 {
            SNR_CEILING_DB
        } else {
            10.0 * (signal / noise).log10()
        };
        total += db.clamp(SNR_FLOOR_DB, SNR_CEILING_DB);
        used += 1;
    }
    if used == 0 {
        return Err(Error::SilentReference);
    }
    Ok(total / used as f64)
}

/// `20 log10 |gain / A(e^{jw})|` at `ENVELOPE_POINTS` frequencies `pi k / N`.
pub fn log_envelope(frame: &LpcFrame) -> Vec<f64> {
    (0..ENVELOPE_POINTS)
        .map(|k| {
            let w = PI * k as f64 / ENVELOPE_POINTS as f64;
            let (mut re, mut im) = (1.0, 0.0);
            for (i, a) in frame.coeffs.iter().enumerate() {
                let phase = w * (i + 1) as f64;
                re += a * phase.cos();
                im -= a * phase.sin();
            }
            let mag = frame.gain / (re * re + im * im).sqrt();
            20.0 * mag.max(ENVELOPE_FLOOR).log10()
        })
        .collect()
}

fn lpc_frames(signal: &AudioSignal, analysis: &AnalysisConfig) -> Result<Vec<LpcFrame>> {
    Ok(frame_signal(signal, analysis)?
        .iter()
        .map(|f| levinson_durbin(&autocorrelate(f, analysis.lpc_order)).frame)
        .collect())
}

/// Frame-averaged RMS difference of the two signals' LPC log envelopes, in
/// dB, over frames where either signal is non-silent. Identical all-silent
/// signals score 0.
pub fn log_spectral_distance(reference: &AudioSignal, test: &AudioSignal, analysis: &AnalysisConfig) -> Result<f64> {
    check_pair(reference, test)?;
    let (a, b) = (lpc_frames(reference, analysis)?, lpc_frames(test, analysis)?);
    let mut total = 0.0;
    let mut used = 0usize;
    for (fa, fb) in a.iter().zip(&b) {
        if fa.is_silent && fb.is_silent {
            continue;
        }
        let (ea, eb) = (log_envelope(fa), log_envelope(fb));
        let ms = ea.iter().zip(&eb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / ENVELOPE_POINTS as f64;
        total += ms.sqrt();
        used += 1;
    }
    Ok(if used == 0 { 0.0 } else { total / used as f64 })
}

/// Pearson correlation over time for each LSP dimension, averaged over
/// dimensions. Constant dimensions contribute 0.
pub fn lsp_trajectory_correlation(reference: &FeatureTrack, predicted: &FeatureTrack) -> Result<f64> {
    if reference.len() != predicted.len() || reference.order() != predicted.order() {
        return Err(Error::TrackMismatch(format!(
            "{} frames of order {} vs {} frames of order {}",
            reference.len(),
            reference.order(),
            predicted.len(),
            predicted.order()
        )));
    }
    let p = reference.order();
    if p == 0 || reference.is_empty() {
        return Err(Error::TrackMismatch("empty tracks".into()));
    }
    let column = |t: &FeatureTrack, d: usize| t.frames.iter().map(|f| f.freqs[d]).collect::<Vec<_>>();
    let sum: f64 = (0..p)
        .map(|d| pearson(&column(reference, d), &column(predicted, d)).unwrap_or(0.0))
        .sum();
    Ok(sum / p as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PesqMode {
    Narrowband,
    Wideband,
}

impl PesqMode {
    fn flag(self) -> &'static str {
        match self {
            PesqMode::Narrowband => "--mode=nb",
            PesqMode::Wideband => "--mode=wb",
        }
    }
}

/// An external PESQ executable, called as `tool REF TEST --mode=nb|wb`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesqTool {
    pub path: PathBuf,
    pub mode: PesqMode,
}

fn parse_pesq_output(stdout: &str) -> Option<f64> {
    let tagged = stdout.lines().find_map(|line| {
        let rest = line.trim().strip_prefix("PESQ_MOS")?;
        rest.trim_start().strip_prefix('=')?.trim().parse::<f64>().ok()
    });
    tagged.or_else(|| stdout.lines().rev().find(|l| !l.trim().is_empty())?.trim().parse().ok())
}

/// Runs the tool and returns its score. A missing tool gives `Ok(None)`; a
/// tool that runs but fails or prints no valid score is a `ToolFailure`.
pub fn external_pesq(reference: &Path, test: &Path, tool: &PesqTool) -> Result<Option<f64>> {
    let output = match Command::new(&tool.path).arg(reference).arg(test).arg(tool.mode.flag()).output() {
        Ok(o) => o,
        Err(e) if matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied) => {
            return Ok(None)
        }
        Err(e) => return Err(e.into()),
    };
    if !output.status.success() {
        return Err(Error::ToolFailure(format!(
            "{} exited with {}",
            tool.path.display(),
            output.status
        )));
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let score = parse_pesq_output(&stdout)
        .ok_or_else(|| Error::ToolFailure(format!("unparseable output {:?}", stdout.trim())))?;
    if !(PESQ_RANGE.0..=PESQ_RANGE.1).contains(&score) {
        return Err(Error::ToolFailure(format!("score {score} outside [-0.5, 4.5]")));
    }
    Ok(Some(score))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub seg_snr: f64,
    pub lsd: f64,
    pub lsp_corr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pesq: Option<f64>,
}

/// All proxies for one reference/test pair. LSP correlation compares the
/// two signals' analyses on the given grid.
pub fn quality_report(reference: &AudioSignal, test: &AudioSignal, analysis: &AnalysisConfig, pesq: Option<f64>) -> Result<QualityReport> {
    if let Some(p) = pesq {
        if !(PESQ_RANGE.0..=PESQ_RANGE.1).contains(&p) {
            return Err(Error::InvalidConfig(format!("PESQ {p} outside [-0.5, 4.5]")));
        }
    }
    Ok(QualityReport {
        seg_snr: segmental_snr(reference, test)?,
        lsd: log_spectral_distance(reference, test, analysis)?,
        lsp_corr: lsp_trajectory_correlation(&analyze(reference, analysis)?, &analyze(test, analysis)?)?,
        pesq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::LspFrame;

    fn tone(n: usize) -> AudioSignal {
        AudioSignal::new((0..n).map(|i| 0.3 * (i as f64 * 0.07).sin() + 0.1 * (i as f64 * 0.31).cos()).collect(), 8000).unwrap()
    }

    #[test]
    fn snr_identity_and_zero() {
        let x = tone(1600);
        assert_eq!(segmental_snr(&x, &x).unwrap(), SNR_CEILING_DB);
        let z = AudioSignal::silence(1600, 8000).unwrap();
        assert!(segmental_snr(&x, &z).unwrap().abs() < 1e-12);
        assert!(matches!(segmental_snr(&z, &x), Err(Error::SilentReference)));
        assert!(matches!(segmental_snr(&x, &tone(1500)), Err(Error::LengthMismatch(1600, 1500))));
    }

    #[test]
    fn lsd_identity_and_scale() {
        let x = tone(1600);
        let cfg = AnalysisConfig::for_video(8000, 25.0, 4);
        assert_eq!(log_spectral_distance(&x, &x, &cfg).unwrap(), 0.0);
        let y = AudioSignal::new(x.samples().iter().map(|v| 2.0 * v).collect(), 8000).unwrap();
        let d = log_spectral_distance(&x, &y, &cfg).unwrap();
        assert!((d - 20.0 * 2f64.log10()).abs() < 1e-9, "{d}");
    }

    #[test]
    fn flat_envelope_level() {
        let env = log_envelope(&LpcFrame {
            gain: 0.1,
            coeffs: vec![0.0; 3],
            is_silent: false,
        });
        assert!(env.iter().all(|v| (v + 20.0).abs() < 1e-12));
    }

    #[test]
    fn correlation_checks_tracks() {
        let cfg = AnalysisConfig::for_video(8000, 25.0, 2);
        let mk = |n: usize| FeatureTrack {
            frames: (0..n)
                .map(|i| LspFrame {
                    gain: 1.0,
                    freqs: vec![0.5 + 0.01 * i as f64, 2.0 - 0.02 * (i * i) as f64 / 100.0],
                    is_silent: false,
                })
                .collect(),
            config: cfg.clone(),
            sample_rate: 8000,
        };
        let a = mk(10);
        assert!((lsp_trajectory_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(lsp_trajectory_correlation(&a, &mk(9)), Err(Error::TrackMismatch(_))));
    }

    #[test]
    fn pesq_output_parsing() {
        assert_eq!(parse_pesq_output("noise\nPESQ_MOS = 2.5291\n"), Some(2.5291));
        assert_eq!(parse_pesq_output("running\n1.25\n\n"), Some(1.25));
        assert_eq!(parse_pesq_output("nothing here"), None);
    }

    #[test]
    fn absent_tool_is_none() {
        let tool = PesqTool {
            path: PathBuf::from("/nonexistent/pesq-tool"),
            mode: PesqMode::Narrowband,
        };
        assert_eq!(external_pesq(Path::new("a.wav"), Path::new("b.wav"), &tool).unwrap(), None);
    }
}
