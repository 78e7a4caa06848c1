//! Synthetic audiovisual clips.
//!
//! Each clip follows two smooth random trajectories in `[0, 1]`: mouth
//! opening height and width. Every view renders a dark ellipse whose axes
//! follow them, squeezed horizontally by `0.35 + 0.65 cos(angle)` and
//! sheared towards profile. The audio is Gaussian noise through a
//! two-resonance all-pole filter: height sets the lower pole angle and the
//! loudness, width sets the upper pole angle. Frame `i` of the video lines up
//! with analysis frame `i` of a `hop = round(sr / fps)`, `frame_len = 2 hop`
//! grid, and each clip has `(n_frames + 1) * hop` samples so that grid yields
//! exactly `n_frames` feature frames.
//!
//! In [`SynthMode::Split`] views alternate between showing only the width
//! (even positions) and only the height (odd positions), so no single view
//! determines the audio.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::{load_manifest, ClipManifest, ClipRecord, FrameSource, ManifestFile, Split, MANIFEST_VERSION};
use crate::audio::{video_hop, wav::write_wav, AudioSignal};
use crate::error::{Error, Result};
use crate::multiview::ViewId;
use crate::vision::{io::write_pgm, ImageGray};

const TRUTH_MAGIC: &str = "silentspeech-truth 1";
const TRUTH_COLUMNS: [&str; 5] = ["height", "width", "angle_low", "angle_high", "rms"];
const MOUTH_LEVEL: f64 = 35.0;
const IMPULSE_LEN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    #[default]
    Shared,
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_clips: usize,
    pub n_frames: usize,
    pub fps: f64,
    pub sample_rate: u32,
    pub views: Vec<ViewId>,
    pub image_size: usize,
    pub mode: SynthMode,
    /// The last `val_clips` clips are marked for validation.
    pub val_clips: usize,
    /// Frames between trajectory knots.
    pub knot_spacing: usize,
    pub pole_radius: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_clips: 4,
            n_frames: 40,
            fps: 25.0,
            sample_rate: 8000,
            views: vec![ViewId::V1, ViewId::V2],
            image_size: 64,
            mode: SynthMode::Shared,
            val_clips: 0,
            knot_spacing: 6,
            pole_radius: 0.97,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_clips == 0 || self.n_frames == 0 {
            return bad("need at least one clip and one frame");
        }
        if !(self.fps > 0.0) || self.sample_rate == 0 || video_hop(self.sample_rate, self.fps) == 0 {
            return bad("fps and sample rate must give a positive hop");
        }
        if self.views.is_empty() || self.views.windows(2).any(|w| w[0] >= w[1]) {
            return bad("views must be nonempty, distinct and in canonical order");
        }
        if self.mode == SynthMode::Split && self.views.len() < 2 {
            return bad("split mode needs at least two views");
        }
        if self.image_size < 8 {
            return bad("image size must be at least 8");
        }
        if self.val_clips >= self.n_clips {
            return bad("at least one clip must remain for training");
        }
        if self.knot_spacing == 0 || !(self.pole_radius > 0.0 && self.pole_radius < 1.0) {
            return bad("knot spacing must be positive and pole radius inside (0, 1)");
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        video_hop(self.sample_rate, self.fps)
    }
}

/// Lower pole angle for a mouth height.
pub fn angle_low(height: f64) -> f64 {
    0.4 + 0.8 * height
}

/// Upper pole angle for a mouth width.
pub fn angle_high(width: f64) -> f64 {
    1.7 + 0.9 * width
}

/// Target RMS level for a mouth height.
pub fn loudness(height: f64) -> f64 {
    0.04 + 0.08 * height
}

/// Per-frame ground truth of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub height: Vec<f64>,
    pub width: Vec<f64>,
}

impl Truth {
    pub fn len(&self) -> usize {
        self.height.len()
    }

    pub fn is_empty(&self) -> bool {
        self.height.is_empty()
    }

    fn rows(&self) -> impl Iterator<Item = [f64; 5]> + '_ {
        self.height.iter().zip(&self.width).map(|(&h, &w)| [h, w, angle_low(h), angle_high(w), loudness(h)])
    }
}

/// Smooth curve through random knots, cosine-interpolated, in frame units.
struct Trajectory {
    knots: Vec<f64>,
    spacing: f64,
}

impl Trajectory {
    fn random(rng: &mut ChaCha8Rng, n_frames: usize, spacing: usize) -> Self {
        let count = n_frames / spacing + 2;
        Self {
            knots: (0..count).map(|_| rng.random_range(0.1..0.9)).collect(),
            spacing: spacing as f64,
        }
    }

    fn at(&self, s: f64) -> f64 {
        let pos = s.max(0.0) / self.spacing;
        let k = (pos.floor() as usize).min(self.knots.len() - 2);
        let frac = (pos - k as f64).min(1.0);
        let w = 0.5 - 0.5 * (std::f64::consts::PI * frac).cos();
        self.knots[k] * (1.0 - w) + self.knots[k + 1] * w
    }
}

fn filter_coeffs(h: f64, w: f64, r: f64) -> [f64; 4] {
    let (c1, c2) = (-2.0 * r * angle_low(h).cos(), -2.0 * r * angle_high(w).cos());
    let r2 = r * r;
    // (1 + c1 z^-1 + r^2 z^-2)(1 + c2 z^-1 + r^2 z^-2)
    [c1 + c2, 2.0 * r2 + c1 * c2, r2 * (c1 + c2), r2 * r2]
}

/// Output power of the all-pole filter for unit-variance white input.
fn power_gain(a: &[f64; 4]) -> f64 {
    let mut y = [0.0; IMPULSE_LEN];
    let mut energy = 0.0;
    for n in 0..IMPULSE_LEN {
        let mut v = if n == 0 { 1.0 } else { 0.0 };
        for (k, ak) in a.iter().enumerate() {
            if n > k {
                v -= ak * y[n - k - 1];
            }
        }
        y[n] = v;
        energy += v * v;
    }
    energy
}

fn render_audio(spec: &SynthSpec, height: &Trajectory, width: &Trajectory, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let hop = spec.hop();
    let last = (spec.n_frames - 1) as f64;
    let frame_param = |n: usize| (n as f64 / hop as f64 - 1.0).clamp(0.0, last);
    // excitation scale at each frame, linearly interpolated between frames
    let scale: Vec<f64> = (0..spec.n_frames)
        .map(|i| {
            let (h, w) = (height.at(i as f64), width.at(i as f64));
            loudness(h) / power_gain(&filter_coeffs(h, w, spec.pole_radius)).sqrt()
        })
        .collect();
    let len = (spec.n_frames + 1) * hop;
    let mut y = vec![0.0; len];
    for n in 0..len {
        let s = frame_param(n);
        let a = filter_coeffs(height.at(s), width.at(s), spec.pole_radius);
        let k = (s.floor() as usize).min(spec.n_frames - 1);
        let g = if k + 1 < spec.n_frames {
            let f = s - k as f64;
            scale[k] * (1.0 - f) + scale[k + 1] * f
        } else {
            scale[k]
        };
        let e: f64 = StandardNormal.sample(rng);
        let mut v = g * e;
        for (j, aj) in a.iter().enumerate() {
            if n > j {
                v -= aj * y[n - j - 1];
            }
        }
        y[n] = v;
    }
    y
}

/// Draws a mouth for one view. `height`/`width` are the values the view shows.
pub fn render_mouth(size: usize, view: ViewId, height: f64, width: f64) -> ImageGray {
    let s = size as f64;
    let theta = view.angle().to_radians();
    let squeeze = 0.35 + 0.65 * theta.cos();
    let ax = s * (0.12 + 0.22 * width) * squeeze;
    let ay = s * (0.04 + 0.22 * height);
    let (cx, cy) = (s * (0.5 + 0.12 * theta.sin()), s * 0.55);
    let shear = 0.15 * theta.sin();
    let edge = ax.min(ay);
    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let skin = 160.0 + 50.0 * (px / s - 0.5) * theta.sin() - 30.0 * (py / s - 0.5);
            let dy = py - cy;
            let dx = px - cx - shear * dy;
            let r = ((dx / ax).powi(2) + (dy / ay).powi(2)).sqrt();
            let t = ((r - 1.0) * edge + 0.5).clamp(0.0, 1.0);
            let v = MOUTH_LEVEL + (skin - MOUTH_LEVEL) * t;
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    ImageGray::new(size, size, pixels).expect("sized")
}

pub fn write_truth(path: &Path, truth: &Truth) -> Result<()> {
    let mut out = format!(
        "{TRUTH_MAGIC}\nframes {}\ncolumns {}\n%%\n",
        truth.len(),
        TRUTH_COLUMNS.join(" ")
    )
    .into_bytes();
    for row in truth.rows() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a truth sidecar back; only the height and width columns are kept,
/// the rest are functions of them.
pub fn read_truth(path: &Path) -> Result<Truth> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let marker = b"\n%%\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::Format("truth header not terminated".into()))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Format("truth header is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some(TRUTH_MAGIC) {
        return Err(Error::Format("not a truth file".into()));
    }
    let frames: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("frames "))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| Error::Format("truth frame count missing".into()))?;
    let cols = TRUTH_COLUMNS.len();
    let body = &bytes[split + marker.len()..];
    if body.len() != frames * cols * 8 {
        return Err(Error::Format(format!(
            "truth body has {} bytes, expected {}",
            body.len(),
            frames * cols * 8
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Truth {
        height: values.chunks(cols).map(|r| r[0]).collect(),
        width: values.chunks(cols).map(|r| r[1]).collect(),
    })
}

/// Name of clip `index` and its truth sidecar location under `root`.
pub fn clip_name(index: usize) -> String {
    format!("clip{index:03}")
}

pub fn truth_path(root: &Path, clip_id: &str) -> PathBuf {
    root.join(clip_id).join("truth.bin")
}

/// Writes `spec.n_clips` clips plus `manifest.toml` under `out` and returns
/// the manifest path and the loaded manifest entries.
pub fn synth_dataset(seed: u64, spec: &SynthSpec, out: &Path) -> Result<(PathBuf, Vec<ClipManifest>)> {
    spec.validate()?;
    fs::create_dir_all(out)?;
    let mut records = Vec::with_capacity(spec.n_clips);
    for c in 0..spec.n_clips {
        let id = clip_name(c);
        let dir = out.join(&id);
        fs::create_dir_all(&dir)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let height = Trajectory::random(&mut rng, spec.n_frames, spec.knot_spacing);
        let width = Trajectory::random(&mut rng, spec.n_frames, spec.knot_spacing);

        let truth = Truth {
            height: (0..spec.n_frames).map(|i| height.at(i as f64)).collect(),
            width: (0..spec.n_frames).map(|i| width.at(i as f64)).collect(),
        };
        let mut views = std::collections::BTreeMap::new();
        for (pos, &view) in spec.views.iter().enumerate() {
            let vdir = dir.join(view.to_string());
            fs::create_dir_all(&vdir)?;
            for i in 0..spec.n_frames {
                let (h, w) = match (spec.mode, pos % 2) {
                    (SynthMode::Split, 0) => (0.5, truth.width[i]),
                    (SynthMode::Split, _) => (truth.height[i], 0.5),
                    (SynthMode::Shared, _) => (truth.height[i], truth.width[i]),
                };
                write_pgm(vdir.join(format!("frame_{i:04}.pgm")), &render_mouth(spec.image_size, view, h, w))?;
            }
            views.insert(view, FrameSource::Directory(PathBuf::from(&id).join(view.to_string())));
        }

        let samples = render_audio(spec, &height, &width, &mut rng);
        write_wav(dir.join("audio.wav"), &AudioSignal::new(samples, spec.sample_rate)?)?;
        write_truth(&truth_path(out, &id), &truth)?;

        records.push(ClipRecord {
            id: id.clone(),
            speaker: "synthetic".into(),
            fps: spec.fps,
            audio: PathBuf::from(&id).join("audio.wav"),
            split: if c >= spec.n_clips - spec.val_clips {
                Split::Val
            } else {
                Split::Train
            },
            views,
        });
    }
    let manifest = ManifestFile {
        format_version: MANIFEST_VERSION,
        clips: records,
    };
    let path = out.join("manifest.toml");
    let mut f = fs::File::create(&path)?;
    f.write_all(toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?.as_bytes())?;
    drop(f);
    let clips = load_manifest(&path)?;
    Ok((path, clips))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{analyze, wav::read_wav, AnalysisConfig};
    use crate::dataset::{align, LeadingFrames};

    fn small_spec() -> SynthSpec {
        SynthSpec {
            n_clips: 2,
            n_frames: 12,
            image_size: 16,
            ..SynthSpec::default()
        }
    }

    fn dir_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        synth_dataset(7, &small_spec(), a.path()).unwrap();
        synth_dataset(7, &small_spec(), b.path()).unwrap();
        assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
        let c = tempfile::tempdir().unwrap();
        synth_dataset(8, &small_spec(), c.path()).unwrap();
        assert_ne!(dir_bytes(a.path()), dir_bytes(c.path()));
    }

    #[test]
    fn clips_align_without_trailing_drops() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec();
        let (_, clips) = synth_dataset(1, &spec, dir.path()).unwrap();
        assert_eq!(clips.len(), 2);
        for clip in &clips {
            let audio = read_wav(&clip.audio).unwrap();
            let track = analyze(&audio, &AnalysisConfig::for_video(spec.sample_rate, spec.fps, 4)).unwrap();
            let a = align(clip, &track, 5, LeadingFrames::Drop).unwrap();
            assert_eq!(a.windows.len(), spec.n_frames - 4);
            assert_eq!(a.dropped_trailing, 0);
            let truth = read_truth(&truth_path(dir.path(), &clip.clip_id)).unwrap();
            assert_eq!(truth.len(), spec.n_frames);
        }
    }

    #[test]
    fn split_mode_hides_one_trajectory_per_view() {
        let spec = SynthSpec {
            mode: SynthMode::Split,
            ..small_spec()
        };
        let dir = tempfile::tempdir().unwrap();
        synth_dataset(3, &spec, dir.path()).unwrap();
        let v1 = dir.path().join("clip000/V1");
        let frames: Vec<Vec<u8>> = (0..spec.n_frames)
            .map(|i| fs::read(v1.join(format!("frame_{i:04}.pgm"))).unwrap())
            .collect();
        let truth = read_truth(&truth_path(dir.path(), "clip000")).unwrap();
        // view 1 depends on width only
        let a = render_mouth(16, ViewId::V1, 0.5, truth.width[3]);
        assert_eq!(crate::vision::io::encode_pgm(&a), frames[3]);
    }

    #[test]
    fn bigger_mouth_darker_image() {
        let dark = |img: &ImageGray| img.pixels().iter().filter(|&&p| p < 80).count();
        let small = render_mouth(64, ViewId::V1, 0.1, 0.1);
        let big = render_mouth(64, ViewId::V1, 0.9, 0.9);
        assert!(dark(&big) > 2 * dark(&small));
        let profile = render_mouth(64, ViewId::V5, 0.9, 0.9);
        assert!(dark(&profile) < dark(&big));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small_spec();
        s.val_clips = 2;
        assert!(s.validate().is_err());
        let s = SynthSpec {
            mode: SynthMode::Split,
            views: vec![ViewId::V1],
            ..small_spec()
        };
        assert!(s.validate().is_err());
    }
}
