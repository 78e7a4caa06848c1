//! Clip manifests, frame/feature alignment, batching and synthetic data.

mod manifest;
pub mod synth;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{analyze, video_hop, wav::read_wav, AnalysisConfig, AudioSignal, FeatureTrack};
use crate::error::{Error, Result};
use crate::multiview::ViewId;
use crate::nn::Tensor;
use crate::vision::{io::read_frame, preprocess_frame, ClaheConfig};

pub use manifest::{
    load_manifest, parse_manifest, ClipManifest, ClipRecord, FrameSource, ManifestFile, Split,
    MANIFEST_VERSION,
};
pub use synth::{read_truth, synth_dataset, SynthMode, SynthSpec, Truth};

/// `T` consecutive frames of one clip and the feature frame they predict.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleWindow {
    pub clip_id: String,
    pub target_index: usize,
    /// Frame indices, oldest first; the last is the target frame.
    pub frame_indices: Vec<usize>,
}

/// What to do with target frames that have fewer than `T - 1` predecessors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadingFrames {
    #[default]
    Drop,
    /// Repeat frame 0 to fill the window.
    PadFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub windows: Vec<SampleWindow>,
    pub dropped_leading: usize,
    /// Video frames with no feature frame to pair with.
    pub dropped_trailing: usize,
}

/// Pairs video frame `i` with feature frame `i` and builds one window per
/// usable target. The feature grid must use `hop = round(sample_rate / fps)`.
pub fn align(
    clip: &ClipManifest,
    track: &FeatureTrack,
    timesteps: usize,
    leading: LeadingFrames,
) -> Result<Alignment> {
    if timesteps == 0 {
        return Err(Error::InvalidConfig("timesteps must be at least 1".into()));
    }
    let expected = video_hop(track.sample_rate, clip.fps);
    if track.config.hop != expected {
        return Err(Error::GridMismatch(format!(
            "clip {}: hop {} but {} Hz at {} fps needs {expected}",
            clip.clip_id, track.config.hop, track.sample_rate, clip.fps
        )));
    }
    let n = clip.frame_count();
    let usable = n.min(track.len());
    let first = match leading {
        LeadingFrames::Drop => timesteps - 1,
        LeadingFrames::PadFirst => 0,
    };
    if n < timesteps && leading == LeadingFrames::Drop {
        log::warn!(
            "clip {} has {n} frames, fewer than the {timesteps}-frame window",
            clip.clip_id
        );
    }
    let windows: Vec<SampleWindow> = (first..usable)
        .map(|i| SampleWindow {
            clip_id: clip.clip_id.clone(),
            target_index: i,
            frame_indices: (0..timesteps)
                .map(|k| (i + k).saturating_sub(timesteps - 1))
                .collect(),
        })
        .collect();
    Ok(Alignment {
        windows,
        dropped_leading: first.min(n),
        dropped_trailing: n - usable.max(first.min(n)),
    })
}

/// Shuffles deterministically from `(seed, epoch)` and chunks; the last
/// batch may be short.
pub fn make_batches<T: Clone>(items: &[T], batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<T>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size)
        .map(|c| c.iter().map(|&i| items[i].clone()).collect())
        .collect()
}

/// Preprocessing applied when a clip is loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub views: Vec<ViewId>,
    pub image_width: usize,
    pub image_height: usize,
    pub clahe: ClaheConfig,
    /// Order and pre-emphasis/window of the feature analysis. Frame length
    /// and hop are derived from the clip's sample rate and fps.
    pub analysis: AnalysisConfig,
}

impl LoadOptions {
    pub fn analysis_for(&self, sample_rate: u32, fps: f64) -> AnalysisConfig {
        let grid = AnalysisConfig::for_video(sample_rate, fps, self.analysis.lpc_order);
        AnalysisConfig {
            frame_len: grid.frame_len,
            hop: grid.hop,
            ..self.analysis.clone()
        }
    }
}

/// A clip held in memory: preprocessed frames per view, audio and features.
#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub manifest: ClipManifest,
    pub frames: BTreeMap<ViewId, Vec<Tensor>>,
    pub audio: AudioSignal,
    pub track: FeatureTrack,
}

impl LoadedClip {
    /// `frames[view][step]` for a window, in the order of `views`.
    pub fn window_frames(&self, window: &SampleWindow, views: &[ViewId]) -> Vec<Vec<&Tensor>> {
        views
            .iter()
            .map(|v| window.frame_indices.iter().map(|&i| &self.frames[v][i]).collect())
            .collect()
    }
}

/// Reads and preprocesses the frames of `views`.
pub fn load_frames(
    clip: &ClipManifest,
    views: &[ViewId],
    width: usize,
    height: usize,
    clahe: &ClaheConfig,
) -> Result<BTreeMap<ViewId, Vec<Tensor>>> {
    let mut frames = BTreeMap::new();
    for &view in views {
        let files = clip.views.get(&view).ok_or_else(|| Error::ViewCountMismatch {
            expected: views.len(),
            got: views.iter().filter(|v| clip.views.contains_key(v)).count(),
        })?;
        let tensors = files
            .iter()
            .map(|p| preprocess_frame(&read_frame(p)?, width, height, clahe))
            .collect::<Result<Vec<_>>>()?;
        frames.insert(view, tensors);
    }
    Ok(frames)
}

pub fn load_clip(clip: &ClipManifest, opts: &LoadOptions) -> Result<LoadedClip> {
    let frames = load_frames(clip, &opts.views, opts.image_width, opts.image_height, &opts.clahe)?;
    let audio = read_wav(&clip.audio)?;
    let analysis = opts.analysis_for(audio.sample_rate(), clip.fps);
    let track = analyze(&audio, &analysis)?;
    Ok(LoadedClip {
        manifest: clip.clone(),
        frames,
        audio,
        track,
    })
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;
    use crate::audio::LspFrame;

    fn clip(n: usize) -> ClipManifest {
        let files: Vec<PathBuf> = (0..n).map(|i| PathBuf::from(format!("{i}.pgm"))).collect();
        ClipManifest {
            clip_id: "c".into(),
            speaker_id: "s".into(),
            fps: 30.0,
            views: BTreeMap::from([(ViewId::V1, files)]),
            audio: PathBuf::from("a.wav"),
            split: Split::Train,
        }
    }

    fn track(n: usize, hop: usize) -> FeatureTrack {
        let mut config = AnalysisConfig::for_video(16_000, 30.0, 2);
        config.hop = hop;
        FeatureTrack {
            frames: vec![LspFrame::silent(2); n],
            config,
            sample_rate: 16_000,
        }
    }

    #[test]
    fn twenty_frames_five_steps() {
        let a = align(&clip(20), &track(20, 533), 5, LeadingFrames::Drop).unwrap();
        assert_eq!(a.windows.len(), 16);
        assert_eq!(a.windows[0].target_index, 4);
        assert_eq!(a.windows[0].frame_indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(a.windows[15].target_index, 19);
        assert_eq!((a.dropped_leading, a.dropped_trailing), (4, 0));
    }

    #[test]
    fn single_step_and_short_clips() {
        assert_eq!(align(&clip(20), &track(20, 533), 1, LeadingFrames::Drop).unwrap().windows.len(), 20);
        let short = align(&clip(3), &track(3, 533), 5, LeadingFrames::Drop).unwrap();
        assert!(short.windows.is_empty());
        let padded = align(&clip(3), &track(3, 533), 5, LeadingFrames::PadFirst).unwrap();
        assert_eq!(padded.windows.len(), 3);
        assert_eq!(padded.windows[1].frame_indices, vec![0, 0, 0, 0, 1]);
    }

    #[test]
    fn short_track_drops_trailing() {
        let a = align(&clip(20), &track(18, 533), 5, LeadingFrames::Drop).unwrap();
        assert_eq!(a.windows.len(), 14);
        assert_eq!(a.dropped_trailing, 2);
    }

    #[test]
    fn hop_must_match_frame_rate() {
        assert!(matches!(
            align(&clip(20), &track(20, 512), 5, LeadingFrames::Drop),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn batches_partition_items() {
        let items: Vec<usize> = (0..10).collect();
        let batches = make_batches(&items, 4, 3, 0);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = batches.concat();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(batches, make_batches(&items, 4, 3, 0));
    }

    #[test]
    fn epochs_reshuffle() {
        let items: Vec<usize> = (0..100).collect();
        assert_ne!(make_batches(&items, 100, 3, 0), make_batches(&items, 100, 3, 1));
        assert_ne!(make_batches(&items, 100, 3, 0), make_batches(&items, 100, 4, 0));
    }
}
