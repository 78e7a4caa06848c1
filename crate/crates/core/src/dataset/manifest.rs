//! Clip manifests.
//!
//! A manifest is a TOML file with an optional `format_version = 1` and one
//! `[[clip]]` table per clip:
//!
//! ```toml
//! [[clip]]
//! id = "clip000"
//! speaker = "s1"
//! fps = 25.0
//! audio = "clip000/audio.wav"
//! split = "train"            # train | val | test
//! [clip.views]
//! V1 = "clip000/V1"          # a directory of frame images, sorted by name
//! V2 = ["a.png", "b.png"]    # or an explicit frame list
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiview::ViewId;

pub const MANIFEST_VERSION: u32 = 1;
const FRAME_EXTENSIONS: [&str; 4] = ["pgm", "ppm", "pnm", "png"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipManifest {
    pub clip_id: String,
    pub speaker_id: String,
    pub fps: f64,
    /// Ordered frame files per view.
    pub views: BTreeMap<ViewId, Vec<PathBuf>>,
    pub audio: PathBuf,
    pub split: Split,
}

impl ClipManifest {
    /// Frames per view (all views agree once validated).
    pub fn frame_count(&self) -> usize {
        self.views.values().next().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::Parse(format!("clip {}: fps must be positive", self.clip_id)));
        }
        if self.views.is_empty() {
            return Err(Error::Parse(format!("clip {}: no views listed", self.clip_id)));
        }
        let counts: Vec<String> = self
            .views
            .iter()
            .map(|(v, files)| format!("{v}={}", files.len()))
            .collect();
        if self.views.values().any(|f| f.len() != self.frame_count()) {
            return Err(Error::ViewFrameCountMismatch {
                clip_id: self.clip_id.clone(),
                detail: counts.join(", "),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrameSource {
    Directory(PathBuf),
    Files(Vec<PathBuf>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipRecord {
    pub id: String,
    pub speaker: String,
    pub fps: f64,
    pub audio: PathBuf,
    pub split: Split,
    pub views: BTreeMap<ViewId, FrameSource>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestFile {
    #[serde(default = "default_version")]
    pub format_version: u32,
    #[serde(default, rename = "clip")]
    pub clips: Vec<ClipRecord>,
}

fn default_version() -> u32 {
    MANIFEST_VERSION
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path))
    }
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Parses manifest text, resolving relative paths against `base` and
/// checking that every referenced file exists.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ClipManifest>> {
    let file: ManifestFile = toml::from_str(text)?;
    if file.format_version != MANIFEST_VERSION {
        return Err(Error::Parse(format!(
            "unsupported manifest version {}",
            file.format_version
        )));
    }
    let mut clips = Vec::with_capacity(file.clips.len());
    for rec in file.clips {
        let mut views = BTreeMap::new();
        for (view, source) in rec.views {
            let files = match source {
                FrameSource::Directory(d) => list_frames(&require(resolve(base, &d))?)?,
                FrameSource::Files(list) => list
                    .iter()
                    .map(|p| require(resolve(base, p)))
                    .collect::<Result<_>>()?,
            };
            views.insert(view, files);
        }
        let clip = ClipManifest {
            clip_id: rec.id,
            speaker_id: rec.speaker,
            fps: rec.fps,
            views,
            audio: require(resolve(base, &rec.audio))?,
            split: rec.split,
        };
        clip.validate()?;
        clips.push(clip);
    }
    Ok(clips)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ClipManifest>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}
