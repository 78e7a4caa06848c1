//! Binary feature-track files.
//!
//! Layout, all integers `u32` little-endian:
//!
//! ```text
//! "LSPT" | version | order | sample_rate | frame_len | hop | frame_count
//! per frame: gain f64 | order x f64 frequencies | silent flag u8
//! ```
//!
//! Pre-emphasis and window are not stored; readers get the defaults of
//! [`AnalysisConfig`] and may override them.

use std::io::{Read, Write};
use std::path::Path;

use super::{AnalysisConfig, FeatureTrack, LspFrame};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LSPT";
pub const VERSION: u32 = 1;

pub fn write_track<W: Write>(mut w: W, track: &FeatureTrack) -> Result<()> {
    let cfg = &track.config;
    w.write_all(MAGIC)?;
    for v in [
        VERSION,
        cfg.lpc_order as u32,
        track.sample_rate,
        cfg.frame_len as u32,
        cfg.hop as u32,
        track.len() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for frame in &track.frames {
        if frame.order() != cfg.lpc_order {
            return Err(Error::TrackMismatch("frame order differs from header".into()));
        }
        w.write_all(&frame.gain.to_le_bytes())?;
        for f in &frame.freqs {
            w.write_all(&f.to_le_bytes())?;
        }
        w.write_all(&[frame.is_silent as u8])?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_track<R: Read>(mut r: R) -> Result<FeatureTrack> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a feature track (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported track version {version}")));
    }
    let order = read_u32(&mut r)? as usize;
    let sample_rate = read_u32(&mut r)?;
    let frame_len = read_u32(&mut r)? as usize;
    let hop = read_u32(&mut r)? as usize;
    let count = read_u32(&mut r)? as usize;
    let config = AnalysisConfig {
        frame_len,
        hop,
        lpc_order: order,
        ..AnalysisConfig::default()
    };
    config.validate()?;

    let mut frames = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let gain = read_f64(&mut r)?;
        let freqs = (0..order)
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        frames.push(LspFrame {
            gain,
            freqs,
            is_silent: flag[0] != 0,
        });
    }
    let track = FeatureTrack {
        frames,
        config,
        sample_rate,
    };
    track.validate()?;
    Ok(track)
}

pub fn save_track(path: impl AsRef<Path>, track: &FeatureTrack) -> Result<()> {
    let mut buf = Vec::new();
    write_track(&mut buf, track)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_track(path: impl AsRef<Path>) -> Result<FeatureTrack> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_track(std::io::BufReader::new(std::fs::File::open(path)?))
}
