//! Checkpoint files.
//!
//! A checkpoint starts with a UTF-8 header: the magic line
//! `silentspeech-checkpoint 1`, a TOML document describing the run and the
//! parameter blocks, and a terminating `%%` line. Parameter blocks follow as
//! raw little-endian `f64` values, in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Network, NetworkSpec};
use super::params::ParamSet;
use super::tensor::Tensor;
use super::train::TargetNormalizer;
use crate::audio::AnalysisConfig;
use crate::error::{Error, Result};
use crate::vision::ClaheConfig;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "silentspeech-checkpoint";
const END: &str = "\n%%\n";

/// How targets were produced, needed to turn predictions back into audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub sample_rate: u32,
    pub fps: f64,
    pub analysis: AnalysisConfig,
    pub normalizer: TargetNormalizer,
    pub clahe: ClaheConfig,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub seed: u64,
    pub step: u64,
    pub network: Network,
    pub features: Option<FeatureInfo>,
}

#[derive(Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    seed: u64,
    step: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<FeatureInfo>,
    spec: NetworkSpec,
    blocks: Vec<BlockHeader>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = self.network.params();
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            seed: self.seed,
            step: self.step,
            features: self.features.clone(),
            spec: self.network.spec().clone(),
            blocks: params
                .iter()
                .map(|(name, t)| BlockHeader {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let text = toml::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = format!("{MAGIC} {CHECKPOINT_VERSION}\n{text}{END}").into_bytes();
        out.reserve(params.num_values() * 8);
        for (_, t) in params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(END.len())
            .position(|w| w == END.as_bytes())
            .ok_or_else(|| Error::Format("checkpoint header not terminated".into()))?;
        let head = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;
        let (first, rest) = head.split_once('\n').unwrap_or((head, ""));
        match first.split_once(' ') {
            Some((MAGIC, v)) if v.trim() == CHECKPOINT_VERSION.to_string() => {}
            Some((MAGIC, v)) => return Err(Error::Format(format!("unsupported checkpoint version {v}"))),
            _ => return Err(Error::Format("not a checkpoint file".into())),
        }
        let header: Header = toml::from_str(rest)?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                header.format_version
            )));
        }
        let mut body = &bytes[split + END.len()..];
        let mut params = ParamSet::new();
        for block in header.blocks {
            let n: usize = block.shape.iter().product();
            if body.len() < n * 8 {
                return Err(Error::Format(format!("checkpoint truncated in block {}", block.name)));
            }
            let data = body[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            body = &body[n * 8..];
            params.push(block.name, Tensor::new(block.shape, data)?);
        }
        if !body.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after parameters", body.len())));
        }
        Ok(Self {
            seed: header.seed,
            step: header.step,
            network: Network::from_params(header.spec, params)?,
            features: header.features,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }
}
