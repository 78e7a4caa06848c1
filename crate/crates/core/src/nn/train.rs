//! Training steps, evaluation and target normalization.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::{row_loss, LossConfig};
use super::network::Network;
use super::params::ParamSet;
use super::project::{project_normalized, project_normalized_backward};
use super::tensor::Tensor;
use crate::audio::LspFrame;
use crate::error::{Error, Result};

/// One training example: `frames[view][step]` and a normalized target.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub id: String,
    pub frames: Vec<Vec<&'a Tensor>>,
    pub target: Vec<f64>,
}

/// Maps LSP frames to the regression space `[ln(1 + gain / gain_ref),
/// w_1/pi, ..., w_P/pi]` and back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetNormalizer {
    pub gain_ref: f64,
}

impl Default for TargetNormalizer {
    fn default() -> Self {
        Self { gain_ref: 0.01 }
    }
}

impl TargetNormalizer {
    /// Silent frames encode as zero gain over an evenly spaced spectrum.
    pub fn encode(&self, frame: &LspFrame) -> Vec<f64> {
        let p = frame.order();
        let mut out = Vec::with_capacity(p + 1);
        if frame.is_silent {
            out.push(0.0);
            out.extend((1..=p).map(|k| k as f64 / (p + 1) as f64));
        } else {
            out.push((frame.gain / self.gain_ref).ln_1p());
            out.extend(frame.freqs.iter().map(|w| w / PI));
        }
        out
    }

    pub fn decode(&self, normalized: &[f64]) -> LspFrame {
        LspFrame {
            gain: self.gain_ref * normalized[0].exp_m1(),
            freqs: normalized[1..].iter().map(|u| u * PI).collect(),
            is_silent: false,
        }
    }

    /// Decodes a raw network output through the ordering projection.
    pub fn decode_raw(&self, raw: &[f64]) -> LspFrame {
        self.decode(&project_normalized(raw))
    }
}

/// Accumulates the batch-mean loss gradient of `batch` into `grads` and
/// returns the loss. Gradients are zeroed first.
pub fn batch_gradients(
    net: &Network,
    batch: &[Sample],
    loss_cfg: &LossConfig,
    grads: &mut ParamSet,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    for t in grads.tensors_mut() {
        t.fill(0.0);
    }
    let mut total = 0.0;
    for sample in batch {
        let (raw, trace) = net.forward(&sample.frames)?;
        if sample.target.len() != raw.len() {
            return Err(Error::ShapeMismatch(format!(
                "sample {} target has {} values, network emits {}",
                sample.id,
                sample.target.len(),
                raw.len()
            )));
        }
        let pred = project_normalized(&raw);
        let (l, g) = row_loss(&pred, &sample.target, batch.len(), loss_cfg);
        if !l.is_finite() || raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                sample: sample.id.clone(),
            });
        }
        total += l;
        let d_raw = project_normalized_backward(&raw, &g);
        net.backward(&trace, &d_raw, grads)?;
    }
    Ok(total)
}

/// Holds the optimizer state and gradient buffer of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub adam: AdamConfig,
    pub loss: LossConfig,
    state: AdamState,
    grads: ParamSet,
}

impl Trainer {
    pub fn new(net: &Network, adam: AdamConfig, loss: LossConfig) -> Result<Self> {
        adam.validate()?;
        if !(loss.lambda >= 0.0) {
            return Err(Error::InvalidConfig("lambda must be nonnegative".into()));
        }
        Ok(Self {
            adam,
            loss,
            state: AdamState::new(net.params()),
            grads: net.zero_grads(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.state.step_count()
    }

    /// One Adam update from the batch-mean loss. Returns the loss before
    /// the update; on a non-finite loss the parameters are left untouched.
    pub fn step(&mut self, net: &mut Network, batch: &[Sample]) -> Result<f64> {
        let loss = batch_gradients(net, batch, &self.loss, &mut self.grads)?;
        if self.grads.iter().any(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.state.update(net.params_mut(), &self.grads, &self.adam);
        for (_, p) in net.params().iter() {
            p.ensure_finite("parameter update")?;
        }
        Ok(loss)
    }
}

/// Mean loss over `samples` without touching the parameters.
pub fn evaluate(net: &Network, samples: &[Sample], loss_cfg: &LossConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("nothing to evaluate".into()));
    }
    let mut total = 0.0;
    for sample in samples {
        let pred = project_normalized(&net.predict(&sample.frames)?);
        let (l, _) = row_loss(&pred, &sample.target, samples.len(), loss_cfg);
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss {
                sample: sample.id.clone(),
            });
        }
        total += l;
    }
    Ok(total)
}
