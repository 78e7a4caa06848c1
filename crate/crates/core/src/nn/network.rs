//! The CNN-LSTM regressor.
//!
//! Every frame of the `T`-frame window runs through a convolutional encoder
//! (one per view, or one shared encoder fed with views stacked as channels),
//! the per-step features are fused, an LSTM summarises the sequence, and a
//! dense head produces the raw `P + 1` vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d_backward,
    maxpool2d_forward, relu_backward, relu_forward, ConvCache, PoolCache,
};
use super::lstm::{lstm_backward, lstm_forward, LstmCache};
use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::multiview::{fuse, FusionStrategy, ViewId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderStage {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
    },
    /// Flattens its input first.
    Dense {
        out: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Active views in canonical order.
    pub views: Vec<ViewId>,
    pub input_height: usize,
    pub input_width: usize,
    pub encoder: Vec<EncoderStage>,
    pub fusion: FusionStrategy,
    /// Share one encoder across views under feature concatenation.
    pub tied_encoders: bool,
    pub lstm_hidden: usize,
    pub timesteps: usize,
    /// `P + 1`: gain plus `P` line spectral frequencies.
    pub out_dim: usize,
}

impl NetworkSpec {
    pub fn default_encoder() -> Vec<EncoderStage> {
        vec![
            EncoderStage::Conv {
                out_channels: 8,
                kernel: 5,
                stride: 2,
            },
            EncoderStage::Relu,
            EncoderStage::Conv {
                out_channels: 16,
                kernel: 3,
                stride: 2,
            },
            EncoderStage::Relu,
            EncoderStage::MaxPool { kernel: 2 },
            EncoderStage::Dense { out: 64 },
        ]
    }

    /// 64x64 inputs, the default encoder, untied feature concatenation,
    /// LSTM(128), five timesteps.
    pub fn new(views: Vec<ViewId>, lpc_order: usize) -> Self {
        Self {
            views,
            input_height: 64,
            input_width: 64,
            encoder: Self::default_encoder(),
            fusion: FusionStrategy::FeatureConcat,
            tied_encoders: false,
            lstm_hidden: 128,
            timesteps: 5,
            out_dim: lpc_order + 1,
        }
    }

    fn encoder_in_channels(&self) -> usize {
        match self.fusion {
            FusionStrategy::EarlyChannelConcat => self.views.len(),
            FusionStrategy::FeatureConcat => 1,
        }
    }

    fn encoder_count(&self) -> usize {
        match self.fusion {
            FusionStrategy::FeatureConcat if !self.tied_encoders => self.views.len(),
            _ => 1,
        }
    }

    /// Output shape of every encoder stage, starting from the input image.
    fn stage_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = vec![self.encoder_in_channels(), self.input_height, self.input_width];
        let mut shapes = vec![shape.clone()];
        for stage in &self.encoder {
            shape = match (stage, shape.as_slice()) {
                (EncoderStage::Conv { out_channels, kernel, stride }, &[_, h, w]) => {
                    if *kernel == 0 || *stride == 0 || *kernel > h || *kernel > w || *out_channels == 0 {
                        return Err(Error::ShapeMismatch(format!(
                            "conv kernel {kernel} stride {stride} does not fit {h}x{w}"
                        )));
                    }
                    vec![*out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1]
                }
                (EncoderStage::MaxPool { kernel }, &[c, h, w]) => {
                    if *kernel == 0 || *kernel > h || *kernel > w {
                        return Err(Error::ShapeMismatch(format!("pool {kernel} does not fit {h}x{w}")));
                    }
                    vec![c, h / kernel, w / kernel]
                }
                (EncoderStage::Relu, s) => s.to_vec(),
                (EncoderStage::Dense { out }, _) if *out > 0 => vec![*out],
                (stage, s) => {
                    return Err(Error::ShapeMismatch(format!("{stage:?} cannot follow shape {s:?}")))
                }
            };
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }

    pub fn encoder_output_dim(&self) -> Result<usize> {
        Ok(self.stage_shapes()?.last().map_or(0, |s| s.iter().product()))
    }

    pub fn fused_dim(&self) -> Result<usize> {
        let d = self.encoder_output_dim()?;
        Ok(match self.fusion {
            FusionStrategy::FeatureConcat => d * self.views.len(),
            FusionStrategy::EarlyChannelConcat => d,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::EmptyViewSet);
        }
        if self.views.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("views must be distinct and in canonical order".into()));
        }
        if self.timesteps == 0 || self.lstm_hidden == 0 || self.out_dim < 2 {
            return Err(Error::InvalidConfig(
                "timesteps and lstm_hidden must be positive, out_dim at least 2".into(),
            ));
        }
        self.stage_shapes().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy)]
struct StageParams {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    /// `[encoder][stage]`
    encoders: Vec<Vec<Option<StageParams>>>,
    lstm: StageParams,
    head: StageParams,
}

fn build_layout(spec: &NetworkSpec, mut add: impl FnMut(String, Vec<usize>, usize) -> usize) -> Result<Layout> {
    spec.validate()?;
    let shapes = spec.stage_shapes()?;
    let mut encoders = Vec::new();
    for e in 0..spec.encoder_count() {
        let prefix = if spec.encoder_count() == 1 {
            "encoder.shared".to_string()
        } else {
            format!("encoder.{}", spec.views[e])
        };
        let mut stages = Vec::new();
        for (s, stage) in spec.encoder.iter().enumerate() {
            let input = &shapes[s];
            let p = match stage {
                EncoderStage::Conv { out_channels, kernel, .. } => {
                    let fan_in = input[0] * kernel * kernel;
                    Some(StageParams {
                        weight: add(
                            format!("{prefix}.{s}.weight"),
                            vec![*out_channels, input[0], *kernel, *kernel],
                            fan_in,
                        ),
                        bias: add(format!("{prefix}.{s}.bias"), vec![*out_channels], 0),
                    })
                }
                EncoderStage::Dense { out } => {
                    let fan_in: usize = input.iter().product();
                    Some(StageParams {
                        weight: add(format!("{prefix}.{s}.weight"), vec![*out, fan_in], fan_in),
                        bias: add(format!("{prefix}.{s}.bias"), vec![*out], 0),
                    })
                }
                EncoderStage::Relu | EncoderStage::MaxPool { .. } => None,
            };
            stages.push(p);
        }
        encoders.push(stages);
    }
    let d = spec.fused_dim()?;
    let h = spec.lstm_hidden;
    let lstm = StageParams {
        weight: add("lstm.weight".into(), vec![4 * h, d + h], d + h),
        bias: add("lstm.bias".into(), vec![4 * h], 0),
    };
    let head = StageParams {
        weight: add("head.weight".into(), vec![spec.out_dim, h], h),
        bias: add("head.bias".into(), vec![spec.out_dim], 0),
    };
    Ok(Layout { encoders, lstm, head })
}

#[derive(Debug, Clone)]
enum StageCache {
    Conv(ConvCache),
    Relu(Tensor),
    Pool(PoolCache),
    Dense(Tensor),
}

#[derive(Debug, Clone)]
struct EncoderTrace {
    encoder: usize,
    stages: Vec<StageCache>,
    output_shape: Vec<usize>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `[step][encoder call]`
    encoders: Vec<Vec<EncoderTrace>>,
    feature_dim: usize,
    lstm: LstmCache,
    final_hidden: Tensor,
}

/// Frames of one sample: `frames[view][step]`, views in the spec's order,
/// each frame `[H, W]`.
pub type WindowFrames<'a> = [Vec<&'a Tensor>];

#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    params: ParamSet,
    layout: Layout,
}

impl Network {
    /// Fresh parameters: weights uniform in `+-sqrt(6 / fan_in)` for the
    /// encoder and `+-sqrt(3 / fan_in)` for the LSTM and head, biases zero.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let layout = build_layout(&spec, |name, shape, fan_in| {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = if fan_in == 0 {
                vec![0.0; n]
            } else {
                let gain = if name.starts_with("encoder") { 6.0 } else { 3.0 };
                let bound = (gain / fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            params.push(name, Tensor::new(shape, data).expect("sized"))
        })?;
        Ok(Self { spec, params, layout })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(spec: NetworkSpec, params: ParamSet) -> Result<Self> {
        let mut expected = Vec::new();
        let layout = build_layout(&spec, |name, shape, _| {
            expected.push((name, shape));
            expected.len() - 1
        })?;
        if expected.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "spec needs {} parameter blocks, got {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), (got_name, t)) in expected.iter().zip(params.iter()) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {got_name} {:?} does not match {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { spec, params, layout })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn zero_grads(&self) -> ParamSet {
        self.params.zeros_like()
    }

    fn encoder_for_view(&self, pos: usize) -> usize {
        if self.layout.encoders.len() == 1 {
            0
        } else {
            pos
        }
    }

    fn encode(&self, encoder: usize, input: Tensor) -> Result<(Tensor, EncoderTrace)> {
        let mut x = input;
        let mut stages = Vec::with_capacity(self.spec.encoder.len());
        for (stage, p) in self.spec.encoder.iter().zip(&self.layout.encoders[encoder]) {
            let (next, cache) = match (stage, p) {
                (EncoderStage::Conv { stride, .. }, Some(p)) => {
                    let (y, c) = conv2d_forward(&x, self.params.get(p.weight), self.params.get(p.bias), *stride)?;
                    (y, StageCache::Conv(c))
                }
                (EncoderStage::Relu, _) => (relu_forward(&x), StageCache::Relu(x)),
                (EncoderStage::MaxPool { kernel }, _) => {
                    let (y, c) = maxpool2d_forward(&x, *kernel)?;
                    (y, StageCache::Pool(c))
                }
                (EncoderStage::Dense { .. }, Some(p)) => {
                    let y = dense_forward(&x, self.params.get(p.weight), self.params.get(p.bias))?;
                    (y, StageCache::Dense(x))
                }
                _ => unreachable!("layout built from the same spec"),
            };
            stages.push(cache);
            x = next;
        }
        let output_shape = x.shape().to_vec();
        Ok((
            x,
            EncoderTrace {
                encoder,
                stages,
                output_shape,
            },
        ))
    }

    fn check_window(&self, frames: &WindowFrames) -> Result<()> {
        if frames.len() != self.spec.views.len() {
            return Err(Error::ViewCountMismatch {
                expected: self.spec.views.len(),
                got: frames.len(),
            });
        }
        let (h, w) = (self.spec.input_height, self.spec.input_width);
        for view in frames {
            if view.len() != self.spec.timesteps {
                return Err(Error::ShapeMismatch(format!(
                    "expected {} timesteps, got {}",
                    self.spec.timesteps,
                    view.len()
                )));
            }
            for f in view {
                if f.len() != h * w {
                    return Err(Error::ShapeMismatch(format!(
                        "frame {:?} does not match {h}x{w}",
                        f.shape()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Raw `P + 1` output for one window, plus the trace for backprop.
    pub fn forward(&self, frames: &WindowFrames) -> Result<(Vec<f64>, ForwardTrace)> {
        self.check_window(frames)?;
        let (h, w) = (self.spec.input_height, self.spec.input_width);
        let image = |t: &Tensor| (*t).clone().reshape(vec![1, h, w]);

        let mut step_features = Vec::with_capacity(self.spec.timesteps);
        let mut traces = Vec::with_capacity(self.spec.timesteps);
        for t in 0..self.spec.timesteps {
            let mut step_traces = Vec::new();
            let fused = match self.spec.fusion {
                FusionStrategy::FeatureConcat => {
                    let mut per_view = Vec::with_capacity(frames.len());
                    for (pos, view) in frames.iter().enumerate() {
                        let (feat, trace) = self.encode(self.encoder_for_view(pos), image(view[t])?)?;
                        per_view.push((self.spec.views[pos], feat));
                        step_traces.push(trace);
                    }
                    fuse(&per_view, FusionStrategy::FeatureConcat)?
                }
                FusionStrategy::EarlyChannelConcat => {
                    let per_view = frames
                        .iter()
                        .enumerate()
                        .map(|(pos, view)| Ok((self.spec.views[pos], image(view[t])?)))
                        .collect::<Result<Vec<_>>>()?;
                    let stacked = fuse(&per_view, FusionStrategy::EarlyChannelConcat)?;
                    let (feat, trace) = self.encode(0, stacked)?;
                    step_traces.push(trace);
                    feat
                }
            };
            step_features.push(fused.into_data());
            traces.push(step_traces);
        }
        let inputs: Vec<&[f64]> = step_features.iter().map(Vec::as_slice).collect();
        let lp = self.layout.lstm;
        let (out, lstm_cache) = lstm_forward(&inputs, self.params.get(lp.weight), self.params.get(lp.bias))?;
        let final_hidden = Tensor::from_vec(out.final_hidden().to_vec());
        let hp = self.layout.head;
        let raw = dense_forward(&final_hidden, self.params.get(hp.weight), self.params.get(hp.bias))?;
        Ok((
            raw.into_data(),
            ForwardTrace {
                encoders: traces,
                feature_dim: self.spec.encoder_output_dim()?,
                lstm: lstm_cache,
                final_hidden,
            },
        ))
    }

    pub fn predict(&self, frames: &WindowFrames) -> Result<Vec<f64>> {
        Ok(self.forward(frames)?.0)
    }

    fn encode_backward(&self, trace: &EncoderTrace, grad_out: &[f64], grads: &mut ParamSet) -> Result<()> {
        let mut g = Tensor::new(trace.output_shape.clone(), grad_out.to_vec())?;
        let params = &self.layout.encoders[trace.encoder];
        for (s, cache) in trace.stages.iter().enumerate().rev() {
            g = match cache {
                StageCache::Conv(c) => {
                    let p = params[s].expect("conv has params");
                    let cg = conv2d_backward(c, self.params.get(p.weight), &g, s > 0)?;
                    grads.accumulate(p.weight, &cg.weight);
                    grads.accumulate(p.bias, &cg.bias);
                    match cg.input {
                        Some(gi) => gi,
                        None => break,
                    }
                }
                StageCache::Relu(input) => relu_backward(input, &g),
                StageCache::Pool(c) => maxpool2d_backward(c, &g)?,
                StageCache::Dense(input) => {
                    let p = params[s].expect("dense has params");
                    let dg = dense_backward(input, self.params.get(p.weight), &g)?;
                    grads.accumulate(p.weight, &dg.weight);
                    grads.accumulate(p.bias, &dg.bias);
                    dg.input
                }
            };
        }
        Ok(())
    }

    /// Accumulates parameter gradients for an upstream gradient on the raw
    /// output.
    pub fn backward(&self, trace: &ForwardTrace, grad_raw: &[f64], grads: &mut ParamSet) -> Result<()> {
        let hp = self.layout.head;
        let hg = dense_backward(
            &trace.final_hidden,
            self.params.get(hp.weight),
            &Tensor::from_vec(grad_raw.to_vec()),
        )?;
        grads.accumulate(hp.weight, &hg.weight);
        grads.accumulate(hp.bias, &hg.bias);

        let lp = self.layout.lstm;
        let lg = lstm_backward(&trace.lstm, self.params.get(lp.weight), hg.input.data())?;
        grads.accumulate(lp.weight, &lg.weight);
        grads.accumulate(lp.bias, &lg.bias);

        let d = trace.feature_dim;
        for (step, g_in) in trace.encoders.iter().zip(&lg.inputs) {
            for (k, enc) in step.iter().enumerate() {
                let slice = match self.spec.fusion {
                    FusionStrategy::FeatureConcat => &g_in[k * d..(k + 1) * d],
                    FusionStrategy::EarlyChannelConcat => &g_in[..],
                };
                self.encode_backward(enc, slice, grads)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(views: Vec<ViewId>, fusion: FusionStrategy, tied: bool) -> NetworkSpec {
        NetworkSpec {
            views,
            input_height: 9,
            input_width: 9,
            encoder: vec![
                EncoderStage::Conv {
                    out_channels: 2,
                    kernel: 3,
                    stride: 2,
                },
                EncoderStage::Relu,
                EncoderStage::MaxPool { kernel: 2 },
                EncoderStage::Dense { out: 3 },
            ],
            fusion,
            tied_encoders: tied,
            lstm_hidden: 4,
            timesteps: 2,
            out_dim: 3,
        }
    }

    fn frames(seed: u64, n: usize) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Tensor::new(vec![9, 9], (0..81).map(|_| rng.random::<f64>()).collect()).unwrap())
            .collect()
    }

    #[test]
    fn zero_weights_output_head_bias() {
        let spec = tiny_spec(vec![ViewId::V1], FusionStrategy::FeatureConcat, false);
        let mut net = Network::new(spec, 1).unwrap();
        for t in net.params_mut().tensors_mut() {
            t.fill(0.0);
        }
        let idx = net.params().names().iter().position(|n| n == "head.bias").unwrap();
        net.params_mut().get_mut(idx).data_mut().copy_from_slice(&[0.5, -1.0, 2.0]);
        let f = frames(2, 2);
        let out = net.predict(&[vec![&f[0], &f[1]]]).unwrap();
        assert_eq!(out, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn tied_duplicate_views_encode_identically() {
        let spec = tiny_spec(vec![ViewId::V1, ViewId::V2], FusionStrategy::FeatureConcat, true);
        let net = Network::new(spec, 3).unwrap();
        let f = frames(4, 2);
        let window = vec![vec![&f[0], &f[1]], vec![&f[0], &f[1]]];
        let (_, trace) = net.forward(&window).unwrap();
        let img = f[0].clone().reshape(vec![1, 9, 9]).unwrap();
        let (a, _) = net.encode(trace.encoders[0][0].encoder, img.clone()).unwrap();
        let (b, _) = net.encode(trace.encoders[0][1].encoder, img).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn view_count_checked() {
        let spec = tiny_spec(vec![ViewId::V1, ViewId::V3], FusionStrategy::EarlyChannelConcat, false);
        let net = Network::new(spec, 3).unwrap();
        let f = frames(4, 2);
        assert!(matches!(
            net.predict(&[vec![&f[0], &f[1]]]),
            Err(Error::ViewCountMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn from_params_rejects_wrong_shapes() {
        let spec = tiny_spec(vec![ViewId::V1], FusionStrategy::FeatureConcat, false);
        let net = Network::new(spec.clone(), 1).unwrap();
        assert!(Network::from_params(spec.clone(), net.params().clone()).is_ok());
        let mut other = spec;
        other.lstm_hidden = 5;
        assert!(Network::from_params(other, net.params().clone()).is_err());
    }

    #[test]
    fn default_spec_dimensions() {
        let spec = NetworkSpec::new(vec![ViewId::V1, ViewId::V2], 16);
        assert_eq!(spec.encoder_output_dim().unwrap(), 64);
        assert_eq!(spec.fused_dim().unwrap(), 128);
        assert_eq!(spec.out_dim, 17);
    }
}
