//! Training, inference and view-placement drivers.
//!
//! An experiment is described by one TOML file ([`ExperimentConfig`]). Every
//! run echoes the resolved configuration into its output directory, and all
//! emitted text files start with a format-version line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{
    synthesize, track_io::save_track, wav::write_wav, AnalysisConfig, AudioSignal, Excitation,
    FeatureTrack, Window,
};
use crate::dataset::{
    align, load_clip, load_frames, load_manifest, ClipManifest, LeadingFrames, LoadOptions,
    LoadedClip, SampleWindow, Split,
};
use crate::error::{Error, Result};
use crate::metrics::{external_pesq, log_spectral_distance, lsp_trajectory_correlation, PesqTool};
use crate::multiview::{
    enumerate_combinations, placement_report, FusionStrategy, MetricDirection, PlacementReport,
    ViewId, ViewSet,
};
use crate::nn::{
    evaluate, AdamConfig, Checkpoint, EncoderStage, FeatureInfo, LossConfig, Network,
    NetworkSpec, Sample, TargetNormalizer, Tensor, Trainer,
};
use crate::vision::ClaheConfig;

pub const CONFIG_VERSION: u32 = 1;
pub const LOSS_LOG_VERSION: u32 = 1;
pub const SUMMARY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub lpc_order: usize,
    pub pre_emphasis: f64,
    pub window: Window,
    pub lsp_quant_bits: Option<u32>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            lpc_order: 16,
            pre_emphasis: 0.97,
            window: Window::Hamming,
            lsp_quant_bits: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageSettings {
    pub width: usize,
    pub height: usize,
    pub clahe: ClaheConfig,
}

impl Default for ImageSettings {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            clahe: ClaheConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    pub encoder: Vec<EncoderStage>,
    pub fusion: FusionStrategy,
    pub tied_encoders: bool,
    pub lstm_hidden: usize,
    pub timesteps: usize,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        Self {
            encoder: NetworkSpec::default_encoder(),
            fusion: FusionStrategy::FeatureConcat,
            tied_encoders: false,
            lstm_hidden: 128,
            timesteps: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementSettings {
    /// Largest view subset to train.
    pub max_views: usize,
    /// `val_loss`, `lsd` (lower is better), `lsp_corr` or `pesq` (higher).
    pub metric: String,
    pub pesq: Option<PesqTool>,
}

impl Default for PlacementSettings {
    fn default() -> Self {
        Self {
            max_views: 2,
            metric: "val_loss".into(),
            pesq: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    /// Required; there is no implicit entropy source.
    pub seed: Option<u64>,
    pub manifest: PathBuf,
    pub views: Vec<ViewId>,
    pub output_dir: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stops training after this many updates even mid-epoch.
    pub max_steps: Option<u64>,
    /// Write an extra checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
    pub leading_frames: LeadingFrames,
    pub analysis: AnalysisSettings,
    pub images: ImageSettings,
    pub network: NetworkSettings,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub targets: TargetNormalizer,
    pub placement: PlacementSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_VERSION,
            seed: None,
            manifest: PathBuf::new(),
            views: vec![ViewId::V1],
            output_dir: PathBuf::new(),
            epochs: 10,
            batch_size: 16,
            max_steps: None,
            checkpoint_every: 0,
            leading_frames: LeadingFrames::Drop,
            analysis: AnalysisSettings::default(),
            images: ImageSettings::default(),
            network: NetworkSettings::default(),
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            targets: TargetNormalizer::default(),
            placement: PlacementSettings::default(),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || p.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut cfg: Self = toml::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.manifest = resolve(base, &cfg.manifest);
        cfg.output_dir = resolve(base, &cfg.output_dir);
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidConfig("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported config version {}",
                self.format_version
            )));
        }
        self.seed()?;
        if self.manifest.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("`manifest` is required".into()));
        }
        if !self.manifest.exists() {
            return Err(Error::MissingFile(self.manifest.clone()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("`output_dir` is required".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.placement.max_views == 0 {
            return Err(Error::InvalidConfig("placement.max_views must be positive".into()));
        }
        self.adam.validate()?;
        self.images.clahe.validate()?;
        if !(self.loss.lambda >= 0.0) {
            return Err(Error::InvalidConfig("loss.lambda must be nonnegative".into()));
        }
        if !(self.targets.gain_ref > 0.0) {
            return Err(Error::InvalidConfig("targets.gain_ref must be positive".into()));
        }
        self.network_spec(self.canonical_views()?)?.validate()
    }

    pub fn canonical_views(&self) -> Result<Vec<ViewId>> {
        let set = ViewSet::new(self.views.iter().copied());
        if set.is_empty() {
            return Err(Error::EmptyViewSet);
        }
        if set.len() != self.views.len() {
            return Err(Error::InvalidConfig("views listed twice".into()));
        }
        Ok(set.to_vec())
    }

    pub fn network_spec(&self, views: Vec<ViewId>) -> Result<NetworkSpec> {
        let n = &self.network;
        let spec = NetworkSpec {
            views,
            input_height: self.images.height,
            input_width: self.images.width,
            encoder: n.encoder.clone(),
            fusion: n.fusion,
            tied_encoders: n.tied_encoders,
            lstm_hidden: n.lstm_hidden,
            timesteps: n.timesteps,
            out_dim: self.analysis.lpc_order + 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn load_options(&self, views: Vec<ViewId>) -> LoadOptions {
        let a = &self.analysis;
        LoadOptions {
            views,
            image_width: self.images.width,
            image_height: self.images.height,
            clahe: self.images.clahe,
            analysis: AnalysisConfig {
                lpc_order: a.lpc_order,
                pre_emphasis: a.pre_emphasis,
                window: a.window,
                lsp_quant_bits: a.lsp_quant_bits,
                ..AnalysisConfig::default()
            },
        }
    }

    fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let text = toml::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join("config.toml"), text)?;
        Ok(())
    }
}

/// Clips in memory plus their aligned, target-encoded windows.
#[derive(Debug)]
pub struct PreparedData {
    pub clips: Vec<LoadedClip>,
    pub train: Vec<WindowTarget>,
    pub val: Vec<WindowTarget>,
    pub features: FeatureInfo,
}

/// A window, the clip it belongs to and its normalized target.
#[derive(Debug, Clone)]
pub struct WindowTarget {
    pub clip: usize,
    pub window: SampleWindow,
    pub target: Vec<f64>,
}

impl PreparedData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let views = cfg.canonical_views()?;
        let manifest = load_manifest(&cfg.manifest)?;
        if manifest.is_empty() {
            return Err(Error::InvalidConfig("manifest lists no clips".into()));
        }
        let opts = cfg.load_options(views);
        let clips = manifest
            .iter()
            .map(|clip| load_clip(clip, &opts))
            .collect::<Result<Vec<_>>>()?;
        let first = &clips[0];
        let sample_rate = first.audio.sample_rate();
        let fps = first.manifest.fps;
        if let Some(c) = clips
            .iter()
            .find(|c| c.audio.sample_rate() != sample_rate || c.manifest.fps != fps)
        {
            return Err(Error::InvalidConfig(format!(
                "clip {} differs in sample rate or fps from {}",
                c.manifest.clip_id, first.manifest.clip_id
            )));
        }
        let features = FeatureInfo {
            sample_rate,
            fps,
            analysis: first.track.config.clone(),
            normalizer: cfg.targets,
            clahe: cfg.images.clahe,
        };
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (ci, clip) in clips.iter().enumerate() {
            let aligned = align(&clip.manifest, &clip.track, cfg.network.timesteps, cfg.leading_frames)?;
            if aligned.dropped_trailing > 0 {
                log::info!(
                    "clip {}: {} trailing frames have no feature frame",
                    clip.manifest.clip_id,
                    aligned.dropped_trailing
                );
            }
            let dest = match clip.manifest.split {
                Split::Train => &mut train,
                Split::Val => &mut val,
                Split::Test => continue,
            };
            for w in aligned.windows {
                let target = cfg.targets.encode(&clip.track.frames[w.target_index]);
                dest.push(WindowTarget {
                    clip: ci,
                    window: w,
                    target,
                });
            }
        }
        Ok(Self {
            clips,
            train,
            val,
            features,
        })
    }

    pub fn samples<'a>(&'a self, windows: &[WindowTarget], views: &[ViewId]) -> Vec<Sample<'a>> {
        windows
            .iter()
            .map(|w| Sample {
                id: format!("{}:{}", self.clips[w.clip].manifest.clip_id, w.window.target_index),
                frames: self.clips[w.clip].window_frames(&w.window, views),
                target: w.target.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub steps: u64,
    /// Mean loss over all training windows before the first update.
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub val_loss: Option<f64>,
    pub loss_log: String,
}

fn loss_log_header() -> String {
    format!("# silentspeech loss log v{LOSS_LOG_VERSION}\nstep\tepoch\ttrain_loss\tval_loss\n")
}

#[derive(Serialize)]
struct Summary {
    format_version: u32,
    seed: u64,
    views: String,
    steps: u64,
    initial_train_loss: f64,
    final_train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    val_loss: Option<f64>,
}

/// Trains one model on `views`. When `out` is given, the loss log,
/// checkpoints and a summary are written there.
pub fn train_model(
    data: &PreparedData,
    views: &[ViewId],
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    let seed = cfg.seed()?;
    if data.train.is_empty() {
        return Err(Error::InvalidConfig("no training windows".into()));
    }
    let spec = cfg.network_spec(views.to_vec())?;
    let mut net = Network::new(spec, seed)?;
    let adam = AdamConfig { seed, ..cfg.adam };
    let mut trainer = Trainer::new(&net, adam, cfg.loss)?;
    let train_samples = data.samples(&data.train, views);
    let val_samples = data.samples(&data.val, views);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let save = |net: &Network, steps: u64, name: &str| -> Result<()> {
        if let Some(dir) = out {
            Checkpoint {
                seed,
                step: steps,
                network: net.clone(),
                features: Some(data.features.clone()),
            }
            .save(&dir.join(name))?;
        }
        Ok(())
    };

    let initial_train_loss = evaluate(&net, &train_samples, &cfg.loss)?;
    let mut log = loss_log_header();
    let mut steps = 0u64;
    let mut val_loss = None;
    let budget = cfg.max_steps.unwrap_or(u64::MAX);
    let indices: Vec<usize> = (0..train_samples.len()).collect();
    'epochs: for epoch in 0..cfg.epochs {
        let batches = crate::dataset::make_batches(&indices, cfg.batch_size, seed, epoch as u64);
        let last_batch = batches.len() - 1;
        for (b, batch) in batches.iter().enumerate() {
            let samples: Vec<Sample> = batch.iter().map(|&i| train_samples[i].clone()).collect();
            let loss = match trainer.step(&mut net, &samples) {
                Ok(l) => l,
                Err(e) => {
                    let _ = writeln!(log, "# aborted at step {}: {e}", steps + 1);
                    if let Some(dir) = out {
                        fs::write(dir.join("loss_log.tsv"), &log)?;
                    }
                    return Err(e);
                }
            };
            steps += 1;
            let stop = steps >= budget;
            let val = if (b == last_batch || stop) && !val_samples.is_empty() {
                let v = evaluate(&net, &val_samples, &cfg.loss)?;
                val_loss = Some(v);
                v.to_string()
            } else {
                "-".into()
            };
            let _ = writeln!(log, "{steps}\t{epoch}\t{loss}\t{val}");
            if stop {
                break 'epochs;
            }
        }
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            save(&net, steps, &format!("checkpoint_epoch{:04}.ckpt", epoch + 1))?;
        }
    }
    let final_train_loss = evaluate(&net, &train_samples, &cfg.loss)?;
    if val_loss.is_none() && !val_samples.is_empty() {
        val_loss = Some(evaluate(&net, &val_samples, &cfg.loss)?);
    }
    if let Some(dir) = out {
        fs::write(dir.join("loss_log.tsv"), &log)?;
        save(&net, steps, "checkpoint.ckpt")?;
        let summary = Summary {
            format_version: SUMMARY_VERSION,
            seed,
            views: ViewSet::new(views.iter().copied()).label(),
            steps,
            initial_train_loss,
            final_train_loss,
            val_loss,
        };
        fs::write(
            dir.join("summary.toml"),
            toml::to_string(&summary).map_err(|e| Error::Format(e.to_string()))?,
        )?;
    }
    Ok(TrainOutcome {
        network: net,
        steps,
        initial_train_loss,
        final_train_loss,
        val_loss,
        loss_log: log,
    })
}

/// `cmd_train`: validates, loads the data, trains and writes artifacts.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = PreparedData::load(cfg)?;
    cfg.echo(&cfg.output_dir)?;
    train_model(&data, &cfg.canonical_views()?, cfg, Some(&cfg.output_dir))
}

/// Predicts one feature frame per video frame. The first `T - 1` frames,
/// which lack a full window, repeat the first prediction.
pub fn predict_track(
    net: &Network,
    info: &FeatureInfo,
    frames: &BTreeMap<ViewId, Vec<Tensor>>,
) -> Result<FeatureTrack> {
    let views = &net.spec().views;
    let t = net.spec().timesteps;
    let n = frames.get(&views[0]).map_or(0, Vec::len);
    if n < t {
        return Err(Error::InvalidConfig(format!(
            "clip has {n} frames, fewer than the {t}-frame window"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for i in t - 1..n {
        let window: Vec<Vec<&Tensor>> = views
            .iter()
            .map(|v| frames[v][i + 1 - t..=i].iter().collect())
            .collect();
        let raw = net.predict(&window)?;
        let frame = info.normalizer.decode_raw(&raw);
        if out.is_empty() {
            out.extend(std::iter::repeat_n(frame.clone(), t - 1));
        }
        out.push(frame);
    }
    Ok(FeatureTrack {
        frames: out,
        config: info.analysis.clone(),
        sample_rate: info.sample_rate,
    })
}

#[derive(Debug, Clone)]
pub struct InferredClip {
    pub clip_id: String,
    pub track: FeatureTrack,
    pub audio: AudioSignal,
}

/// Predicts and synthesizes (white-noise excitation) one clip.
pub fn infer_clip(ckpt: &Checkpoint, clip: &ClipManifest, seed: u64) -> Result<InferredClip> {
    let info = ckpt
        .features
        .as_ref()
        .ok_or_else(|| Error::Format("checkpoint carries no feature settings".into()))?;
    if crate::audio::video_hop(info.sample_rate, clip.fps) != info.analysis.hop {
        return Err(Error::GridMismatch(format!(
            "clip {} at {} fps does not match the checkpoint's hop {}",
            clip.clip_id, clip.fps, info.analysis.hop
        )));
    }
    let spec = ckpt.network.spec();
    let frames = load_frames(clip, &spec.views, spec.input_width, spec.input_height, &info.clahe)?;
    let track = predict_track(&ckpt.network, info, &frames)?;
    let audio = synthesize(&track, &Excitation::WhiteNoise(seed))?;
    Ok(InferredClip {
        clip_id: clip.clip_id.clone(),
        track,
        audio,
    })
}

/// `cmd_infer`: one WAV and one feature track per clip in `out`.
pub fn run_infer(
    checkpoint: &Path,
    manifest: &Path,
    views: &[ViewId],
    out: &Path,
    seed: u64,
) -> Result<Vec<InferredClip>> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let wanted = ViewSet::new(views.iter().copied()).to_vec();
    let have = &ckpt.network.spec().views;
    if wanted.len() != have.len() {
        return Err(Error::ViewCountMismatch {
            expected: have.len(),
            got: wanted.len(),
        });
    }
    if &wanted != have {
        return Err(Error::InvalidConfig(format!(
            "checkpoint was trained on {}, not {}",
            ViewSet::new(have.iter().copied()),
            ViewSet::new(wanted.iter().copied())
        )));
    }
    let clips = load_manifest(manifest)?;
    fs::create_dir_all(out)?;
    let mut results = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        let r = infer_clip(&ckpt, clip, seed.wrapping_add(i as u64))?;
        write_wav(out.join(format!("{}.wav", r.clip_id)), &r.audio)?;
        save_track(out.join(format!("{}.lspt", r.clip_id)), &r.track)?;
        results.push(r);
    }
    Ok(results)
}

fn metric_direction(metric: &str) -> Result<MetricDirection> {
    match metric {
        "val_loss" | "lsd" => Ok(MetricDirection::LowerIsBetter),
        "lsp_corr" | "pesq" => Ok(MetricDirection::HigherIsBetter),
        other => Err(Error::InvalidConfig(format!("unknown placement metric {other:?}"))),
    }
}

fn truncate(a: &AudioSignal, len: usize) -> Result<AudioSignal> {
    AudioSignal::new(a.samples()[..len].to_vec(), a.sample_rate())
}

/// Validation-split scores of a trained model: `val_loss`, `lsp_corr`,
/// `lsd`, and `pesq` when a tool is configured and present.
pub fn score_model(
    data: &PreparedData,
    net: &Network,
    cfg: &ExperimentConfig,
    seed: u64,
    scratch: Option<&Path>,
) -> Result<BTreeMap<String, f64>> {
    let views = &net.spec().views;
    let val = data.samples(&data.val, views);
    if val.is_empty() {
        return Err(Error::InvalidConfig("placement needs validation clips".into()));
    }
    let mut scores = BTreeMap::new();
    scores.insert("val_loss".to_string(), evaluate(net, &val, &cfg.loss)?);
    let (mut corr, mut lsd, mut pesq) = (Vec::new(), Vec::new(), Vec::new());
    for (i, clip) in data.clips.iter().enumerate() {
        if clip.manifest.split != Split::Val {
            continue;
        }
        let track = predict_track(net, &data.features, &clip.frames)?;
        let n = track.len().min(clip.track.len());
        let cut = |t: &FeatureTrack| FeatureTrack {
            frames: t.frames[..n].to_vec(),
            ..t.clone()
        };
        corr.push(lsp_trajectory_correlation(&cut(&clip.track), &cut(&track))?);
        let audio = synthesize(&track, &Excitation::WhiteNoise(seed.wrapping_add(i as u64)))?;
        let len = audio.len().min(clip.audio.len());
        let (reference, test) = (truncate(&clip.audio, len)?, truncate(&audio, len)?);
        lsd.push(log_spectral_distance(&reference, &test, &data.features.analysis)?);
        if let (Some(tool), Some(dir)) = (&cfg.placement.pesq, scratch) {
            let (rp, tp) = (
                dir.join(format!("{}_ref.wav", clip.manifest.clip_id)),
                dir.join(format!("{}_test.wav", clip.manifest.clip_id)),
            );
            write_wav(&rp, &reference)?;
            write_wav(&tp, &test)?;
            if let Some(p) = external_pesq(&rp, &tp, tool)? {
                pesq.push(p);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    scores.insert("lsp_corr".into(), mean(&corr));
    scores.insert("lsd".into(), mean(&lsd));
    if !pesq.is_empty() {
        scores.insert("pesq".into(), mean(&pesq));
    }
    Ok(scores)
}

/// `cmd_placement`: one model per view subset of size up to
/// `placement.max_views`, same seed and budget for each, ranked on the
/// validation split.
pub fn run_placement(cfg: &ExperimentConfig) -> Result<PlacementReport> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let direction = metric_direction(&cfg.placement.metric)?;
    let data = PreparedData::load(cfg)?;
    if data.val.is_empty() {
        return Err(Error::InvalidConfig("placement needs validation clips".into()));
    }
    cfg.echo(&cfg.output_dir)?;
    let available = ViewSet::new(cfg.views.iter().copied());
    let mut results = BTreeMap::new();
    for subset in enumerate_combinations(&available, cfg.placement.max_views) {
        let dir = cfg.output_dir.join(subset.label());
        log::info!("placement: training {subset}");
        let outcome = train_model(&data, &subset.to_vec(), cfg, Some(&dir))?;
        let scores = score_model(&data, &outcome.network, cfg, seed, Some(&dir))?;
        results.insert(subset, scores);
    }
    let report = placement_report(&results, &cfg.placement.metric, direction)?;
    fs::write(cfg.output_dir.join("placement.txt"), report.to_text())?;
    fs::write(cfg.output_dir.join("placement.json"), report.to_json()?)?;
    Ok(report)
}
