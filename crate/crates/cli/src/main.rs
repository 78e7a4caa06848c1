//! `silentspeech`: batch front end for feature extraction, training,
//! inference, evaluation, view placement and synthetic data.
//!
//! Exit status is 0 on success, 1 on runtime failure and 2 on usage,
//! configuration or missing-file errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use silentspeech::audio::track_io::{load_track, save_track};
use silentspeech::audio::wav::{read_wav, write_wav, write_wav_float};
use silentspeech::audio::{analyze, residual, synthesize, video_hop};
use silentspeech::dataset::synth::{synth_dataset, SynthSpec};
use silentspeech::experiment::{run_infer, run_placement, run_train, ExperimentConfig};
use silentspeech::metrics::{external_pesq, quality_report, PesqMode, PesqTool};
use silentspeech::{AnalysisConfig, Error, Excitation, ViewSet, Window};

#[derive(Parser)]
#[command(name = "silentspeech", version, about = "Speech reconstruction from multi-view silent video")]
struct Cli {
    /// Seed for every random choice; overrides any seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// LPC/LSP analysis and resynthesis of WAV files.
    #[command(subcommand)]
    Features(FeaturesCommand),
    /// Train one model from an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Reconstruct audio for every clip of a manifest.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Views the checkpoint was trained on, e.g. `V1,V2`.
        #[arg(long)]
        views: String,
        #[arg(long, default_value = "infer")]
        out: PathBuf,
    },
    /// Compare a reconstruction against a reference recording.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        analysis: AnalysisFlags,
        /// External PESQ executable, if available.
        #[arg(long, requires = "pesq_mode")]
        pesq: Option<PathBuf>,
        /// Narrowband or wideband scoring; there is no default.
        #[arg(long, value_enum)]
        pesq_mode: Option<Band>,
    },
    /// Train and rank one model per view subset.
    Placement {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic multi-view dataset with ground truth.
    SynthData {
        /// TOML file of generator settings; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FeaturesCommand {
    /// Analyse a WAV file into a feature track.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write the prediction residual as a float WAV.
        #[arg(long)]
        residual: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisFlags,
    },
    /// Resynthesize a feature track.
    Reconstruct {
        #[arg(long)]
        track: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Excite with this residual instead of seeded white noise.
        #[arg(long)]
        residual: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnalysisFlags {
    /// Video frame rate that sets the hop (`sample_rate / fps`).
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Explicit hop in samples; overrides `--fps`.
    #[arg(long)]
    hop: Option<usize>,
    /// Frame length in samples (default: twice the hop).
    #[arg(long)]
    frame_len: Option<usize>,
    #[arg(long, default_value_t = 16)]
    order: usize,
    #[arg(long, default_value_t = 0.97)]
    pre_emphasis: f64,
    #[arg(long, value_enum, default_value_t = WindowKind::Hamming)]
    window: WindowKind,
    /// Uniform LSP quantizer resolution in bits.
    #[arg(long)]
    quant_bits: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowKind {
    Hamming,
    Hann,
    Rectangular,
}

#[derive(Clone, Copy, ValueEnum)]
enum Band {
    Nb,
    Wb,
}

impl AnalysisFlags {
    fn config(&self, sample_rate: u32) -> Result<AnalysisConfig, Error> {
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(Error::InvalidConfig("--fps must be positive".into()));
        }
        let hop = self.hop.unwrap_or_else(|| video_hop(sample_rate, self.fps));
        let config = AnalysisConfig {
            frame_len: self.frame_len.unwrap_or(2 * hop),
            hop,
            lpc_order: self.order,
            pre_emphasis: self.pre_emphasis,
            window: match self.window {
                WindowKind::Hamming => Window::Hamming,
                WindowKind::Hann => Window::Hann,
                WindowKind::Rectangular => Window::Rectangular,
            },
            lsp_quant_bits: self.quant_bits,
        };
        config.validate()?;
        Ok(config)
    }
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64, Error> {
    seed.ok_or_else(|| Error::InvalidConfig(format!("{what} needs --seed")))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn features(cmd: FeaturesCommand, seed: Option<u64>) -> Result<(), Error> {
    match cmd {
        FeaturesCommand::Extract {
            input,
            output,
            residual: residual_path,
            analysis,
        } => {
            let signal = read_wav(&input)?;
            let config = analysis.config(signal.sample_rate())?;
            let track = analyze(&signal, &config)?;
            save_track(&output, &track)?;
            if let Some(path) = residual_path {
                write_wav_float(path, &residual(&signal, &track)?)?;
            }
            println!("{} frames written to {}", track.len(), output.display());
        }
        FeaturesCommand::Reconstruct {
            track,
            output,
            residual,
        } => {
            let track = load_track(&track)?;
            let excitation = match residual {
                Some(path) => Excitation::Provided(read_wav(path)?),
                None => Excitation::WhiteNoise(require_seed(seed, "white-noise excitation")?),
            };
            let audio = synthesize(&track, &excitation)?;
            write_wav(&output, &audio)?;
            println!("{} samples written to {}", audio.len(), output.display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Features(cmd) => features(cmd, cli.seed)?,
        Command::Train { config } => {
            let cfg = load_config(&config, cli.seed)?;
            let outcome = run_train(&cfg)?;
            println!(
                "{} steps; train loss {:.6} -> {:.6}",
                outcome.steps, outcome.initial_train_loss, outcome.final_train_loss
            );
            if let Some(v) = outcome.val_loss {
                println!("validation loss {v:.6}");
            }
            println!("artifacts in {}", cfg.output_dir.display());
        }
        Command::Infer {
            checkpoint,
            manifest,
            views,
            out,
        } => {
            let seed = require_seed(cli.seed, "infer")?;
            let views: ViewSet = views.parse()?;
            for clip in run_infer(&checkpoint, &manifest, &views.to_vec(), &out, seed)? {
                println!("{}: {} samples", clip.clip_id, clip.audio.len());
            }
        }
        Command::Evaluate {
            reference,
            test,
            analysis,
            pesq,
            pesq_mode,
        } => {
            let (r, t) = (read_wav(&reference)?, read_wav(&test)?);
            let config = analysis.config(r.sample_rate())?;
            let mos = match (pesq, pesq_mode) {
                (Some(path), Some(band)) => {
                    let mode = match band {
                        Band::Nb => PesqMode::Narrowband,
                        Band::Wb => PesqMode::Wideband,
                    };
                    external_pesq(&reference, &test, &PesqTool { path, mode })?
                }
                _ => None,
            };
            let report = quality_report(&r, &t, &config, mos)?;
            println!("seg_snr\t{:.4}", report.seg_snr);
            println!("lsd\t{:.4}", report.lsd);
            println!("lsp_corr\t{:.4}", report.lsp_corr);
            match report.pesq {
                Some(p) => println!("pesq\t{p:.4}"),
                None => println!("pesq\tunavailable"),
            }
        }
        Command::Placement { config } => {
            let cfg = load_config(&config, cli.seed)?;
            print!("{}", run_placement(&cfg)?.to_text());
        }
        Command::SynthData { spec, out } => {
            let seed = require_seed(cli.seed, "synth-data")?;
            let spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
                        std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
                        _ => e.into(),
                    })?;
                    toml::from_str::<SynthSpec>(&text)?
                }
                None => SynthSpec::default(),
            };
            let (manifest, clips) = synth_dataset(seed, &spec, &out)?;
            println!("{} clips; manifest {}", clips.len(), manifest.display());
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_)
        | Error::MissingFile(_)
        | Error::Parse(_)
        | Error::EmptyViewSet
        | Error::ViewCountMismatch { .. } => 2,
        Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
