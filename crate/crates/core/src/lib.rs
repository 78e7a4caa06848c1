//! Speech reconstruction from multi-view silent video.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`audio`]: short-time LPC analysis, line spectral pairs, inverse filtering
//!   and all-pole resynthesis, plus WAV and feature-track file formats.
//! - [`vision`]: grayscale conversion, bilinear resize and CLAHE for video
//!   frames, with PGM/PPM/PNG readers.
//! - [`nn`]: a small CNN-LSTM regression engine with hand-written backward
//!   passes, a composite MSE + correlation loss and Adam.
//! - [`multiview`]: camera views, feature fusion and placement reports.
//! - [`dataset`]: manifests, frame/feature alignment, batching and a synthetic
//!   audiovisual data generator.
//! - [`metrics`]: segmental SNR, log-spectral distance, LSP trajectory
//!   correlation and an adapter for an external PESQ tool.
//! - [`experiment`]: the training, inference and placement drivers used by
//!   the command line front end.

// `!(x > 0.0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod multiview;
pub mod nn;
pub mod vision;

pub use audio::{
    AnalysisConfig, AudioSignal, Excitation, FeatureTrack, LpcFrame, LspFrame, Window,
};
pub use error::{Error, Result};
pub use multiview::{FusionStrategy, ViewId, ViewSet};
pub use nn::{AdamConfig, LossConfig, Network, NetworkSpec, Tensor};
pub use vision::{ClaheConfig, ImageGray};
