//! A small CNN-LSTM regression engine in 64-bit floats.

mod adam;
mod checkpoint;
mod layers;
mod loss;
mod lstm;
mod network;
mod params;
mod project;
mod tensor;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, FeatureInfo, CHECKPOINT_VERSION};
pub use layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d_backward,
    maxpool2d_forward, relu_backward, relu_forward, ConvCache, ConvGrads, DenseGrads, PoolCache,
};
pub use loss::{correlation_term, loss, pearson, row_loss, LossConfig};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmOutput};
pub use network::{EncoderStage, ForwardTrace, Network, NetworkSpec, WindowFrames};
pub use params::ParamSet;
pub use project::{project_normalized, project_normalized_backward, project_to_lsp, softplus};
pub use tensor::Tensor;
pub use train::{batch_gradients, evaluate, Sample, TargetNormalizer, Trainer};
