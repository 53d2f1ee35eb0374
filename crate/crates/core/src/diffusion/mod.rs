//! Flow diffusion: noise schedule, denoiser, training and DDIM sampling.

use std::path::PathBuf;

use thiserror::Error;

pub mod io;
pub mod model;
pub mod sample;
pub mod schedule;
pub mod tensor;
pub mod train;

pub use io::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use model::{
    noise_from_clean, training_loss, Conditioning, Denoiser, DenoiserParams, LossItem, LossTerms, ModelDims,
    OracleDenoiser, TrainingSample,
};
pub use sample::ddim_sample;
pub use schedule::{cosine_schedule, forward_noise, noise_values, timestep_embedding, NoiseSchedule};
pub use tensor::{FlowTensor, GrayImage, TensorError, CHANNELS, CH_U, CH_V, CH_VIS};
pub use train::{train, TrainOptions};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid step count {0}")]
    BadSteps(usize),
    #[error("timestep {t} outside 1..={steps}")]
    BadTimestep { t: usize, steps: usize },
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid model dimensions: {0}")]
    BadDims(String),
    #[error("loss is not finite")]
    NonfiniteLoss,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("conditioning does not match model header: {0}")]
    HeaderMismatch(String),
    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<TensorError> for DiffusionError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::ShapeMismatch { expected, got } => DiffusionError::ShapeMismatch { expected, got },
        }
    }
}
