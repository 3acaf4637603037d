//! Attention encoder-decoder with exact gradients, SGD training and
//! checkpoints.

mod checkpoint;
mod network;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta, FORMAT_VERSION, MAGIC};
pub use network::{forward_probs, loss_and_gradients, loss_and_gradients_into, sentence_nll, EncodedSource};
pub use params::{GruParams, ModelDims, ModelParams, Tensor, INIT_SCALE};
pub use train::{
    train, train_from, validation_score, EarlyStopping, EpochRecord, InitMode, TrainConfig, TrainOutcome,
    ValidationMetric,
};
