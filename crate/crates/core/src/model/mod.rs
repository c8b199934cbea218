//! The network, its training loop and persistence.

mod checkpoint;
mod config;
mod eval;
mod forward;
mod objective;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use config::{apply_variant, Assembly, HeadInput, HyperConfig, LossTerms, Variant};
pub use eval::{evaluate, factual_rmse};
pub use forward::{predict_all_counterfactuals, predict_outcome};
pub use objective::{Batch, LossBreakdown, Objective, RmseForm};
pub use params::{HiCiParams, ModelDims};
pub use train::{
    split_seed, stream_rng, train, train_with, validation_loss, EpochLog, LossLog, TrainOptions, TrainResult,
    STREAM_BATCH, STREAM_INIT, STREAM_SPLIT,
};
