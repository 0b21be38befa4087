//! Training orchestration, evaluation and prediction.

mod config;
mod runlog;
mod train;

pub use config::{parse_dims, ClassWeightMode, TrainConfig};
pub use runlog::{EpochRecord, RunLog};
pub use train::{
    evaluate, predict_dataset, predict_path, predict_volume, train, train_with, Dataset, Prediction, TrainOutcome,
};
