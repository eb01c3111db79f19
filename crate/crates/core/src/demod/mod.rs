//! The neural demodulator: architecture, dataset generation and training.

mod dataset;
mod model;
mod train;

pub use dataset::{generate_dataset, DatasetConfig, TrainingSample};
pub use model::{
    decide, normalize_rows, stack_features, DemodulatorModel, GradientSession, Gradients, Hyperparams, Tape, LAYERS,
};
pub use train::{evaluate, train, EpochRecord, TrainConfig, TrainingHistory};
