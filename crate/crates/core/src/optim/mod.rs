//! Update rules and the training loop.

mod train;
mod update;

pub use train::{
    evaluate, layer_distances, predict_all, train, EpochRecord, LayerDistance, LrSchedule,
    MetricsSink, NullSink, StepRecord, TrainConfig, UpdateRule,
};
pub use update::{sgd_update, tensor_name, AdamConfig, AdamState};
