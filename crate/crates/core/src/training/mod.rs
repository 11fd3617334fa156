//! Loss, backpropagation through time, optimization and the training loop.

pub mod backward;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use backward::{backward, backward_sample, BackwardOptions, Gradients};
pub use loss::{accuracy, loss, loss_and_grad};
pub use optim::{adam_step, Moments, OptimizerState, PlateauScheduler};
pub use trainer::{
    evaluate, train_epoch, write_metrics, EpochMetrics, EpochStats, Evaluation, Preset, TrainConfig, Trainer,
    METRICS_HEADER,
};
