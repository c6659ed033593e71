//! Graph-transformer regressor, written from scratch on dense matrices:
//! attention-based message passing over circuit DAGs, global mean pooling,
//! a global-feature MLP, a fused regressor head, and Huber/Adam training
//! with plateau learning-rate scheduling and checkpointing.

mod batch;
mod model;
mod optim;
mod train;

pub use batch::GraphBatch;
pub use model::{
    backward, batch_loss, forward, load_checkpoint, save_checkpoint, Checkpoint, ForwardCache,
    Gradients, ModelConfig, ModelParams, CHECKPOINT_VERSION,
};
pub use optim::{huber_grad, huber_loss, Adam, PlateauScheduler};
pub use train::{predict, rmse, train, EpochMetrics, TrainConfig, TrainResult};
