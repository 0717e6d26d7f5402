//! From-scratch deep Q-network machinery: a small 3D convolutional
//! action-value network in f64, FIFO replay memory, epsilon-greedy action
//! selection, and one-step TD training with Huber loss and Adam.

mod network;
mod replay;
mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use network::{
    init_network, load_checkpoint, q_forward, save_checkpoint, LayerSpec, QNetwork,
    CHECKPOINT_MAGIC,
};
pub use replay::ReplayMemory;
pub use train::{
    batch_loss, epsilon_at, gradient_check, greedy_action, select_action, td_train_step, Adam,
    GradCheck, TrainHyper,
};

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("observation dims {dims:?} too small: two stride-2 convolutions need at least {min} voxels per axis")]
    ObsTooSmall { dims: (usize, usize, usize), min: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("observation dims mismatch: network expects {expected:?}, got {got:?}")]
    DimsMismatch {
        expected: crate::volume::Dims3,
        got: crate::volume::Dims3,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a network checkpoint: bad magic (expected \"VOXLNET1\")")]
    BadCheckpointMagic,
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint parameter count mismatch: descriptor implies {expected}, file carries {got}")]
    ParamCountMismatch { expected: usize, got: usize },
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("non-finite loss {loss} at training step {step}")]
    NonFiniteLoss { loss: f64, step: u64 },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
}
