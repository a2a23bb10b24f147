//! Small frame classifier with hard-label and sparse soft-target losses.

mod backprop;
mod loss;
mod metrics;
mod params;
mod train;

use thiserror::Error;

pub use backprop::{backward, context_window, forward, forward_cached, ForwardCache};
pub use loss::{
    hard_ce_loss, soft_ce_loss, soft_ce_loss_with, target_distribution, teacher_distribution, TargetRule,
};
pub use metrics::{decode_tokens, evaluate, token_error_rate, EditCounts, EvalExample, EvalReport, UtteranceScore};
pub use params::{Activation, ArchConfig, Layer, NetParams, DNET_MAGIC, DNET_VERSION};
pub use train::{train, HardExample, LossKind, SoftExample, TrainConfig, TrainOutcome, TrainingSet};

#[derive(Error, Debug)]
pub enum NetError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("label {label} at frame {frame} is outside [0, {n_classes})")]
    LabelOutOfRange {
        frame: usize,
        label: usize,
        n_classes: usize,
    },
    #[error("{frames} frames cannot cover a label delay of {delay}")]
    TooFewFrames { frames: usize, delay: usize },
    #[error("soft target frame {0} has no entries")]
    EmptyTarget(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty reference sequence")]
    EmptyReference,
    #[error("bad model file: {0}")]
    BadModel(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
