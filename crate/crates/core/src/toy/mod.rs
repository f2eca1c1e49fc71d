//! Small tabular policy lab for exercising the full training loop.

pub mod task;
pub mod train;
pub mod vocab;

pub use task::{make_tasks, MicroTask, Slot};
pub use train::{
    apply_update, collect_batch, policy_fingerprint, run_training, sample_generation, train_step, CollectedBatch,
    IterationRecord, ReportHeader, SampledGeneration, SampledStep, TrainConfig, TrainError, TrainStats, Trainer,
    TrainingReport,
};
pub use vocab::{TokenId, TokenKind, Vocabulary};
