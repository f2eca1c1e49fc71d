//! Reward computation and RL verification tooling for aspect-based
//! sentiment analysis.
//!
//! The crate is organised bottom-up:
//!
//! * [`trace`] splits a raw generation into its `<think>` and `<answer>`
//!   segments and reports structural diagnostics.
//! * [`reward`] and [`matching`] turn those segments into a scalar reward:
//!   a weighted mix of a format score and a task answer score.
//! * [`grpo`] holds the group-relative advantage, the clipped surrogate and
//!   its analytic gradient for tabular softmax policies.
//! * [`rejection`] drops fully-correct generations before an update.
//! * [`toy`] wires everything into a desk-scale training loop.
//! * [`data`] and [`eval`] cover file formats and corpus metrics.
//!
//! Numeric code in [`grpo`], [`policy`] and [`toy`] is generic over
//! [`Scalar`]; the aliases below pin the common `f64` instantiations.

pub mod data;
pub mod eval;
pub mod grpo;
pub mod matching;
pub mod policy;
pub mod rejection;
pub mod reward;
pub mod scalar;
pub mod toy;
pub mod trace;
pub mod triplet;

pub use scalar::Scalar;

pub use data::{GenerationFileRecord, GoldPayload, GoldRecord, Task};
pub use matching::{match_triplets, MatchResult};
pub use reward::{FormatConfig, RewardBreakdown, RewardConfig, Scorer, ScoringConfig};
pub use trace::{parse_trace, ParsedTrace, RawGeneration, TagDiagnostics, TransitionReport};
pub use triplet::{ParseFailure, SentimentLabel, Triplet, TripletSet};

/// Tabular softmax policy with `f64` logits.
pub type Policy = policy::TabularPolicy<f64>;
/// Tabular softmax policy with `f32` logits.
pub type Policy32 = policy::TabularPolicy<f32>;
/// Logit or gradient table with `f64` entries.
pub type Table = policy::Table<f64>;
/// Clipping bounds in `f64`.
pub type ClipConfig = grpo::ClipConfig<f64>;
/// Advantage normalisation settings in `f64`.
pub type AdvantageConfig = grpo::AdvantageConfig<f64>;
/// Per-token surrogate statistics in `f64`.
pub type TokenRecord = grpo::TokenRecord<f64>;
/// One group of retained sequences in `f64`.
pub type GroupBatch = grpo::GroupBatch<f64>;
/// Training batch for tabular policies in `f64`.
pub type TabularBatch = grpo::TabularBatch<f64>;
/// Toy-lab trainer over `f64` logits.
pub type Trainer = toy::Trainer<f64>;
