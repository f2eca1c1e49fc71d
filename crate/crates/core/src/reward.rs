//! Rule-based reward: `R = λ·R_format + (1 − λ)·R_answer`.
//!
//! The format part scores tag presence, transitional cues in the reasoning,
//! and whether the tag structure is exactly right. The answer part is exact
//! match for ABSC and a penalised soft F1 for AOSTE.

use serde::{Deserialize, Serialize};

use crate::data::{GoldPayload, GoldRecord};
use crate::matching::{match_triplets, MatchResult};
use crate::trace::{
    default_lexicon, parse_answer_absc, parse_answer_aoste, parse_trace, Lexicon, LexiconError, ParsedTrace,
    RawGeneration, TransitionReport,
};
use crate::triplet::{ParseFailure, SentimentLabel, TripletSet};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("lambda out of range: {0} (expected 0 <= lambda <= 1)")]
    Lambda(f64),
    #[error("gamma out of range: {0} (expected a finite value >= 0)")]
    Gamma(f64),
    #[error("tau out of range: {0} (expected 0 < tau <= 1)")]
    Tau(f64),
    #[error("format weights must be finite and non-negative, got {0:?}")]
    NegativeWeight([f64; 3]),
    #[error("format weights must sum to 1, got {0}")]
    WeightSum(f64),
    #[error("flow saturation count must be positive")]
    FlowSaturation,
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormatConfig {
    pub w_tag: f64,
    pub w_flow: f64,
    pub w_struct: f64,
    /// Distinct cues needed for a full logical-flow score.
    pub flow_saturation_count: u32,
    pub lexicon: Vec<String>,
}

impl Default for FormatConfig {
    fn default() -> Self {
        Self { w_tag: 0.4, w_flow: 0.3, w_struct: 0.3, flow_saturation_count: 2, lexicon: default_lexicon() }
    }
}

impl FormatConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = [self.w_tag, self.w_flow, self.w_struct];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(ConfigError::NegativeWeight(w));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(ConfigError::WeightSum(sum));
        }
        if self.flow_saturation_count == 0 {
            return Err(ConfigError::FlowSaturation);
        }
        Lexicon::new(&self.lexicon)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub lambda: f64,
    pub gamma: f64,
    /// AOSTE generations with F1 at or above this are correct.
    pub tau: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { lambda: 0.2, gamma: 0.05, tau: 1.0 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ConfigError::Lambda(self.lambda));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(ConfigError::Gamma(self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(ConfigError::Tau(self.tau));
        }
        Ok(())
    }
}

/// Reward and format settings together.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub reward: RewardConfig,
    pub format: FormatConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatScores {
    pub r_tag: f64,
    pub r_flow: f64,
    pub r_struct: f64,
    pub r_format: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_tag: f64,
    pub r_flow: f64,
    pub r_struct: f64,
    pub r_format: f64,
    /// Below zero is possible for AOSTE.
    pub r_answer: f64,
    pub r_total: f64,
}

/// Scores the trace structure. Expects a validated config.
pub fn format_reward(trace: &ParsedTrace, transitions: &TransitionReport, cfg: &FormatConfig) -> FormatScores {
    let diag = &trace.tag_diagnostics;
    let r_tag = diag.tag_kinds_present() as f64 / 4.0;
    let r_flow = (transitions.distinct_cue_count as f64 / cfg.flow_saturation_count as f64).min(1.0);
    let r_struct = if diag.well_formed { 1.0 } else { 0.0 };
    let r_format = (cfg.w_tag * r_tag + cfg.w_flow * r_flow + cfg.w_struct * r_struct).clamp(0.0, 1.0);
    FormatScores { r_tag, r_flow, r_struct, r_format }
}

pub fn answer_reward_absc(pred: &Result<SentimentLabel, ParseFailure>, gold: SentimentLabel) -> f64 {
    match pred {
        Ok(label) if *label == gold => 1.0,
        _ => 0.0,
    }
}

/// `F1 − γ·|FN − FP|`, deliberately unclamped.
pub fn answer_reward_aoste(m: &MatchResult, gamma: f64) -> f64 {
    m.f1 - gamma * m.fn_.abs_diff(m.fp) as f64
}

pub fn combine_reward(r_format: f64, r_answer: f64, lambda: f64) -> Result<f64, ConfigError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ConfigError::Lambda(lambda));
    }
    Ok(lambda * r_format + (1.0 - lambda) * r_answer)
}

/// Answer-side outcome for one generation.
#[derive(Debug, Clone, PartialEq)]
pub enum AnswerOutcome {
    Absc(Result<SentimentLabel, ParseFailure>),
    /// An unparseable answer is matched as an empty prediction for the
    /// counts, but its answer reward is 0 as for ABSC.
    Aoste { predicted: Result<TripletSet, ParseFailure>, matched: MatchResult },
}

/// Full scoring result for one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Judgement {
    pub trace: ParsedTrace,
    pub transitions: TransitionReport,
    pub answer: AnswerOutcome,
    pub reward: RewardBreakdown,
    pub correct: bool,
}

/// Validated scoring configuration; all scoring methods are infallible.
#[derive(Debug, Clone)]
pub struct Scorer {
    config: ScoringConfig,
    lexicon: Lexicon,
}

impl Scorer {
    pub fn new(config: ScoringConfig) -> Result<Self, ConfigError> {
        config.reward.validate()?;
        config.format.validate()?;
        let lexicon = Lexicon::new(&config.format.lexicon)?;
        Ok(Self { config, lexicon })
    }

    pub fn config(&self) -> &ScoringConfig {
        &self.config
    }

    pub fn judge(&self, generation: &RawGeneration, gold: &GoldRecord) -> Judgement {
        let trace = parse_trace(generation);
        let transitions = self.lexicon.detect(&trace.reasoning_text);
        let fmt = format_reward(&trace, &transitions, &self.config.format);
        let rc = &self.config.reward;

        let (answer, r_answer, correct) = match &gold.payload {
            GoldPayload::Absc { label, .. } => {
                let pred = parse_answer_absc(&trace.answer_text);
                let r = answer_reward_absc(&pred, *label);
                (AnswerOutcome::Absc(pred), r, r == 1.0)
            }
            GoldPayload::Aoste { triplets } => {
                let predicted = parse_answer_aoste(&trace.answer_text).map(|a| a.triplets);
                let empty = TripletSet::default();
                let matched = match_triplets(predicted.as_ref().unwrap_or(&empty), triplets);
                let r = if predicted.is_ok() { answer_reward_aoste(&matched, rc.gamma) } else { 0.0 };
                let correct = predicted.is_ok() && matched.f1 >= rc.tau;
                (AnswerOutcome::Aoste { predicted, matched }, r, correct)
            }
        };

        let r_total = rc.lambda * fmt.r_format + (1.0 - rc.lambda) * r_answer;
        let reward = RewardBreakdown {
            r_tag: fmt.r_tag,
            r_flow: fmt.r_flow,
            r_struct: fmt.r_struct,
            r_format: fmt.r_format,
            r_answer,
            r_total,
        };
        Judgement { trace, transitions, answer, reward, correct }
    }

    pub fn score(&self, generation: &RawGeneration, gold: &GoldRecord) -> RewardBreakdown {
        self.judge(generation, gold).reward
    }

    /// Binary correctness used by rejection sampling.
    pub fn is_correct(&self, generation: &RawGeneration, gold: &GoldRecord) -> bool {
        self.judge(generation, gold).correct
    }
}

impl Default for Scorer {
    fn default() -> Self {
        Self::new(ScoringConfig::default()).expect("default scoring config is valid")
    }
}

pub fn score_generation(generation: &RawGeneration, gold: &GoldRecord, scorer: &Scorer) -> RewardBreakdown {
    scorer.score(generation, gold)
}

pub fn is_correct(generation: &RawGeneration, gold: &GoldRecord, scorer: &Scorer) -> bool {
    scorer.is_correct(generation, gold)
}
