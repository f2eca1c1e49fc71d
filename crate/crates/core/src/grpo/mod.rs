//! Group-relative advantages and the decoupled-clip surrogate objective.
//!
//! The objective for one input with `G` sampled outputs is the token mean
//!
//! ```text
//! 1/Σ|O_i| · Σ_i Σ_t min(r_it·Â_i, clip(r_it, 1−ε_low, 1+ε_high)·Â_i)
//! ```
//!
//! with `r_it = exp(logp_new − logp_old)` and `Â_i` the reward standardised
//! within the group. It is a maximisation target; no KL term is added.

mod tabular;

pub use tabular::{
    finite_diff_gradient, surrogate_gradient_tabular, surrogate_objective, PolicyStep, TabularBatch,
};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrpoError {
    #[error("reward group is empty")]
    EmptyGroup,
    #[error("batch has no tokens")]
    EmptyBatch,
    #[error("sequence {0} has no tokens")]
    EmptySequence(usize),
    #[error("probability ratio is not finite (logp_new={logp_new}, logp_old={logp_old})")]
    NonFiniteRatio { logp_new: f64, logp_old: f64 },
    #[error("token at sequence {sequence}, position {position} has no stored old log-probability")]
    MissingOldLogProb { sequence: usize, position: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageConfig<T> {
    /// Added to the population standard deviation.
    pub epsilon_std: T,
}

impl<T: Scalar> Default for AdvantageConfig<T> {
    fn default() -> Self {
        Self { epsilon_std: T::lit(1e-6) }
    }
}

impl<T: Scalar> AdvantageConfig<T> {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.epsilon_std > T::zero() && self.epsilon_std.is_finite() {
            Ok(())
        } else {
            Err(GrpoError::Config(format!("epsilon_std must be positive, got {}", self.epsilon_std)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig<T> {
    pub epsilon_low: T,
    pub epsilon_high: T,
}

impl<T: Scalar> Default for ClipConfig<T> {
    fn default() -> Self {
        Self { epsilon_low: T::lit(0.2), epsilon_high: T::lit(0.28) }
    }
}

impl<T: Scalar> ClipConfig<T> {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.epsilon_low > T::zero() && self.epsilon_low < T::one()) {
            return Err(GrpoError::Config(format!("epsilon_low must be in (0, 1), got {}", self.epsilon_low)));
        }
        if !(self.epsilon_high > T::zero() && self.epsilon_high.is_finite()) {
            return Err(GrpoError::Config(format!("epsilon_high must be positive, got {}", self.epsilon_high)));
        }
        Ok(())
    }

    pub fn lower(&self) -> T {
        T::one() - self.epsilon_low
    }

    pub fn upper(&self) -> T {
        T::one() + self.epsilon_high
    }
}

/// Which rewards the advantage statistics are computed over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvantageMode {
    /// All `G` rewards, before rejection filtering.
    #[default]
    FullGroup,
    /// Only the rewards of generations that survive filtering.
    RetainedOnly,
}

impl std::str::FromStr for AdvantageMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full-group" => Ok(Self::FullGroup),
            "retained-only" => Ok(Self::RetainedOnly),
            other => Err(format!("unknown advantage mode {other:?} (expected full-group or retained-only)")),
        }
    }
}

/// `(R_i − mean) / (std + ε)` with the population standard deviation.
pub fn group_advantages<T: Scalar>(rewards: &[T], cfg: &AdvantageConfig<T>) -> Result<Vec<T>, GrpoError> {
    if rewards.is_empty() {
        return Err(GrpoError::EmptyGroup);
    }
    let n = T::from_count(rewards.len());
    let sum = rewards.iter().fold(T::zero(), |a, &r| a + r);
    let mut mean = sum / n;
    // second pass removes the rounding error of the first mean
    mean = mean + rewards.iter().fold(T::zero(), |a, &r| a + (r - mean)) / n;
    let var = rewards.iter().fold(T::zero(), |a, &r| a + (r - mean) * (r - mean)) / n;
    let denom = var.sqrt() + cfg.epsilon_std;
    Ok(rewards.iter().map(|&r| (r - mean) / denom).collect())
}

pub fn prob_ratio<T: Scalar>(logp_new: T, logp_old: T) -> Result<T, GrpoError> {
    let r = (logp_new - logp_old).exp();
    if r.is_finite() && !r.is_nan() {
        Ok(r)
    } else {
        Err(GrpoError::NonFiniteRatio { logp_new: logp_new.as_f64(), logp_old: logp_old.as_f64() })
    }
}

pub fn clip<T: Scalar>(ratio: T, cfg: &ClipConfig<T>) -> T {
    ratio.max(cfg.lower()).min(cfg.upper())
}

/// `min(r·Â, clip(r)·Â)`.
pub fn clipped_token_objective<T: Scalar>(ratio: T, advantage: T, cfg: &ClipConfig<T>) -> T {
    (ratio * advantage).min(clip(ratio, cfg) * advantage)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord<T> {
    pub logp_new: T,
    pub logp_old: T,
    pub advantage: T,
}

/// Retained sequences of one group plus the rewards of the whole group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupBatch<T> {
    pub sequences: Vec<Vec<TokenRecord<T>>>,
    pub rewards: Vec<T>,
}

impl<T: Scalar> GroupBatch<T> {
    pub fn token_count(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }
}

/// Token mean of the clipped objective over every retained token.
pub fn group_objective<T: Scalar>(batch: &GroupBatch<T>, cfg: &ClipConfig<T>) -> Result<T, GrpoError> {
    if batch.sequences.is_empty() {
        return Err(GrpoError::EmptyBatch);
    }
    if let Some(i) = batch.sequences.iter().position(Vec::is_empty) {
        return Err(GrpoError::EmptySequence(i));
    }
    let mut total = T::zero();
    for tok in batch.sequences.iter().flatten() {
        let r = prob_ratio(tok.logp_new, tok.logp_old)?;
        total = total + clipped_token_objective(r, tok.advantage, cfg);
    }
    Ok(total / T::from_count(batch.token_count()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn eps(e: f64) -> AdvantageConfig<f64> {
        AdvantageConfig { epsilon_std: e }
    }

    #[test]
    fn advantages_examples() {
        assert_eq!(group_advantages(&[1.0, 1.0, 1.0, 1.0], &eps(1e-8)).unwrap(), vec![0.0; 4]);
        let a = group_advantages(&[1.0, 0.0, 0.0, 1.0], &eps(1e-8)).unwrap();
        for (x, e) in a.iter().zip([1.0, -1.0, -1.0, 1.0]) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-7);
        }
        let a = group_advantages(&[0.9, 0.1], &eps(1e-8)).unwrap();
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(a[1], -1.0, epsilon = 1e-7);
        assert_eq!(group_advantages::<f64>(&[], &eps(1e-8)), Err(GrpoError::EmptyGroup));
        assert_eq!(group_advantages(&[3.0], &eps(1e-8)).unwrap(), vec![0.0]);
    }

    #[test]
    fn advantages_in_f32() {
        let a = group_advantages(&[1.0f32, 0.0], &AdvantageConfig::default()).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(prob_ratio(-1.3, -1.3).unwrap(), 1.0);
        assert_abs_diff_eq!(prob_ratio(2f64.ln() - 3.0, -3.0).unwrap(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(prob_ratio(-4f64.ln(), 0.0).unwrap(), 0.25, epsilon = 1e-15);
        assert!(prob_ratio(0.0, -1e4).is_err());
        assert!(prob_ratio(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn clip_examples() {
        let cfg = ClipConfig::default();
        assert_eq!(clipped_token_objective(1.0, 0.7, &cfg), 0.7);
        assert_abs_diff_eq!(clipped_token_objective(1.5, 2.0, &cfg), 2.56, epsilon = 1e-15);
        assert_abs_diff_eq!(clipped_token_objective(0.5, -1.0, &cfg), -0.8, epsilon = 1e-15);
    }

    #[test]
    fn clip_config_validation() {
        assert!(ClipConfig { epsilon_low: 1.0, epsilon_high: 0.2 }.validate().is_err());
        assert!(ClipConfig { epsilon_low: 0.2, epsilon_high: 0.0 }.validate().is_err());
        assert!(ClipConfig { epsilon_low: 0.2, epsilon_high: 3.0 }.validate().is_ok());
        assert!(AdvantageConfig { epsilon_std: 0.0 }.validate().is_err());
    }

    fn tok(value_ratio: f64, advantage: f64) -> TokenRecord<f64> {
        TokenRecord { logp_new: value_ratio.ln() - 1.0, logp_old: -1.0, advantage }
    }

    #[test]
    fn group_objective_examples() {
        let cfg = ClipConfig::default();
        let b = GroupBatch { sequences: vec![vec![tok(1.0, 0.5); 3]], rewards: vec![] };
        assert_abs_diff_eq!(group_objective(&b, &cfg).unwrap(), 0.5, epsilon = 1e-15);

        let b = GroupBatch { sequences: vec![vec![tok(1.0, 1.0); 2], vec![tok(1.0, -1.0); 2]], rewards: vec![] };
        assert_abs_diff_eq!(group_objective(&b, &cfg).unwrap(), 0.0, epsilon = 1e-15);

        let b = GroupBatch { sequences: vec![vec![tok(1.0, 1.0)], vec![tok(1.0, 0.0); 3]], rewards: vec![] };
        assert_abs_diff_eq!(group_objective(&b, &cfg).unwrap(), 0.25, epsilon = 1e-15);

        assert_eq!(group_objective(&GroupBatch::default(), &cfg), Err(GrpoError::EmptyBatch));
        let b = GroupBatch { sequences: vec![vec![tok(1.0, 1.0)], vec![]], rewards: vec![] };
        assert_eq!(group_objective(&b, &cfg), Err(GrpoError::EmptySequence(1)));
    }

    proptest! {
        #[test]
        fn advantages_are_standardised(rewards in proptest::collection::vec(-5.0f64..5.0, 2..17)) {
            let e = 1e-6;
            let a = group_advantages(&rewards, &eps(e)).unwrap();
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() <= 1e-9);
            let rm = rewards.iter().sum::<f64>() / n;
            let std = (rewards.iter().map(|r| (r - rm).powi(2)).sum::<f64>() / n).sqrt();
            if std > 100.0 * e {
                let out_std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!((out_std - std / (std + e)).abs() <= 1e-6);
            }
        }

        #[test]
        fn advantages_affine_invariant(
            rewards in proptest::collection::vec(-1.0f64..1.0, 2..12),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let base = group_advantages(&rewards, &eps(1e-12)).unwrap();
            let moved: Vec<f64> = rewards.iter().map(|r| r * scale + shift).collect();
            let other = group_advantages(&moved, &eps(1e-12)).unwrap();
            let rm = rewards.iter().sum::<f64>() / rewards.len() as f64;
            let spread = rewards.iter().map(|r| (r - rm).abs()).fold(0.0, f64::max);
            prop_assume!(spread > 1e-3);
            for (x, y) in base.iter().zip(&other) {
                prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
            }
        }

        #[test]
        fn clipped_never_exceeds_unclipped(ratio in 1e-3f64..10.0, adv in -5.0f64..5.0) {
            let cfg = ClipConfig::default();
            prop_assert!(clipped_token_objective(ratio, adv, &cfg) <= ratio * adv);
        }

        #[test]
        fn objective_permutation_invariant(values in proptest::collection::vec((0.5f64..1.5, -2.0f64..2.0), 1..12), split in 0usize..12) {
            let cfg = ClipConfig::default();
            let toks: Vec<_> = values.iter().map(|&(r, a)| tok(r, a)).collect();
            let split = split.min(toks.len() - 1).max(1).min(toks.len());
            let mut seqs = vec![toks[..split].to_vec()];
            if split < toks.len() { seqs.push(toks[split..].to_vec()); }
            let a = group_objective(&GroupBatch { sequences: seqs.clone(), rewards: vec![] }, &cfg).unwrap();
            let rev: Vec<_> = seqs.into_iter().rev().map(|mut s| { s.reverse(); s }).collect();
            let b = group_objective(&GroupBatch { sequences: rev, rewards: vec![] }, &cfg).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
