//! Performance-driven rejection sampling.
//!
//! Every generation in a group is checked with the binary correctness
//! predicate; correct ones are discarded and only mistakes reach the policy
//! update. Groups where everything is correct are skipped, and resampling
//! them is left to the caller.

use serde::{Deserialize, Serialize};

use crate::data::GoldRecord;
use crate::grpo::{group_advantages, AdvantageConfig, AdvantageMode, GrpoError};
use crate::reward::{RewardBreakdown, Scorer};
use crate::scalar::Scalar;
use crate::trace::RawGeneration;

/// Default samples per input.
pub const DEFAULT_GROUP_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationGroup {
    pub input_id: String,
    pub generations: Vec<RawGeneration>,
    pub gold: GoldRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredGroup {
    pub retained_indices: Vec<usize>,
    pub correctness_flags: Vec<bool>,
    pub all_correct: bool,
    pub all_incorrect: bool,
}

impl FilteredGroup {
    pub fn from_flags(correctness_flags: Vec<bool>) -> Self {
        let retained_indices: Vec<usize> =
            correctness_flags.iter().enumerate().filter(|(_, &c)| !c).map(|(i, _)| i).collect();
        Self {
            all_correct: retained_indices.is_empty(),
            all_incorrect: retained_indices.len() == correctness_flags.len(),
            retained_indices,
            correctness_flags,
        }
    }

    pub fn correct_count(&self) -> usize {
        self.correctness_flags.len() - self.retained_indices.len()
    }
}

pub fn filter_group(group: &GenerationGroup, scorer: &Scorer) -> FilteredGroup {
    FilteredGroup::from_flags(group.generations.iter().map(|g| scorer.is_correct(g, &group.gold)).collect())
}

/// Which generations are eligible for the update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Drop correct generations.
    #[default]
    RejectCorrect,
    /// Keep everything (plain group-relative training).
    KeepAll,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RejectionError {
    #[error("no groups to build a batch from")]
    NoGroups,
    #[error("group {0:?} has no generations")]
    EmptyGroup(String),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
}

/// A generation that made it into the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetainedGeneration<T> {
    pub generation_index: usize,
    pub advantage: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredGroup<T> {
    pub input_id: String,
    pub rewards: Vec<RewardBreakdown>,
    pub filtered: FilteredGroup,
    /// Empty when the group is skipped.
    pub retained: Vec<RetainedGeneration<T>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub groups: usize,
    pub skipped_groups: usize,
    pub generations: usize,
    pub correct: usize,
    pub retained: usize,
    pub per_group_retained: Vec<usize>,
    pub reward_mean: f64,
    /// Population standard deviation over all scored generations.
    pub reward_std: f64,
    pub format_reward_mean: f64,
}

impl BatchStats {
    pub fn retention_fraction(&self) -> f64 {
        if self.generations == 0 {
            0.0
        } else {
            self.retained as f64 / self.generations as f64
        }
    }

    pub fn correct_fraction(&self) -> f64 {
        if self.generations == 0 {
            0.0
        } else {
            self.correct as f64 / self.generations as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBatch<T> {
    pub groups: Vec<ScoredGroup<T>>,
    pub stats: BatchStats,
}

impl<T> TrainingBatch<T> {
    pub fn is_empty(&self) -> bool {
        self.groups.iter().all(|g| g.retained.is_empty())
    }
}

/// Scores every group, computes advantages, and keeps the generations the
/// update should see.
///
/// With [`AdvantageMode::FullGroup`] advantages come from all `G` rewards;
/// with [`AdvantageMode::RetainedOnly`] from the retained rewards alone.
pub fn build_training_batch<T: Scalar>(
    groups: &[GenerationGroup],
    scorer: &Scorer,
    advantage_mode: AdvantageMode,
    advantage_cfg: &AdvantageConfig<T>,
    selection: Selection,
) -> Result<TrainingBatch<T>, RejectionError> {
    if groups.is_empty() {
        return Err(RejectionError::NoGroups);
    }
    let mut out = Vec::with_capacity(groups.len());
    let mut stats = BatchStats { groups: groups.len(), ..Default::default() };
    let mut all_rewards = Vec::new();
    let mut format_sum = 0.0;

    for group in groups {
        if group.generations.is_empty() {
            return Err(RejectionError::EmptyGroup(group.input_id.clone()));
        }
        let judged: Vec<_> = group.generations.iter().map(|g| scorer.judge(g, &group.gold)).collect();
        let rewards: Vec<RewardBreakdown> = judged.iter().map(|j| j.reward).collect();
        let filtered = FilteredGroup::from_flags(judged.iter().map(|j| j.correct).collect());

        let kept: Vec<usize> = match selection {
            Selection::RejectCorrect => filtered.retained_indices.clone(),
            Selection::KeepAll => (0..rewards.len()).collect(),
        };
        let totals: Vec<T> = rewards.iter().map(|r| T::lit(r.r_total)).collect();
        let retained = if kept.is_empty() {
            stats.skipped_groups += 1;
            Vec::new()
        } else {
            let advantages = match advantage_mode {
                AdvantageMode::FullGroup => {
                    let all = group_advantages(&totals, advantage_cfg)?;
                    kept.iter().map(|&i| all[i]).collect::<Vec<_>>()
                }
                AdvantageMode::RetainedOnly => {
                    let sub: Vec<T> = kept.iter().map(|&i| totals[i]).collect();
                    group_advantages(&sub, advantage_cfg)?
                }
            };
            kept.iter().zip(advantages).map(|(&generation_index, advantage)| RetainedGeneration { generation_index, advantage }).collect()
        };

        stats.generations += rewards.len();
        stats.correct += filtered.correct_count();
        stats.retained += retained.len();
        stats.per_group_retained.push(retained.len());
        all_rewards.extend(rewards.iter().map(|r| r.r_total));
        format_sum += rewards.iter().map(|r| r.r_format).sum::<f64>();

        out.push(ScoredGroup { input_id: group.input_id.clone(), rewards, filtered, retained });
    }

    let n = all_rewards.len() as f64;
    stats.reward_mean = all_rewards.iter().sum::<f64>() / n;
    stats.reward_std = (all_rewards.iter().map(|r| (r - stats.reward_mean).powi(2)).sum::<f64>() / n).sqrt();
    stats.format_reward_mean = format_sum / n;
    Ok(TrainingBatch { groups: out, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triplet::SentimentLabel;
    use approx::assert_abs_diff_eq;

    const RIGHT: &str = "<think>firstly therefore</think><answer>positive</answer>";
    const WRONG: &str = "<think>x</think><answer>negative</answer>";

    fn group(texts: &[&str]) -> GenerationGroup {
        GenerationGroup {
            input_id: "g".into(),
            generations: texts.iter().map(|t| RawGeneration::new(*t)).collect(),
            gold: GoldRecord::absc("g", "the food is great", "food", SentimentLabel::Positive),
        }
    }

    #[test]
    fn filter_examples() {
        let flags = [true, true, false, false, false, true, false, false];
        let texts: Vec<&str> = flags.iter().map(|&c| if c { RIGHT } else { WRONG }).collect();
        let f = filter_group(&group(&texts), &Scorer::default());
        assert_eq!(f.retained_indices, vec![2, 3, 4, 6, 7]);
        assert_eq!(f.correctness_flags, flags.to_vec());
        assert!(!f.all_correct && !f.all_incorrect);

        let f = filter_group(&group(&[RIGHT; 8]), &Scorer::default());
        assert!(f.all_correct && f.retained_indices.is_empty());
        let f = filter_group(&group(&[WRONG; 8]), &Scorer::default());
        assert!(f.all_incorrect && f.retained_indices.len() == 8);
    }

    #[test]
    fn full_group_advantages_for_retained() {
        let g = group(&[RIGHT, WRONG, WRONG, WRONG]);
        let batch = build_training_batch::<f64>(
            &[g],
            &Scorer::default(),
            AdvantageMode::FullGroup,
            &AdvantageConfig::default(),
            Selection::RejectCorrect,
        )
        .unwrap();
        let sg = &batch.groups[0];
        assert_abs_diff_eq!(sg.rewards[0].r_total, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sg.rewards[1].r_total, 0.14, epsilon = 1e-12);
        assert_eq!(sg.retained.len(), 3);
        // mean 0.355, population std sqrt(3)/2·0.86 ≈ 0.3724
        let std = (3.0f64).sqrt() / 4.0 * 0.86;
        for r in &sg.retained {
            assert_abs_diff_eq!(r.advantage, (0.14 - 0.355) / (std + 1e-6), epsilon = 1e-9);
            assert_abs_diff_eq!(r.advantage, -0.57735, epsilon = 1e-4);
        }
        assert_eq!(batch.stats.retained, 3);
        assert_eq!(batch.stats.correct, 1);
    }

    #[test]
    fn all_correct_groups_are_skipped() {
        let groups = vec![group(&[RIGHT; 4]), group(&[RIGHT; 4])];
        let batch = build_training_batch::<f64>(
            &groups,
            &Scorer::default(),
            AdvantageMode::FullGroup,
            &AdvantageConfig::default(),
            Selection::RejectCorrect,
        )
        .unwrap();
        assert!(batch.is_empty());
        assert_eq!(batch.stats.skipped_groups, 2);
    }

    #[test]
    fn retained_only_equal_rewards_zero_advantage() {
        let batch = build_training_batch::<f64>(
            &[group(&[RIGHT, WRONG, WRONG])],
            &Scorer::default(),
            AdvantageMode::RetainedOnly,
            &AdvantageConfig::default(),
            Selection::RejectCorrect,
        )
        .unwrap();
        assert!(batch.groups[0].retained.iter().all(|r| r.advantage == 0.0));
    }

    #[test]
    fn keep_all_retains_correct_generations() {
        let batch = build_training_batch::<f32>(
            &[group(&[RIGHT, WRONG])],
            &Scorer::default(),
            AdvantageMode::FullGroup,
            &AdvantageConfig::default(),
            Selection::KeepAll,
        )
        .unwrap();
        let r = &batch.groups[0].retained;
        assert_eq!(r.len(), 2);
        assert!(r[0].advantage > 0.0 && r[1].advantage < 0.0);
    }

    #[test]
    fn errors() {
        let s = Scorer::default();
        let cfg = AdvantageConfig::<f64>::default();
        assert_eq!(
            build_training_batch(&[], &s, AdvantageMode::FullGroup, &cfg, Selection::RejectCorrect),
            Err(RejectionError::NoGroups)
        );
        assert!(matches!(
            build_training_batch(&[group(&[])], &s, AdvantageMode::FullGroup, &cfg, Selection::RejectCorrect),
            Err(RejectionError::EmptyGroup(_))
        ));
    }
}
