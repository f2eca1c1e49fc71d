//! Sample → score → filter → update loop for the tabular toy policy.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::task::{make_tasks, MicroTask};
use super::vocab::{TokenId, Vocabulary};
use crate::data::FORMAT_VERSION;
use crate::grpo::{
    surrogate_gradient_tabular, surrogate_objective, AdvantageConfig, AdvantageMode, ClipConfig, GrpoError,
    PolicyStep, TabularBatch,
};
use crate::policy::{log_softmax, Table, TabularPolicy};
#[cfg(test)]
use crate::policy::softmax;
use crate::rejection::{build_training_batch, BatchStats, GenerationGroup, RejectionError, Selection, DEFAULT_GROUP_SIZE};
use crate::reward::{ConfigError, Scorer, ScoringConfig};
use crate::scalar::Scalar;
use crate::trace::RawGeneration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub group_size: usize,
    /// Tabular scale; LLM-scale runs use values around 1e-6.
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub task_count: usize,
    pub max_length: usize,
    /// Gradient steps per sampled batch; ratios drift from 1 after the first.
    pub inner_updates: usize,
    /// Initial logit bias toward each task's response skeleton, standing in
    /// for a cold-started policy. Answer slots spread the bias evenly over
    /// their candidates, so the answer itself still has to be learned.
    pub warm_start: f64,
    pub selection: Selection,
    pub advantage_mode: AdvantageMode,
    pub scoring: ScoringConfig,
    pub clip: ClipConfig<f64>,
    pub advantage: AdvantageConfig<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: DEFAULT_GROUP_SIZE,
            learning_rate: 0.5,
            iterations: 500,
            seed: 42,
            task_count: 24,
            max_length: 16,
            inner_updates: 1,
            warm_start: 12.0,
            selection: Selection::RejectCorrect,
            advantage_mode: AdvantageMode::FullGroup,
            scoring: ScoringConfig::default(),
            clip: ClipConfig::default(),
            advantage: AdvantageConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Scoring(#[from] ConfigError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Rejection(#[from] RejectionError),
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("group_size", self.group_size),
            ("iterations", self.iterations),
            ("task_count", self.task_count),
            ("max_length", self.max_length),
            ("inner_updates", self.inner_updates),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(TrainError::Config(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.warm_start.is_finite() && self.warm_start >= 0.0) {
            return Err(TrainError::Config(format!("warm_start must be non-negative, got {}", self.warm_start)));
        }
        self.scoring.reward.validate()?;
        self.scoring.format.validate()?;
        self.clip.validate()?;
        self.advantage.validate()?;
        Ok(())
    }
}

/// One sampled token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledStep<T> {
    pub state: usize,
    pub action: TokenId,
    pub logp: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledGeneration<T> {
    pub tokens: Vec<TokenId>,
    pub steps: Vec<SampledStep<T>>,
    pub raw: RawGeneration,
}

/// Samples token by token until EOS or `max_length`. Recorded
/// log-probabilities are the log-softmax of the logits at sampling time.
pub fn sample_generation<T: Scalar, R: Rng + ?Sized>(
    policy: &TabularPolicy<T>,
    input: usize,
    vocab: &Vocabulary,
    rng: &mut R,
) -> SampledGeneration<T> {
    let mut tokens = Vec::with_capacity(policy.max_length());
    let mut steps = Vec::with_capacity(policy.max_length());
    for position in 0..policy.max_length() {
        let state = policy.state(input, position);
        let logps = log_softmax(policy.logits().row(state));
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut action = logps.len() - 1;
        for (k, lp) in logps.iter().enumerate() {
            acc += lp.as_f64().exp();
            if u < acc {
                action = k;
                break;
            }
        }
        tokens.push(action);
        steps.push(SampledStep { state, action, logp: logps[action] });
        if action == vocab.eos() {
            break;
        }
    }
    let raw = RawGeneration { text: vocab.render(&tokens), token_count: tokens.len() };
    SampledGeneration { tokens, steps, raw }
}

/// Per-iteration summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_reward: f64,
    pub mean_format_reward: f64,
    pub retention_fraction: f64,
    pub correct_fraction: f64,
    /// Surrogate value before the update; 0 when the batch was empty.
    pub objective: f64,
    pub gradient_norm: f64,
    pub skipped_groups: usize,
    pub updated: bool,
}

pub type TrainStats = IterationRecord;

/// Sampled batch ready for an update.
#[derive(Debug, Clone)]
pub struct CollectedBatch<T> {
    pub tabular: TabularBatch<T>,
    pub stats: BatchStats,
    pub generations: Vec<Vec<SampledGeneration<T>>>,
}

/// Samples `group_size` generations per task, scores and filters them.
pub fn collect_batch<T: Scalar, R: RngCore + ?Sized>(
    policy: &TabularPolicy<T>,
    tasks: &[MicroTask],
    cfg: &TrainConfig,
    scorer: &Scorer,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<CollectedBatch<T>, TrainError> {
    // one stream per task so sampling order across tasks does not matter
    let streams: Vec<u64> = tasks.iter().map(|_| rng.next_u64()).collect();
    let generations: Vec<Vec<SampledGeneration<T>>> = tasks
        .iter()
        .enumerate()
        .map(|(input, _)| {
            let mut task_rng = ChaCha8Rng::seed_from_u64(streams[input]);
            (0..cfg.group_size).map(|_| sample_generation(policy, input, vocab, &mut task_rng)).collect()
        })
        .collect();

    let groups: Vec<GenerationGroup> = tasks
        .iter()
        .zip(&generations)
        .map(|(task, gens)| GenerationGroup {
            input_id: task.input_id.clone(),
            generations: gens.iter().map(|g| g.raw.clone()).collect(),
            gold: task.gold.clone(),
        })
        .collect();
    let advantage_cfg = AdvantageConfig { epsilon_std: T::lit(cfg.advantage.epsilon_std) };
    let batch = build_training_batch::<T>(&groups, scorer, cfg.advantage_mode, &advantage_cfg, cfg.selection)?;

    let tabular = TabularBatch {
        groups: batch
            .groups
            .iter()
            .zip(&generations)
            .filter(|(g, _)| !g.retained.is_empty())
            .map(|(g, gens)| {
                g.retained
                    .iter()
                    .map(|r| {
                        gens[r.generation_index]
                            .steps
                            .iter()
                            .map(|s| PolicyStep { state: s.state, action: s.action, logp_old: Some(s.logp), advantage: r.advantage })
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    };
    Ok(CollectedBatch { tabular, stats: batch.stats, generations })
}

/// Applies `inner_updates` ascent steps against the frozen old policy.
/// Returns `(objective before the first step, norm of the first gradient)`.
pub fn apply_update<T: Scalar>(
    policy: &mut TabularPolicy<T>,
    batch: &TabularBatch<T>,
    cfg: &TrainConfig,
) -> Result<(T, T), TrainError> {
    let clip = ClipConfig { epsilon_low: T::lit(cfg.clip.epsilon_low), epsilon_high: T::lit(cfg.clip.epsilon_high) };
    let lr = T::lit(cfg.learning_rate);
    let objective = surrogate_objective(policy, batch, &clip)?;
    let mut first_norm = None;
    for _ in 0..cfg.inner_updates {
        let grad = surrogate_gradient_tabular(policy, batch, &clip)?;
        first_norm.get_or_insert_with(|| grad.l2_norm());
        policy.logits_mut().add_scaled(&grad, lr);
    }
    Ok((objective, first_norm.unwrap_or_else(T::zero)))
}

/// One iteration: sample, score, filter, ascend. An empty batch leaves the
/// policy untouched.
pub fn train_step<T: Scalar, R: RngCore + ?Sized>(
    policy: &mut TabularPolicy<T>,
    tasks: &[MicroTask],
    cfg: &TrainConfig,
    scorer: &Scorer,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<TrainStats, TrainError> {
    let collected = collect_batch(policy, tasks, cfg, scorer, vocab, rng)?;
    let stats = &collected.stats;
    let (objective, gradient_norm, updated) = if collected.tabular.groups.is_empty() {
        (0.0, 0.0, false)
    } else {
        let (o, g) = apply_update(policy, &collected.tabular, cfg)?;
        (o.as_f64(), g.as_f64(), true)
    };
    Ok(IterationRecord {
        iteration: 0,
        mean_reward: stats.reward_mean,
        mean_format_reward: stats.format_reward_mean,
        retention_fraction: stats.retention_fraction(),
        correct_fraction: stats.correct_fraction(),
        objective,
        gradient_norm,
        skipped_groups: stats.skipped_groups,
        updated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub format_version: u32,
    pub kind: String,
    pub scalar: String,
    pub config: TrainConfig,
    /// SHA-256 over the little-endian `f64` bytes of the final logits.
    pub final_policy_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub header: ReportHeader,
    pub iterations: Vec<IterationRecord>,
}

impl TrainingReport {
    /// Mean of `field` over the last `n` iterations.
    pub fn tail_mean(&self, n: usize, field: impl Fn(&IterationRecord) -> f64) -> f64 {
        let tail = &self.iterations[self.iterations.len().saturating_sub(n)..];
        tail.iter().map(field).sum::<f64>() / tail.len().max(1) as f64
    }
}

pub fn policy_fingerprint<T: Scalar>(table: &Table<T>) -> String {
    let mut hasher = Sha256::new();
    for v in table.as_slice() {
        hasher.update(v.as_f64().to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Owns the policy, tasks and RNG for a full run.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    config: TrainConfig,
    scorer: Scorer,
    vocab: Vocabulary,
    tasks: Vec<MicroTask>,
    policy: TabularPolicy<T>,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let scorer = Scorer::new(config.scoring.clone())?;
        let vocab = Vocabulary::default();
        let tasks = make_tasks(config.seed, config.task_count, &vocab);
        let mut policy = TabularPolicy::uniform(tasks.len(), config.max_length, vocab.len());
        if config.warm_start > 0.0 {
            let bias = T::lit(config.warm_start);
            for (input, task) in tasks.iter().enumerate() {
                let skeleton = task.skeleton(&vocab);
                for position in 0..config.max_length {
                    let state = policy.state(input, position);
                    // past the skeleton the prior favours stopping
                    let eos = [vocab.eos()];
                    let candidates = skeleton.get(position).map_or(&eos[..], |slot| slot.candidates());
                    for &tok in candidates {
                        policy.logits_mut().set(state, tok, bias);
                    }
                }
            }
        }
        // sampling stream is decoupled from the task-generation stream
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
        Ok(Self { config, scorer, vocab, tasks, policy, rng, iteration: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &TabularPolicy<T> {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut TabularPolicy<T> {
        &mut self.policy
    }

    pub fn tasks(&self) -> &[MicroTask] {
        &self.tasks
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn scorer(&self) -> &Scorer {
        &self.scorer
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn step(&mut self) -> Result<TrainStats, TrainError> {
        let mut stats =
            train_step(&mut self.policy, &self.tasks, &self.config, &self.scorer, &self.vocab, &mut self.rng)?;
        stats.iteration = self.iteration;
        self.iteration += 1;
        Ok(stats)
    }

    pub fn run(mut self) -> Result<TrainingReport, TrainError> {
        let iterations = (0..self.config.iterations).map(|_| self.step()).collect::<Result<Vec<_>, _>>()?;
        Ok(TrainingReport { header: self.header(), iterations })
    }

    pub fn header(&self) -> ReportHeader {
        ReportHeader {
            format_version: FORMAT_VERSION,
            kind: "training_report".into(),
            scalar: std::any::type_name::<T>().into(),
            config: self.config.clone(),
            final_policy_sha256: policy_fingerprint(self.policy.logits()),
        }
    }
}

pub fn run_training(cfg: TrainConfig) -> Result<TrainingReport, TrainError> {
    Trainer::<f64>::new(cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpo::finite_diff_gradient;
    use crate::toy::task::Slot;

    fn small(task_count: usize) -> TrainConfig {
        TrainConfig { task_count, iterations: 5, ..Default::default() }
    }

    /// Policy that emits the gold response for every task with certainty.
    fn oracle_policy(tr: &Trainer<f64>) -> TabularPolicy<f64> {
        let v = tr.vocab();
        let mut p = tr.policy().clone();
        for (input, task) in tr.tasks().iter().enumerate() {
            let label = v.id(task.gold_label().as_str()).unwrap();
            for (pos, slot) in task.skeleton(v).iter().enumerate() {
                let tok = match slot {
                    Slot::Fixed(t) => *t,
                    Slot::Open(c) if c.contains(&label) && pos > 2 => label,
                    Slot::Open(c) if pos <= 2 => c[pos - 1],
                    Slot::Open(_) => task.prompt[1],
                };
                let s = p.state(input, pos);
                p.logits_mut().set(s, tok, 1e6);
            }
        }
        p
    }

    #[test]
    fn recorded_logp_is_log_softmax_at_sampling_time() {
        let tr = Trainer::<f64>::new(small(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for input in 0..4 {
            let g = sample_generation(tr.policy(), input, tr.vocab(), &mut rng);
            assert_eq!(g.raw.token_count, g.tokens.len());
            for s in &g.steps {
                assert!((s.logp - tr.policy().log_prob(s.state, s.action)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_in_the_rng() {
        let tr = Trainer::<f64>::new(small(2)).unwrap();
        let a = sample_generation(tr.policy(), 1, tr.vocab(), &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_generation(tr.policy(), 1, tr.vocab(), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_policy_emits_the_argmax_sequence() {
        let tr = Trainer::<f64>::new(small(6)).unwrap();
        let p = oracle_policy(&tr);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (input, task) in tr.tasks().iter().enumerate() {
            let g = sample_generation(&p, input, tr.vocab(), &mut rng);
            assert_eq!(g.tokens.len(), task.skeleton(tr.vocab()).len());
            assert!(tr.scorer().is_correct(&g.raw, &task.gold), "{}", g.raw.text);
        }
    }

    #[test]
    fn all_correct_batch_leaves_logits_unchanged() {
        let mut tr = Trainer::<f64>::new(small(6)).unwrap();
        *tr.policy_mut() = oracle_policy(&tr);
        let before = tr.policy().clone();
        let stats = tr.step().unwrap();
        assert!(!stats.updated);
        assert_eq!(stats.skipped_groups, 6);
        assert_eq!(stats.retention_fraction, 0.0);
        assert_eq!(tr.policy(), &before);
    }

    #[test]
    fn fresh_batch_is_on_policy() {
        let mut tr = Trainer::<f64>::new(small(6)).unwrap();
        let (tasks, cfg, scorer, vocab) = (tr.tasks().to_vec(), tr.config().clone(), tr.scorer().clone(), tr.vocab().clone());
        let policy = tr.policy().clone();
        let batch = collect_batch(&policy, &tasks, &cfg, &scorer, &vocab, tr.rng_mut()).unwrap();
        assert!(!batch.tabular.is_empty());
        for step in batch.tabular.groups.iter().flatten().flatten() {
            let r = crate::grpo::prob_ratio(policy.log_prob(step.state, step.action), step.logp_old.unwrap()).unwrap();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn update_matches_finite_differences_and_touches_only_visited_states() {
        let cfg = TrainConfig { warm_start: 3.0, ..small(3) };
        let mut tr = Trainer::<f64>::new(cfg.clone()).unwrap();
        let (tasks, scorer, vocab) = (tr.tasks().to_vec(), tr.scorer().clone(), tr.vocab().clone());
        let policy = tr.policy().clone();
        let batch = collect_batch(&policy, &tasks, &cfg, &scorer, &vocab, tr.rng_mut()).unwrap();
        let clip = cfg.clip;
        let analytic = surrogate_gradient_tabular(&policy, &batch.tabular, &clip).unwrap();
        let numeric = finite_diff_gradient(&policy, &batch.tabular, &clip, 1e-5).unwrap();
        for (a, n) in analytic.as_slice().iter().zip(numeric.as_slice()) {
            if a.abs() < 1e-8 {
                assert!((a - n).abs() < 1e-8);
            } else {
                assert!(((a - n) / a).abs() < 1e-5, "{a} vs {n}");
            }
        }

        let mut updated = policy.clone();
        apply_update(&mut updated, &batch.tabular, &cfg).unwrap();
        let visited: std::collections::HashSet<usize> =
            batch.tabular.groups.iter().flatten().flatten().map(|s| s.state).collect();
        for state in 0..policy.logits().n_states() {
            let row = softmax(updated.logits().row(state));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if !visited.contains(&state) {
                assert_eq!(updated.logits().row(state), policy.logits().row(state));
            }
        }
        for step in batch.tabular.groups.iter().flatten().flatten() {
            let expected = policy.logits().get(step.state, step.action);
            let moved = updated.logits().get(step.state, step.action) - expected;
            let g = analytic.get(step.state, step.action);
            assert!((moved - cfg.learning_rate * g).abs() < 1e-12);
        }
    }

    #[test]
    fn non_negative_advantages_never_lower_sampled_logits() {
        let cfg = TrainConfig { warm_start: 3.0, ..small(4) };
        let mut tr = Trainer::<f64>::new(cfg.clone()).unwrap();
        let (tasks, scorer, vocab) = (tr.tasks().to_vec(), tr.scorer().clone(), tr.vocab().clone());
        let policy = tr.policy().clone();
        let mut batch = collect_batch(&policy, &tasks, &cfg, &scorer, &vocab, tr.rng_mut()).unwrap().tabular;
        for step in batch.groups.iter_mut().flatten().flatten() {
            step.advantage = step.advantage.abs();
        }
        let mut updated = policy.clone();
        apply_update(&mut updated, &batch, &cfg).unwrap();
        // with mixed actions at one state the larger push wins, so the
        // guarantee holds for states where every visit took the same action
        let mut actions: std::collections::HashMap<usize, std::collections::HashSet<usize>> = Default::default();
        for step in batch.groups.iter().flatten().flatten() {
            actions.entry(step.state).or_default().insert(step.action);
        }
        let mut checked = 0;
        for (state, acts) in actions.iter().filter(|(_, a)| a.len() == 1) {
            let a = *acts.iter().next().unwrap();
            assert!(updated.logits().get(*state, a) >= policy.logits().get(*state, a));
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn runs_are_bit_identical_and_f32_works() {
        let a = run_training(small(6)).unwrap();
        let b = run_training(small(6)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iterations.len(), 5);
        assert_eq!(a.header.kind, "training_report");
        assert_eq!(a.header.final_policy_sha256.len(), 64);
        assert!(a.iterations.iter().enumerate().all(|(i, r)| r.iteration == i));

        let c = Trainer::<f32>::new(small(6)).unwrap().run().unwrap();
        assert_eq!(c.iterations.len(), 5);
        assert!(c.iterations.iter().all(|r| r.mean_reward.is_finite()));
        assert!(c.header.scalar.contains("f32"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { group_size: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { warm_start: f64::NAN, ..Default::default() },
            TrainConfig { max_length: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(TrainError::Config(_))));
        }
        let mut bad = TrainConfig::default();
        bad.scoring.reward.lambda = 2.0;
        assert!(matches!(Trainer::<f64>::new(bad), Err(TrainError::Scoring(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = TrainConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), cfg);
        let partial: TrainConfig = serde_json::from_str(r#"{"iterations": 7}"#).unwrap();
        assert_eq!(partial.iterations, 7);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"iters": 7}"#).is_err());
    }
}
