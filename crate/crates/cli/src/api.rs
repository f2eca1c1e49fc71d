//! Records and request handling shared by the CLI verbs and the HTTP service,
//! so both produce the same bytes for the same inputs.

use std::collections::HashMap;

use absa_rl_core::data::{FORMAT_VERSION, GenerationFileRecord};
use absa_rl_core::grpo::{AdvantageConfig, AdvantageMode};
use absa_rl_core::rejection::{build_training_batch, BatchStats, GenerationGroup, RejectionError, Selection};
use absa_rl_core::reward::ConfigError;
use absa_rl_core::toy::TrainConfig;
use absa_rl_core::{GoldRecord, RawGeneration, RewardBreakdown, Scorer, ScoringConfig, SentimentLabel, Task, Triplet, TripletSet};
use serde::{Deserialize, Serialize};

/// One scored sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: String,
    pub sample: usize,
    #[serde(flatten)]
    pub reward: RewardBreakdown,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedSample {
    pub sample: usize,
    pub advantage: f64,
    pub r_total: f64,
    pub text: String,
}

/// Filtering outcome for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredRecord {
    pub id: String,
    pub correctness_flags: Vec<bool>,
    pub all_correct: bool,
    pub all_incorrect: bool,
    pub retained: Vec<RetainedSample>,
}

/// Per-request reward settings layered over the server defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub w_tag: Option<f64>,
    pub w_flow: Option<f64>,
    pub w_struct: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, base: &ScoringConfig) -> ScoringConfig {
        let mut cfg = base.clone();
        let r = &mut cfg.reward;
        let f = &mut cfg.format;
        for (slot, value) in [
            (&mut r.lambda, self.lambda),
            (&mut r.gamma, self.gamma),
            (&mut r.tau, self.tau),
            (&mut f.w_tag, self.w_tag),
            (&mut f.w_flow, self.w_flow),
            (&mut f.w_struct, self.w_struct),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        cfg
    }
}

/// Gold payload inside a request item; the id comes from the item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldSpec {
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<SentimentLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplets: Option<Vec<Triplet>>,
}

impl GoldSpec {
    pub fn from_record(g: &GoldRecord) -> Self {
        use absa_rl_core::GoldPayload::*;
        let (aspect, label, triplets) = match &g.payload {
            Absc { aspect, label } => (Some(aspect.clone()), Some(*label), None),
            Aoste { triplets } => (None, None, Some(triplets.0.clone())),
        };
        Self { text: g.text.clone(), aspect, label, triplets }
    }

    fn into_record(self, id: &str, task: Task, field: String) -> Result<GoldRecord, ApiError> {
        let record = match (task, self.aspect, self.label, self.triplets) {
            (Task::Absc, Some(aspect), Some(label), None) => GoldRecord::absc(id, self.text, aspect, label),
            (Task::Aoste, None, None, Some(triplets)) => GoldRecord::aoste(id, self.text, TripletSet::new(triplets)),
            (Task::Absc, ..) => return Err(ApiError::new(field, "absc gold needs `aspect` and `label` only")),
            (Task::Aoste, ..) => return Err(ApiError::new(field, "aoste gold needs `triplets` only")),
        };
        Ok(record)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreItem {
    pub id: String,
    #[serde(default)]
    pub sample: usize,
    pub generation: String,
    pub gold: GoldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub task: Task,
    #[serde(default)]
    pub config: Overrides,
    pub items: Vec<ScoreItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub format_version: u32,
    pub task: Task,
    pub config: ScoringConfig,
    pub results: Vec<ScoredItem>,
    /// Wall time; the only field that varies between identical requests.
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterGroup {
    pub id: String,
    pub samples: Vec<String>,
    pub gold: GoldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterRequest {
    pub task: Task,
    #[serde(default)]
    pub config: Overrides,
    #[serde(default)]
    pub advantage_mode: Option<AdvantageMode>,
    #[serde(default)]
    pub selection: Option<Selection>,
    pub groups: Vec<FilterGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResponse {
    pub format_version: u32,
    pub task: Task,
    pub groups: Vec<FilteredRecord>,
    pub stats: BatchStats,
    pub elapsed_ms: f64,
}

/// Client error pointing at the offending request field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub field: String,
    pub reason: String,
}

impl ApiError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }

    fn config(e: ConfigError) -> Self {
        let field = match e {
            ConfigError::Lambda(_) => "config.lambda",
            ConfigError::Gamma(_) => "config.gamma",
            ConfigError::Tau(_) => "config.tau",
            ConfigError::NegativeWeight(_) | ConfigError::WeightSum(_) => "config.w_tag",
            ConfigError::FlowSaturation | ConfigError::Lexicon(_) => "config",
        };
        Self::new(field, e.to_string())
    }
}

/// Deserializes a request body, reporting the path of the first bad field.
pub fn parse_request<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    let value = serde_path_to_error::deserialize(&mut *de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::new(if path == "." { "body".to_string() } else { path }, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| ApiError::new("body", e.to_string()))?;
    Ok(value)
}

pub fn build_scorer(cfg: ScoringConfig) -> Result<Scorer, ApiError> {
    Scorer::new(cfg).map_err(ApiError::config)
}

pub fn score_one(scorer: &Scorer, id: &str, sample: usize, text: &str, gold: &GoldRecord) -> ScoredItem {
    let j = scorer.judge(&RawGeneration::new(text), gold);
    ScoredItem { id: id.to_string(), sample, reward: j.reward, correct: j.correct }
}

/// Pairs every generation record with its gold record, in generation order.
pub fn join<'a>(
    gold: &'a [GoldRecord],
    generations: &'a [GenerationFileRecord],
) -> Result<Vec<(&'a GoldRecord, &'a GenerationFileRecord)>, String> {
    let by_id: HashMap<&str, &GoldRecord> = gold.iter().map(|g| (g.id.as_str(), g)).collect();
    generations
        .iter()
        .map(|r| by_id.get(r.id.as_str()).map(|g| (*g, r)).ok_or_else(|| format!("generation id {:?} has no gold record", r.id)))
        .collect()
}

pub fn score_files(scorer: &Scorer, gold: &[GoldRecord], generations: &[GenerationFileRecord]) -> Result<Vec<ScoredItem>, String> {
    Ok(join(gold, generations)?
        .into_iter()
        .flat_map(|(g, r)| r.samples.iter().enumerate().map(move |(k, s)| score_one(scorer, &r.id, k, s, g)))
        .collect())
}

pub fn filter_groups(
    groups: &[GenerationGroup],
    scorer: &Scorer,
    mode: AdvantageMode,
    advantage: &AdvantageConfig<f64>,
    selection: Selection,
) -> Result<(Vec<FilteredRecord>, BatchStats), RejectionError> {
    let batch = build_training_batch::<f64>(groups, scorer, mode, advantage, selection)?;
    let records = batch
        .groups
        .into_iter()
        .zip(groups)
        .map(|(sg, g)| FilteredRecord {
            id: sg.input_id,
            correctness_flags: sg.filtered.correctness_flags,
            all_correct: sg.filtered.all_correct,
            all_incorrect: sg.filtered.all_incorrect,
            retained: sg
                .retained
                .iter()
                .map(|r| RetainedSample {
                    sample: r.generation_index,
                    advantage: r.advantage,
                    r_total: sg.rewards[r.generation_index].r_total,
                    text: g.generations[r.generation_index].text.clone(),
                })
                .collect(),
        })
        .collect();
    Ok((records, batch.stats))
}

pub fn groups_from_files(gold: &[GoldRecord], generations: &[GenerationFileRecord]) -> Result<Vec<GenerationGroup>, String> {
    Ok(join(gold, generations)?
        .into_iter()
        .map(|(g, r)| GenerationGroup {
            input_id: r.id.clone(),
            generations: r.samples.iter().map(|s| RawGeneration::new(s.as_str())).collect(),
            gold: g.clone(),
        })
        .collect())
}

/// `/score` without timing.
pub fn handle_score(defaults: &ScoringConfig, req: ScoreRequest) -> Result<ScoreResponse, ApiError> {
    if req.items.is_empty() {
        return Err(ApiError::new("items", "must contain at least one item"));
    }
    let config = req.config.apply(defaults);
    let scorer = build_scorer(config.clone())?;
    let mut results = Vec::with_capacity(req.items.len());
    for (i, item) in req.items.into_iter().enumerate() {
        let gold = item.gold.into_record(&item.id, req.task, format!("items[{i}].gold"))?;
        results.push(score_one(&scorer, &item.id, item.sample, &item.generation, &gold));
    }
    Ok(ScoreResponse { format_version: FORMAT_VERSION, task: req.task, config, results, elapsed_ms: 0.0 })
}

/// `/filter` without timing.
pub fn handle_filter(defaults: &TrainConfig, req: FilterRequest) -> Result<FilterResponse, ApiError> {
    if req.groups.is_empty() {
        return Err(ApiError::new("groups", "must contain at least one group"));
    }
    let scorer = build_scorer(req.config.apply(&defaults.scoring))?;
    let mut groups = Vec::with_capacity(req.groups.len());
    for (i, g) in req.groups.into_iter().enumerate() {
        if g.samples.is_empty() {
            return Err(ApiError::new(format!("groups[{i}].samples"), "must contain at least one sample"));
        }
        let gold = g.gold.into_record(&g.id, req.task, format!("groups[{i}].gold"))?;
        let generations = g.samples.iter().map(|s| RawGeneration::new(s.as_str())).collect();
        groups.push(GenerationGroup { input_id: g.id, generations, gold });
    }
    let mode = req.advantage_mode.unwrap_or(defaults.advantage_mode);
    let selection = req.selection.unwrap_or(defaults.selection);
    let (records, stats) = filter_groups(&groups, &scorer, mode, &defaults.advantage, selection)
        .map_err(|e| ApiError::new("groups", e.to_string()))?;
    Ok(FilterResponse { format_version: FORMAT_VERSION, task: req.task, groups: records, stats, elapsed_ms: 0.0 })
}
