//! Splitting raw generations into reasoning and answer segments.
//!
//! A generation is expected to look like
//! `<think>reasoning</think><answer>answer</answer>`. Parsing never fails:
//! anything unexpected is reported through [`TagDiagnostics`] and scored by
//! the format reward instead.

use serde::{Deserialize, Serialize};

use crate::triplet::{normalize_term, ParseFailure, SentimentLabel, Triplet, TripletSet};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

/// Cue words searched for when scoring logical flow.
pub const DEFAULT_TRANSITIONS: [&str; 12] = [
    "first", "firstly", "second", "secondly", "then", "next", "therefore", "thus", "however",
    "because", "finally", "overall",
];

pub fn default_lexicon() -> Vec<String> {
    DEFAULT_TRANSITIONS.iter().map(|s| s.to_string()).collect()
}

/// Full policy output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawGeneration {
    pub text: String,
    /// Zero when unknown.
    #[serde(default)]
    pub token_count: usize,
}

impl RawGeneration {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), token_count: 0 }
    }
}

impl From<&str> for RawGeneration {
    fn from(text: &str) -> Self {
        Self::new(text)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagDiagnostics {
    pub think_open_count: usize,
    pub think_close_count: usize,
    pub answer_open_count: usize,
    pub answer_close_count: usize,
    /// The first complete think block ends before the first complete answer
    /// block starts.
    pub correct_order: bool,
    /// Exactly one of each tag, in `think` then `answer` order.
    pub well_formed: bool,
}

impl TagDiagnostics {
    /// Number of the four tag kinds that occur at least once.
    pub fn tag_kinds_present(&self) -> usize {
        [self.think_open_count, self.think_close_count, self.answer_open_count, self.answer_close_count]
            .iter()
            .filter(|&&c| c > 0)
            .count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedTrace {
    pub reasoning_text: String,
    pub answer_text: String,
    pub tag_diagnostics: TagDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TagKind {
    ThinkOpen,
    ThinkClose,
    AnswerOpen,
    AnswerClose,
}

#[derive(Debug, Clone, Copy)]
struct TagEvent {
    kind: TagKind,
    start: usize,
    end: usize,
}

fn scan_tags(text: &str) -> Vec<TagEvent> {
    const TAGS: [(&str, TagKind); 4] = [
        (THINK_OPEN, TagKind::ThinkOpen),
        (THINK_CLOSE, TagKind::ThinkClose),
        (ANSWER_OPEN, TagKind::AnswerOpen),
        (ANSWER_CLOSE, TagKind::AnswerClose),
    ];
    let mut events = Vec::new();
    let mut i = 0;
    while let Some(off) = text[i..].find('<') {
        let start = i + off;
        let rest = &text[start..];
        match TAGS.iter().find(|(tag, _)| rest.starts_with(tag)) {
            Some(&(tag, kind)) => {
                events.push(TagEvent { kind, start, end: start + tag.len() });
                i = start + tag.len();
            }
            None => i = start + 1,
        }
    }
    events
}

/// Byte span of the first `open` tag that is immediately followed (among tag
/// events) by its `close` tag. The span covers the content only.
fn first_block(events: &[TagEvent], open: TagKind, close: TagKind) -> Option<(usize, usize)> {
    events
        .windows(2)
        .find(|w| w[0].kind == open && w[1].kind == close)
        .map(|w| (w[0].end, w[1].start))
}

/// Total: every input yields segments and diagnostics.
///
/// When a tag kind occurs more than once the first complete block is used.
/// A block is complete when its closing tag is the next tag marker after the
/// opening one, so extracted segments never contain tag markers.
pub fn parse_trace(raw: &RawGeneration) -> ParsedTrace {
    let text = raw.text.as_str();
    let events = scan_tags(text);
    let count = |kind| events.iter().filter(|e| e.kind == kind).count();

    let think = first_block(&events, TagKind::ThinkOpen, TagKind::ThinkClose);
    let answer = first_block(&events, TagKind::AnswerOpen, TagKind::AnswerClose);

    let correct_order = match (think, answer) {
        (Some((_, think_end)), Some((answer_start, _))) => {
            think_end + THINK_CLOSE.len() + ANSWER_OPEN.len() <= answer_start
        }
        _ => false,
    };

    let mut diag = TagDiagnostics {
        think_open_count: count(TagKind::ThinkOpen),
        think_close_count: count(TagKind::ThinkClose),
        answer_open_count: count(TagKind::AnswerOpen),
        answer_close_count: count(TagKind::AnswerClose),
        correct_order,
        well_formed: false,
    };
    diag.well_formed = correct_order
        && diag.think_open_count == 1
        && diag.think_close_count == 1
        && diag.answer_open_count == 1
        && diag.answer_close_count == 1;

    let slice = |span: Option<(usize, usize)>| span.map(|(s, e)| text[s..e].to_string()).unwrap_or_default();
    ParsedTrace { reasoning_text: slice(think), answer_text: slice(answer), tag_diagnostics: diag }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionReport {
    /// Cues with at least one occurrence, in lexicon order.
    pub matched_cues: Vec<(String, usize)>,
    pub distinct_cue_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexiconError {
    #[error("transition lexicon is empty")]
    Empty,
    #[error("transition lexicon contains a blank cue")]
    BlankCue,
}

/// Lowercased, de-duplicated cue list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    cues: Vec<String>,
}

impl Lexicon {
    pub fn new<S: AsRef<str>>(cues: &[S]) -> Result<Self, LexiconError> {
        if cues.is_empty() {
            return Err(LexiconError::Empty);
        }
        let mut out: Vec<String> = Vec::with_capacity(cues.len());
        for cue in cues {
            let cue = cue.as_ref().trim().to_lowercase();
            if cue.is_empty() {
                return Err(LexiconError::BlankCue);
            }
            if !out.contains(&cue) {
                out.push(cue);
            }
        }
        Ok(Self { cues: out })
    }

    pub fn cues(&self) -> &[String] {
        &self.cues
    }

    /// Case-insensitive whole-word occurrence counts. A cue matches only
    /// where its neighbours are non-alphanumeric or the string boundary.
    pub fn detect(&self, reasoning_text: &str) -> TransitionReport {
        let haystack = reasoning_text.to_lowercase();
        let mut matched_cues = Vec::new();
        for cue in &self.cues {
            let n = haystack
                .match_indices(cue.as_str())
                .filter(|&(pos, m)| {
                    let before = haystack[..pos].chars().next_back();
                    let after = haystack[pos + m.len()..].chars().next();
                    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
                })
                .count();
            if n > 0 {
                matched_cues.push((cue.clone(), n));
            }
        }
        TransitionReport { distinct_cue_count: matched_cues.len(), matched_cues }
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::new(&DEFAULT_TRANSITIONS).expect("default lexicon is valid")
    }
}

pub fn detect_transitions<S: AsRef<str>>(
    reasoning_text: &str,
    lexicon: &[S],
) -> Result<TransitionReport, LexiconError> {
    Ok(Lexicon::new(lexicon)?.detect(reasoning_text))
}

pub fn parse_answer_absc(answer_text: &str) -> Result<SentimentLabel, ParseFailure> {
    answer_text.parse()
}

/// Triplets recovered from an AOSTE answer plus the number of tuples that
/// were syntactically present but unusable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AosteAnswer {
    pub triplets: TripletSet,
    pub dropped: usize,
}

/// Parses `(aspect, opinion, polarity); (...)`.
///
/// Tuples with the wrong arity, an unknown polarity, or a term that is empty
/// after normalization are dropped and counted. Text between tuples is
/// ignored. Fails when no complete tuple is present at all.
pub fn parse_answer_aoste(answer_text: &str) -> Result<AosteAnswer, ParseFailure> {
    let mut answer = AosteAnswer::default();
    let mut tuples = 0usize;
    let mut chars = answer_text.chars();

    'outer: while let Some(c) = chars.next() {
        if c != '(' {
            continue;
        }
        let mut fields = vec![String::new()];
        loop {
            match chars.next() {
                None => break 'outer,
                Some('\\') => {
                    if let Some(escaped) = chars.next() {
                        fields.last_mut().unwrap().push(escaped);
                    }
                }
                Some(',') => fields.push(String::new()),
                Some(')') => break,
                Some(other) => fields.last_mut().unwrap().push(other),
            }
        }
        tuples += 1;
        match tuple_to_triplet(&fields) {
            Some(t) => answer.triplets.0.push(t),
            None => answer.dropped += 1,
        }
    }

    if tuples == 0 {
        return Err(ParseFailure::new("no (aspect, opinion, polarity) tuple found"));
    }
    Ok(answer)
}

fn tuple_to_triplet(fields: &[String]) -> Option<Triplet> {
    let [aspect, opinion, polarity] = fields else {
        return None;
    };
    if normalize_term(aspect).is_empty() || normalize_term(opinion).is_empty() {
        return None;
    }
    let polarity = parse_answer_absc(polarity).ok()?;
    Triplet::new(aspect.trim(), opinion.trim(), polarity).ok()
}
