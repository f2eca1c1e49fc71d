//! Sentiment labels and aspect/opinion/polarity triplets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Closed set of polarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [Self::Positive, Self::Negative, Self::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
            Self::Neutral => "neutral",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Positive => 0,
            Self::Negative => 1,
            Self::Neutral => 2,
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An answer that could not be mapped onto the expected output type.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unparseable answer: {reason}")]
pub struct ParseFailure {
    pub reason: String,
}

impl ParseFailure {
    pub fn new(reason: impl Into<String>) -> Self {
        Self { reason: reason.into() }
    }
}

impl FromStr for SentimentLabel {
    type Err = ParseFailure;

    /// Case-insensitive and whitespace-tolerant.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "positive" => Ok(Self::Positive),
            "negative" => Ok(Self::Negative),
            "neutral" => Ok(Self::Neutral),
            _ => Err(ParseFailure::new(format!("unknown polarity {:?}", s.trim()))),
        }
    }
}

/// Canonical form used for substring comparison: lowercased, stripped of
/// leading/trailing non-alphanumerics, internal whitespace collapsed.
pub fn normalize_term(term: &str) -> String {
    let lowered = term.to_lowercase();
    let stripped = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TripletError {
    #[error("aspect term {0:?} is empty after normalization")]
    EmptyAspect(String),
    #[error("opinion term {0:?} is empty after normalization")]
    EmptyOpinion(String),
}

/// One (aspect, opinion, polarity) unit. Serialized as a 3-element array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(
    try_from = "(String, String, SentimentLabel)",
    into = "(String, String, SentimentLabel)"
)]
pub struct Triplet {
    aspect: String,
    opinion: String,
    polarity: SentimentLabel,
    norm_aspect: String,
    norm_opinion: String,
}

impl Triplet {
    pub fn new(
        aspect: impl Into<String>,
        opinion: impl Into<String>,
        polarity: SentimentLabel,
    ) -> Result<Self, TripletError> {
        let aspect = aspect.into();
        let opinion = opinion.into();
        let norm_aspect = normalize_term(&aspect);
        if norm_aspect.is_empty() {
            return Err(TripletError::EmptyAspect(aspect));
        }
        let norm_opinion = normalize_term(&opinion);
        if norm_opinion.is_empty() {
            return Err(TripletError::EmptyOpinion(opinion));
        }
        Ok(Self { aspect, opinion, polarity, norm_aspect, norm_opinion })
    }

    pub fn aspect(&self) -> &str {
        &self.aspect
    }

    pub fn opinion(&self) -> &str {
        &self.opinion
    }

    pub fn polarity(&self) -> SentimentLabel {
        self.polarity
    }

    pub fn normalized_aspect(&self) -> &str {
        &self.norm_aspect
    }

    pub fn normalized_opinion(&self) -> &str {
        &self.norm_opinion
    }

    /// `self` (predicted) is compatible with `gold` when both normalized terms
    /// are substrings of the gold ones and the polarities agree.
    pub fn compatible_with(&self, gold: &Triplet) -> bool {
        self.polarity == gold.polarity
            && gold.norm_aspect.contains(self.norm_aspect.as_str())
            && gold.norm_opinion.contains(self.norm_opinion.as_str())
    }
}

impl TryFrom<(String, String, SentimentLabel)> for Triplet {
    type Error = TripletError;

    fn try_from((aspect, opinion, polarity): (String, String, SentimentLabel)) -> Result<Self, Self::Error> {
        Triplet::new(aspect, opinion, polarity)
    }
}

impl From<Triplet> for (String, String, SentimentLabel) {
    fn from(t: Triplet) -> Self {
        (t.aspect, t.opinion, t.polarity)
    }
}

/// Ordered collection of triplets for one sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TripletSet(pub Vec<Triplet>);

impl TripletSet {
    pub fn new(triplets: Vec<Triplet>) -> Self {
        Self(triplets)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triplet> {
        self.0.iter()
    }

    /// Renders the answer-text form `(aspect, opinion, polarity); ...`.
    ///
    /// Backslash, comma, semicolon and parentheses inside terms are escaped
    /// with a backslash.
    pub fn to_answer_text(&self) -> String {
        self.0
            .iter()
            .map(|t| format!("({}, {}, {})", escape_term(&t.aspect), escape_term(&t.opinion), t.polarity))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl FromIterator<Triplet> for TripletSet {
    fn from_iter<I: IntoIterator<Item = Triplet>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a TripletSet {
    type Item = &'a Triplet;
    type IntoIter = std::slice::Iter<'a, Triplet>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

fn escape_term(term: &str) -> String {
    let mut out = String::with_capacity(term.len());
    for c in term.chars() {
        if matches!(c, '\\' | ',' | ';' | '(' | ')') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}
