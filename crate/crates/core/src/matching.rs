//! One-to-one triplet matching for AOSTE scoring.

use serde::{Deserialize, Serialize};

use crate::triplet::TripletSet;

/// Counts and derived scores of a prediction against gold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `(predicted index, gold index)`, sorted by predicted index.
    #[serde(default)]
    pub matched_pairs: Vec<(usize, usize)>,
}

impl MatchResult {
    /// Derives precision, recall and F1 from raw counts. Ratios with a zero
    /// denominator are 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { tp, fp, fn_, precision, recall, f1, matched_pairs: Vec::new() }
    }
}

/// Maximum bipartite matching between compatible predicted and gold triplets.
///
/// Compatibility is [`crate::Triplet::compatible_with`]. Uses augmenting paths
/// (Kuhn), which is exact for any set sizes.
pub fn match_triplets(pred: &TripletSet, gold: &TripletSet) -> MatchResult {
    let adjacency: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| gold.iter().enumerate().filter(|(_, g)| p.compatible_with(g)).map(|(j, _)| j).collect())
        .collect();
    let mut gold_owner: Vec<Option<usize>> = vec![None; gold.len()];

    for i in 0..pred.len() {
        let mut visited = vec![false; gold.len()];
        augment(i, &adjacency, &mut visited, &mut gold_owner);
    }

    let mut matched_pairs: Vec<(usize, usize)> =
        gold_owner.iter().enumerate().filter_map(|(j, owner)| owner.map(|i| (i, j))).collect();
    matched_pairs.sort_unstable();

    let tp = matched_pairs.len();
    let mut result = MatchResult::from_counts(tp, pred.len() - tp, gold.len() - tp);
    result.matched_pairs = matched_pairs;
    result
}

fn augment(i: usize, adjacency: &[Vec<usize>], visited: &mut [bool], gold_owner: &mut [Option<usize>]) -> bool {
    for &j in &adjacency[i] {
        if visited[j] {
            continue;
        }
        visited[j] = true;
        if gold_owner[j].is_none_or(|k| augment(k, adjacency, visited, gold_owner)) {
            gold_owner[j] = Some(i);
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triplet::{SentimentLabel::*, Triplet};
    use approx::assert_relative_eq;

    fn set(items: &[(&str, &str, crate::SentimentLabel)]) -> TripletSet {
        items.iter().map(|&(a, o, p)| Triplet::new(a, o, p).unwrap()).collect()
    }

    fn gold() -> TripletSet {
        set(&[("battery life", "great", Positive), ("screen", "dim", Negative)])
    }

    #[test]
    fn identical_sets() {
        let m = match_triplets(&gold(), &gold());
        assert_eq!((m.tp, m.fp, m.fn_), (2, 0, 0));
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.matched_pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn substring_prediction_matches() {
        let m = match_triplets(&set(&[("battery", "great", Positive)]), &gold());
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 1));
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 0.5);
        assert_relative_eq!(m.f1, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn polarity_mismatch_is_not_a_match() {
        let m = match_triplets(&set(&[("screen", "dim", Positive)]), &gold());
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 2));
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn superstring_prediction_does_not_match() {
        let m = match_triplets(&set(&[("the screen", "dim", Negative)]), &gold());
        assert_eq!(m.tp, 0);
    }

    #[test]
    fn greedy_would_be_suboptimal() {
        // pred 0 fits both golds, pred 1 only gold 0; first-fit would pair
        // pred 0 with gold 0 and leave pred 1 unmatched.
        let gold = set(&[("food court", "good", Positive), ("food", "good", Positive)]);
        let pred = set(&[("food", "good", Positive), ("food c", "good", Positive)]);
        let m = match_triplets(&pred, &gold);
        assert_eq!(m.tp, 2);
        let pred = set(&[("food", "good", Positive), ("foo", "good", Positive)]);
        let gold = set(&[("food", "good", Positive), ("salad", "good", Positive)]);
        assert_eq!(match_triplets(&pred, &gold).tp, 1);
    }

    #[test]
    fn empty_sides() {
        let empty = TripletSet::default();
        let m = match_triplets(&empty, &gold());
        assert_eq!((m.tp, m.fp, m.fn_, m.f1), (0, 0, 2, 0.0));
        let m = match_triplets(&gold(), &empty);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 2, 0));
        let m = match_triplets(&empty, &empty);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn adding_compatible_prediction_never_lowers_f1() {
        let base = set(&[("screen", "dim", Negative)]);
        let more = set(&[("screen", "dim", Negative), ("battery", "great", Positive)]);
        assert!(match_triplets(&more, &gold()).f1 >= match_triplets(&base, &gold()).f1);
    }
}
