//! Corpus-level metrics and ablation tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::matching::{match_triplets, MatchResult};
use crate::triplet::{ParseFailure, SentimentLabel, TripletSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("no runs given")]
    NoRuns,
    #[error("run {run:?} has datasets {found:?}, expected {expected:?}")]
    DatasetMismatch { run: String, expected: Vec<String>, found: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: SentimentLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold occurrences.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbscMetrics {
    pub total: usize,
    pub correct: usize,
    pub parse_failures: usize,
    pub accuracy: f64,
    /// Mean F1 over classes that occur in gold.
    pub macro_f1: f64,
    /// Support-weighted F1 over classes that occur in gold.
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Accuracy and F1 for polarity classification. Parse failures are wrong
/// answers and count as misses for their gold class.
pub fn evaluate_absc(pairs: &[(Result<SentimentLabel, ParseFailure>, SentimentLabel)]) -> Result<AbscMetrics, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut tp = [0usize; 3];
    let mut predicted = [0usize; 3];
    let mut support = [0usize; 3];
    let mut parse_failures = 0;
    for (pred, gold) in pairs {
        support[gold.index()] += 1;
        match pred {
            Ok(p) => {
                predicted[p.index()] += 1;
                if p == gold {
                    tp[gold.index()] += 1;
                }
            }
            Err(_) => parse_failures += 1,
        }
    }
    let per_class: Vec<ClassMetrics> = SentimentLabel::ALL
        .iter()
        .map(|&label| {
            let i = label.index();
            let m = MatchResult::from_counts(tp[i], predicted[i] - tp[i], support[i] - tp[i]);
            ClassMetrics { label, precision: m.precision, recall: m.recall, f1: m.f1, support: support[i] }
        })
        .collect();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.support > 0).collect();
    let correct: usize = tp.iter().sum();
    let total = pairs.len();
    Ok(AbscMetrics {
        total,
        correct,
        parse_failures,
        accuracy: correct as f64 / total as f64,
        macro_f1: present.iter().map(|c| c.f1).sum::<f64>() / present.len() as f64,
        weighted_f1: present.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / total as f64,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AosteMetrics {
    pub sentences: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Micro-averaged triplet metrics from corpus-summed counts.
pub fn evaluate_aoste(pairs: &[(TripletSet, TripletSet)]) -> Result<AosteMetrics, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (pred, gold) in pairs {
        let m = match_triplets(pred, gold);
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
    }
    let m = MatchResult::from_counts(tp, fp, fn_);
    Ok(AosteMetrics { sentences: pairs.len(), tp, fp, fn_, precision: m.precision, recall: m.recall, f1: m.f1 })
}

/// One named run with a score per dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub name: String,
    pub scores: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub values: Vec<f64>,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub datasets: Vec<String>,
    pub rows: Vec<AblationRow>,
}

/// Lines runs up by dataset and appends an unweighted `Avg` column. Every
/// run must cover the same datasets; column order follows the first run.
pub fn ablation_report(runs: &[AblationRun]) -> Result<AblationTable, EvalError> {
    let first = runs.first().ok_or(EvalError::NoRuns)?;
    let datasets: Vec<String> = first.scores.iter().map(|(d, _)| d.clone()).collect();
    let mut sorted = datasets.clone();
    sorted.sort();
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let mut names: Vec<String> = run.scores.iter().map(|(d, _)| d.clone()).collect();
        names.sort();
        if names != sorted {
            return Err(EvalError::DatasetMismatch { run: run.name.clone(), expected: sorted, found: names });
        }
        let values: Vec<f64> = datasets
            .iter()
            .map(|d| run.scores.iter().find(|(n, _)| n == d).map(|(_, v)| *v).unwrap())
            .collect();
        let average = values.iter().sum::<f64>() / values.len().max(1) as f64;
        rows.push(AblationRow { name: run.name.clone(), values, average });
    }
    Ok(AblationTable { datasets, rows })
}

/// Label/value table rendered as aligned text or CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TextTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn to_text(&self) -> String {
        let cols = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let mut s = String::new();
            for (i, cell) in cells.iter().enumerate().take(cols) {
                if i == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[i]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[i]);
                }
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(&self.header);
        for row in &self.rows {
            line(row);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = row.iter().map(|c| csv_cell(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_cell(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

fn fmt_metric(x: f64) -> String {
    format!("{x:.4}")
}

impl AblationTable {
    pub fn to_table(&self) -> TextTable {
        let mut header = vec!["run".to_string()];
        header.extend(self.datasets.iter().cloned());
        header.push("Avg".into());
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.name.clone()];
                row.extend(r.values.iter().map(|v| fmt_metric(*v)));
                row.push(fmt_metric(r.average));
                row
            })
            .collect();
        TextTable { header, rows }
    }
}

impl AbscMetrics {
    /// `use_weighted` swaps the F1 column to the support-weighted variant.
    pub fn to_table(&self, use_weighted: bool) -> TextTable {
        let f1_name = if use_weighted { "weighted_f1" } else { "macro_f1" };
        let f1 = if use_weighted { self.weighted_f1 } else { self.macro_f1 };
        let mut rows = vec![
            vec!["accuracy".to_string(), fmt_metric(self.accuracy)],
            vec![f1_name.to_string(), fmt_metric(f1)],
        ];
        for c in &self.per_class {
            rows.push(vec![format!("f1_{}", c.label), fmt_metric(c.f1)]);
        }
        rows.push(vec!["total".into(), self.total.to_string()]);
        rows.push(vec!["parse_failures".into(), self.parse_failures.to_string()]);
        TextTable { header: vec!["metric".into(), "value".into()], rows }
    }
}

impl AosteMetrics {
    pub fn to_table(&self) -> TextTable {
        let rows = vec![
            vec!["precision".to_string(), fmt_metric(self.precision)],
            vec!["recall".to_string(), fmt_metric(self.recall)],
            vec!["f1".to_string(), fmt_metric(self.f1)],
            vec!["tp".to_string(), self.tp.to_string()],
            vec!["fp".to_string(), self.fp.to_string()],
            vec!["fn".to_string(), self.fn_.to_string()],
            vec!["sentences".to_string(), self.sentences.to_string()],
        ];
        TextTable { header: vec!["metric".into(), "value".into()], rows }
    }
}
