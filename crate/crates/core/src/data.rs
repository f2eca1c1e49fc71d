//! Line-delimited JSON file formats.
//!
//! Every file is UTF-8 with one JSON object per line. Writers always emit a
//! header object first, e.g. `{"format_version":1,"kind":"gold","task":"absc"}`;
//! readers accept files with or without it. A header is recognised as an
//! object that has `format_version` and no `id`. Blank lines are skipped.
//!
//! Gold records:
//!
//! ```text
//! {"id":"ex1","text":"...","aspect":"battery life","label":"positive"}
//! {"id":"ex2","text":"...","triplets":[["battery life","great","positive"]]}
//! ```
//!
//! Generation records: `{"id":"ex1","samples":["<think>...</think>..."]}`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::toy::{IterationRecord, ReportHeader, TrainingReport};
use crate::triplet::{SentimentLabel, Triplet, TripletSet};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Absc,
    Aoste,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Absc => "absc",
            Task::Aoste => "aoste",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "absc" => Ok(Task::Absc),
            "aoste" => Ok(Task::Aoste),
            other => Err(format!("unknown task {other:?} (expected absc or aoste)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoldPayload {
    Absc { aspect: String, label: SentimentLabel },
    Aoste { triplets: TripletSet },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGold", into = "RawGold")]
pub struct GoldRecord {
    pub id: String,
    pub text: String,
    pub payload: GoldPayload,
    /// Optional reference trace; carried through, never scored.
    pub reasoning: Option<String>,
}

impl GoldRecord {
    pub fn absc(id: impl Into<String>, text: impl Into<String>, aspect: impl Into<String>, label: SentimentLabel) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            payload: GoldPayload::Absc { aspect: aspect.into(), label },
            reasoning: None,
        }
    }

    pub fn aoste(id: impl Into<String>, text: impl Into<String>, triplets: TripletSet) -> Self {
        Self { id: id.into(), text: text.into(), payload: GoldPayload::Aoste { triplets }, reasoning: None }
    }

    pub fn task(&self) -> Task {
        match self.payload {
            GoldPayload::Absc { .. } => Task::Absc,
            GoldPayload::Aoste { .. } => Task::Aoste,
        }
    }
}

/// Wire shape of a gold record before payload validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGold {
    id: String,
    #[serde(default)]
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aspect: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<SentimentLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    triplets: Option<Vec<Triplet>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reasoning: Option<String>,
}

impl TryFrom<RawGold> for GoldRecord {
    type Error = String;

    fn try_from(raw: RawGold) -> Result<Self, Self::Error> {
        if raw.id.is_empty() {
            return Err("empty id".into());
        }
        let payload = match (raw.aspect, raw.label, raw.triplets) {
            (Some(aspect), Some(label), None) => GoldPayload::Absc { aspect, label },
            (None, None, Some(triplets)) => GoldPayload::Aoste { triplets: TripletSet::new(triplets) },
            (None, None, None) => return Err("record has neither aspect/label nor triplets".into()),
            (Some(_), None, None) => return Err("missing field `label`".into()),
            (None, Some(_), None) => return Err("missing field `aspect`".into()),
            _ => return Err("record mixes ABSC (aspect/label) and AOSTE (triplets) fields".into()),
        };
        Ok(Self { id: raw.id, text: raw.text, payload, reasoning: raw.reasoning })
    }
}

impl From<GoldRecord> for RawGold {
    fn from(g: GoldRecord) -> Self {
        let (aspect, label, triplets) = match g.payload {
            GoldPayload::Absc { aspect, label } => (Some(aspect), Some(label), None),
            GoldPayload::Aoste { triplets } => (None, None, Some(triplets.0)),
        };
        Self { id: g.id, text: g.text, aspect, label, triplets, reasoning: g.reasoning }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationFileRecord {
    pub id: String,
    pub samples: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {reason}", path.display())]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("{}:{line}: duplicate id {id:?}", path.display())]
    DuplicateId { path: PathBuf, line: usize, id: String },
}

impl DataError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }

    fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Self {
        DataError::Malformed { path: path.to_path_buf(), line, reason: reason.into() }
    }

    /// 1-based line number, when the error is tied to one.
    pub fn line(&self) -> Option<usize> {
        match self {
            DataError::Io { .. } => None,
            DataError::Malformed { line, .. } | DataError::DuplicateId { line, .. } => Some(*line),
        }
    }
}

/// Parsed lines of a JSONL file with an optional leading header.
struct JsonLines {
    header: Option<(usize, serde_json::Map<String, Value>)>,
    body: Vec<(usize, String)>,
}

fn read_json_lines(path: &Path) -> Result<JsonLines, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut header = None;
    let mut body = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() && body.is_empty() {
            if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&line) {
                if map.contains_key("format_version") && !map.contains_key("id") {
                    header = Some((line_no, map));
                    continue;
                }
            }
        }
        body.push((line_no, line));
    }
    Ok(JsonLines { header, body })
}

fn check_header(
    path: &Path,
    header: &Option<(usize, serde_json::Map<String, Value>)>,
    kind: &str,
    task: Option<Task>,
) -> Result<(), DataError> {
    let Some((line, map)) = header else {
        return Ok(());
    };
    match map.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        other => return Err(DataError::malformed(path, *line, format!("unsupported format_version {other:?}"))),
    }
    if let Some(found) = map.get("kind").and_then(Value::as_str) {
        if found != kind {
            return Err(DataError::malformed(path, *line, format!("expected a {kind} file, header says {found:?}")));
        }
    }
    if let (Some(task), Some(found)) = (task, map.get("task").and_then(Value::as_str)) {
        if found != task.as_str() {
            return Err(DataError::malformed(path, *line, format!("file is for task {found:?}, expected {task}")));
        }
    }
    Ok(())
}

fn parse_line<T: DeserializeOwned>(path: &Path, line_no: usize, line: &str) -> Result<T, DataError> {
    serde_json::from_str(line).map_err(|e| DataError::malformed(path, line_no, e.to_string()))
}

/// Loads gold records for `task`, preserving file order.
pub fn load_gold(path: impl AsRef<Path>, task: Task) -> Result<Vec<GoldRecord>, DataError> {
    let path = path.as_ref();
    let lines = read_json_lines(path)?;
    check_header(path, &lines.header, "gold", Some(task))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(lines.body.len());
    for (line_no, line) in lines.body {
        let record: GoldRecord = parse_line(path, line_no, &line)?;
        if record.task() != task {
            return Err(DataError::malformed(path, line_no, format!("record is {}, expected {task}", record.task())));
        }
        if !seen.insert(record.id.clone()) {
            return Err(DataError::DuplicateId { path: path.to_path_buf(), line: line_no, id: record.id });
        }
        out.push(record);
    }
    Ok(out)
}

/// Loads sampled generations, preserving record and sample order.
pub fn load_generations(path: impl AsRef<Path>) -> Result<Vec<GenerationFileRecord>, DataError> {
    let path = path.as_ref();
    let lines = read_json_lines(path)?;
    check_header(path, &lines.header, "generations", None)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(lines.body.len());
    for (line_no, line) in lines.body {
        let record: GenerationFileRecord = parse_line(path, line_no, &line)?;
        if record.id.is_empty() {
            return Err(DataError::malformed(path, line_no, "empty id"));
        }
        if record.samples.is_empty() {
            return Err(DataError::malformed(path, line_no, format!("record {:?} has no samples", record.id)));
        }
        if !seen.insert(record.id.clone()) {
            return Err(DataError::DuplicateId { path: path.to_path_buf(), line: line_no, id: record.id });
        }
        out.push(record);
    }
    Ok(out)
}

/// Header object written as the first line of every file.
pub fn header(kind: &str, task: Option<Task>) -> Value {
    let mut map = serde_json::Map::new();
    map.insert("format_version".into(), FORMAT_VERSION.into());
    map.insert("kind".into(), kind.into());
    if let Some(task) = task {
        map.insert("task".into(), task.as_str().into());
    }
    Value::Object(map)
}

/// Writes `header` followed by one line per record.
pub fn write_json_lines<W: Write, T: Serialize>(out: &mut W, header: &Value, records: &[T]) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, header)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn write_file<T: Serialize>(path: &Path, header: &Value, records: &[T]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_json_lines(&mut w, header, records).map_err(|e| DataError::io(path, e))?;
    w.flush().map_err(|e| DataError::io(path, e))
}

pub fn write_gold(path: impl AsRef<Path>, task: Task, records: &[GoldRecord]) -> Result<(), DataError> {
    write_file(path.as_ref(), &header("gold", Some(task)), records)
}

pub fn write_generations(path: impl AsRef<Path>, records: &[GenerationFileRecord]) -> Result<(), DataError> {
    write_file(path.as_ref(), &header("generations", None), records)
}

/// Writes a training report: header line (config, final policy fingerprint)
/// followed by one line per iteration.
pub fn write_report(report: &TrainingReport, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let header = serde_json::to_value(&report.header).map_err(|e| DataError::malformed(path, 1, e.to_string()))?;
    write_file(path, &header, &report.iterations)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<TrainingReport, DataError> {
    let path = path.as_ref();
    let lines = read_json_lines(path)?;
    check_header(path, &lines.header, "training_report", None)?;
    let Some((line_no, map)) = lines.header else {
        return Err(DataError::malformed(path, 1, "missing training_report header"));
    };
    let header: ReportHeader =
        serde_json::from_value(Value::Object(map)).map_err(|e| DataError::malformed(path, line_no, e.to_string()))?;
    let iterations = lines
        .body
        .iter()
        .map(|(n, l)| parse_line::<IterationRecord>(path, *n, l))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrainingReport { header, iterations })
}
