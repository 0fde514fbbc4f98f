//! Dataset ingestion.
//!
//! Every task is read from a JSON-lines file with one observation per line.
//! The field names are fixed per task:
//!
//! | task             | fields                                               |
//! |------------------|------------------------------------------------------|
//! | `sentiment`      | `id`, `text`, `label`                                |
//! | `qa-multichoice` | `id`, `paragraph`, `question`, `answer`, `options`?  |
//! | `nli`            | `id`, `sentence1`, `sentence2`, `label`              |
//!
//! `options` is only given for datasets that ship their own answer choices
//! (MCTest style). Bare-answer datasets (bAbI style) get a two-way option set
//! from [`build_option_set`].

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: expected a JSON object")]
    NotAnObject { line: usize },
    #[error("line {line}: missing field \"{field}\"")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field \"{field}\" has the wrong type")]
    WrongType { line: usize, field: String },
    #[error("line {line}: unexpected field \"{field}\" for task {task}")]
    UnexpectedField { line: usize, field: String, task: TaskKind },
    #[error("line {line}: label \"{value}\" is not a valid {task} label")]
    InvalidLabel { line: usize, value: String, task: TaskKind },
    #[error("line {line}: duplicate observation id \"{id}\"")]
    DuplicateId { line: usize, id: String },
    #[error("observation \"{id}\": no distractor available besides the gold answer")]
    NoDistractor { id: String },
    #[error("observation \"{id}\" is not a multi-choice observation")]
    NotMultiChoice { id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Sentiment,
    QaMultichoice,
    Nli,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Sentiment, TaskKind::QaMultichoice, TaskKind::Nli];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Sentiment => "sentiment",
            TaskKind::QaMultichoice => "qa-multichoice",
            TaskKind::Nli => "nli",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sentiment" | "imdb" => Ok(TaskKind::Sentiment),
            "qa-multichoice" | "qa" | "multichoice" | "babi" | "mctest" => Ok(TaskKind::QaMultichoice),
            "nli" | "rte" => Ok(TaskKind::Nli),
            other => Err(format!("unknown task \"{other}\" (expected sentiment, qa-multichoice or nli)")),
        }
    }
}

/// A class label, either a gold label or a model prediction.
///
/// Multi-choice answers carry the option text. `Unknown` is a legal
/// prediction for every task but never a gold label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Positive,
    Negative,
    Neutral,
    Yes,
    No,
    Choice(String),
    Unknown,
}

impl Label {
    pub fn is_unknown(&self) -> bool {
        matches!(self, Label::Unknown)
    }

    /// Parses a label as written in an ingestion file or a record.
    pub fn parse(task: TaskKind, value: &str) -> Option<Label> {
        let lower = value.trim().to_ascii_lowercase();
        match task {
            TaskKind::Sentiment => match lower.as_str() {
                "positive" => Some(Label::Positive),
                "negative" => Some(Label::Negative),
                "neutral" => Some(Label::Neutral),
                "unknown" => Some(Label::Unknown),
                _ => None,
            },
            TaskKind::Nli => match lower.as_str() {
                "yes" => Some(Label::Yes),
                "no" => Some(Label::No),
                "unknown" => Some(Label::Unknown),
                _ => None,
            },
            TaskKind::QaMultichoice => match lower.as_str() {
                "" => None,
                "unknown" => Some(Label::Unknown),
                _ => Some(Label::Choice(value.trim().to_string())),
            },
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
            Label::Neutral => "neutral",
            Label::Yes => "yes",
            Label::No => "no",
            Label::Choice(text) => text,
            Label::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// Labels serialize as their bare text; the task is always known from context.
impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Ok(match text.as_str() {
            "positive" => Label::Positive,
            "negative" => Label::Negative,
            "neutral" => Label::Neutral,
            "yes" => Label::Yes,
            "no" => Label::No,
            "unknown" => Label::Unknown,
            _ => Label::Choice(text),
        })
    }
}

/// One dataset instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub id: String,
    pub task: TaskKind,
    /// The content that explanations edit.
    pub paragraph: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    /// NLI hypothesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statement: Option<String>,
    pub gold_label: Label,
}

impl Observation {
    pub fn sentiment(id: impl Into<String>, text: impl Into<String>, gold: Label) -> Self {
        Observation {
            id: id.into(),
            task: TaskKind::Sentiment,
            paragraph: text.into(),
            question: None,
            options: None,
            statement: None,
            gold_label: gold,
        }
    }

    pub fn multichoice(
        id: impl Into<String>,
        paragraph: impl Into<String>,
        question: impl Into<String>,
        options: Option<Vec<String>>,
        answer: impl Into<String>,
    ) -> Self {
        Observation {
            id: id.into(),
            task: TaskKind::QaMultichoice,
            paragraph: paragraph.into(),
            question: Some(question.into()),
            options,
            statement: None,
            gold_label: Label::Choice(answer.into()),
        }
    }

    pub fn nli(id: impl Into<String>, paragraph: impl Into<String>, statement: impl Into<String>, gold: Label) -> Self {
        Observation {
            id: id.into(),
            task: TaskKind::Nli,
            paragraph: paragraph.into(),
            question: None,
            options: None,
            statement: Some(statement.into()),
            gold_label: gold,
        }
    }

    /// Serializes back to the ingestion line format.
    pub fn to_ingestion_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("id".into(), Value::String(self.id.clone()));
        match self.task {
            TaskKind::Sentiment => {
                map.insert("text".into(), self.paragraph.clone().into());
                map.insert("label".into(), self.gold_label.as_str().into());
            }
            TaskKind::QaMultichoice => {
                map.insert("paragraph".into(), self.paragraph.clone().into());
                map.insert("question".into(), self.question.clone().unwrap_or_default().into());
                map.insert("answer".into(), self.gold_label.as_str().into());
                if let Some(options) = &self.options {
                    map.insert("options".into(), options.clone().into());
                }
            }
            TaskKind::Nli => {
                map.insert("sentence1".into(), self.paragraph.clone().into());
                map.insert("sentence2".into(), self.statement.clone().unwrap_or_default().into());
                map.insert("label".into(), self.gold_label.as_str().into());
            }
        }
        Value::Object(map)
    }

    /// Checks that the auxiliary fields match the task and the gold label is legal.
    pub fn validate(&self) -> Result<(), String> {
        let aux_ok = match self.task {
            TaskKind::Sentiment => self.question.is_none() && self.options.is_none() && self.statement.is_none(),
            TaskKind::QaMultichoice => self.question.is_some() && self.statement.is_none(),
            TaskKind::Nli => self.statement.is_some() && self.question.is_none() && self.options.is_none(),
        };
        if !aux_ok {
            return Err(format!("observation \"{}\" has auxiliary fields that do not match {}", self.id, self.task));
        }
        let label_ok = match (&self.task, &self.gold_label) {
            (_, Label::Unknown) => false,
            (TaskKind::Sentiment, Label::Positive | Label::Negative | Label::Neutral) => true,
            (TaskKind::Nli, Label::Yes | Label::No) => true,
            (TaskKind::QaMultichoice, Label::Choice(answer)) => match &self.options {
                Some(options) => options.iter().any(|o| o == answer),
                None => true,
            },
            _ => false,
        };
        if !label_ok {
            return Err(format!("observation \"{}\" has gold label \"{}\" outside the {} label set", self.id, self.gold_label, self.task));
        }
        Ok(())
    }
}

const SENTIMENT_FIELDS: &[&str] = &["id", "text", "label"];
const QA_FIELDS: &[&str] = &["id", "paragraph", "question", "answer", "options"];
const NLI_FIELDS: &[&str] = &["id", "sentence1", "sentence2", "label"];

fn allowed_fields(kind: TaskKind) -> &'static [&'static str] {
    match kind {
        TaskKind::Sentiment => SENTIMENT_FIELDS,
        TaskKind::QaMultichoice => QA_FIELDS,
        TaskKind::Nli => NLI_FIELDS,
    }
}

fn string_field(obj: &Map<String, Value>, line: usize, field: &'static str) -> Result<String, DatasetError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(DatasetError::MissingField { line, field }),
        Some(Value::String(s)) => Ok(s.clone()),
        // Numeric ids are common in exported datasets.
        Some(Value::Number(n)) if field == "id" => Ok(n.to_string()),
        Some(_) => Err(DatasetError::WrongType { line, field: field.to_string() }),
    }
}

/// Parses one ingestion line. `line` is 1-based and only used for errors.
pub fn parse_line(text: &str, kind: TaskKind, line: usize) -> Result<Observation, DatasetError> {
    let value: Value = serde_json::from_str(text).map_err(|source| DatasetError::Json { line, source })?;
    let Value::Object(obj) = value else {
        return Err(DatasetError::NotAnObject { line });
    };
    let allowed = allowed_fields(kind);
    if let Some(field) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(DatasetError::UnexpectedField { line, field: field.clone(), task: kind });
    }

    let id = string_field(&obj, line, "id")?;
    let invalid = |value: String| DatasetError::InvalidLabel { line, value, task: kind };

    let obs = match kind {
        TaskKind::Sentiment => {
            let text = string_field(&obj, line, "text")?;
            let raw = string_field(&obj, line, "label")?;
            let label = match Label::parse(kind, &raw) {
                Some(l) if !l.is_unknown() => l,
                _ => return Err(invalid(raw)),
            };
            Observation::sentiment(id, text, label)
        }
        TaskKind::QaMultichoice => {
            let paragraph = string_field(&obj, line, "paragraph")?;
            let question = string_field(&obj, line, "question")?;
            let answer = string_field(&obj, line, "answer")?;
            let options = match obj.get("options") {
                None | Some(Value::Null) => None,
                Some(Value::Array(items)) => Some(
                    items
                        .iter()
                        .map(|v| v.as_str().map(str::to_string))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| DatasetError::WrongType { line, field: "options".into() })?,
                ),
                Some(_) => return Err(DatasetError::WrongType { line, field: "options".into() }),
            };
            if answer.trim().is_empty() || answer.trim().eq_ignore_ascii_case("unknown") {
                return Err(invalid(answer));
            }
            if let Some(options) = &options {
                if !options.contains(&answer) {
                    return Err(invalid(answer));
                }
            }
            Observation::multichoice(id, paragraph, question, options, answer)
        }
        TaskKind::Nli => {
            let paragraph = string_field(&obj, line, "sentence1")?;
            let statement = string_field(&obj, line, "sentence2")?;
            let raw = string_field(&obj, line, "label")?;
            let label = match Label::parse(kind, &raw) {
                Some(l) if !l.is_unknown() => l,
                _ => return Err(invalid(raw)),
            };
            Observation::nli(id, paragraph, statement, label)
        }
    };
    Ok(obs)
}

/// Streaming reader over an ingestion file.
pub struct DatasetReader<R> {
    lines: std::io::Lines<R>,
    kind: TaskKind,
    line: usize,
    seen: HashSet<String>,
}

impl<R: BufRead> DatasetReader<R> {
    pub fn new(reader: R, kind: TaskKind) -> Self {
        DatasetReader { lines: reader.lines(), kind, line: 0, seen: HashSet::new() }
    }
}

impl<R: BufRead> Iterator for DatasetReader<R> {
    type Item = Result<Observation, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(text) => text,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            // A trailing blank line is not an observation.
            if text.trim().is_empty() {
                continue;
            }
            let obs = match parse_line(&text, self.kind, self.line) {
                Ok(obs) => obs,
                Err(e) => return Some(Err(e)),
            };
            if !self.seen.insert(obs.id.clone()) {
                return Some(Err(DatasetError::DuplicateId { line: self.line, id: obs.id }));
            }
            return Some(Ok(obs));
        }
    }
}

pub fn open_dataset(path: &Path, kind: TaskKind) -> Result<DatasetReader<BufReader<File>>, DatasetError> {
    Ok(DatasetReader::new(BufReader::new(File::open(path)?), kind))
}

/// Loads a whole ingestion file, optionally keeping only the first `subset` observations.
pub fn load_dataset(path: &Path, kind: TaskKind, subset: Option<usize>) -> Result<Vec<Observation>, DatasetError> {
    open_dataset(path, kind)?.take(subset.unwrap_or(usize::MAX)).collect()
}

fn observation_seed(id: &str, seed: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

/// Builds the two-way option set (gold answer plus one distractor) for a
/// bare-answer multi-choice observation.
///
/// The distractor is drawn from `pool` minus the gold answer, and the pair is
/// shuffled, both with an RNG seeded from `(seed, obs.id)`. The pool is
/// treated as a set, so its order and duplicates do not matter.
pub fn build_option_set(obs: &Observation, pool: &[String], seed: u64) -> Result<Vec<String>, DatasetError> {
    let Label::Choice(gold) = &obs.gold_label else {
        return Err(DatasetError::NotMultiChoice { id: obs.id.clone() });
    };
    let distractors: Vec<&String> = pool
        .iter()
        .filter(|candidate| !candidate.trim().eq_ignore_ascii_case(gold.trim()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if distractors.is_empty() {
        return Err(DatasetError::NoDistractor { id: obs.id.clone() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(observation_seed(&obs.id, seed));
    let distractor = distractors[rng.gen_range(0..distractors.len())].clone();
    let mut options = vec![gold.clone(), distractor];
    options.shuffle(&mut rng);
    Ok(options)
}

/// Fills in option sets for every bare-answer multi-choice observation, using
/// the answers occurring in the split as the distractor pool. Observations
/// that already carry options are left unchanged.
pub fn attach_option_sets(observations: &mut [Observation], seed: u64) -> Result<(), DatasetError> {
    let pool: Vec<String> = observations
        .iter()
        .filter(|o| o.task == TaskKind::QaMultichoice)
        .map(|o| o.gold_label.as_str().to_string())
        .collect();
    for obs in observations.iter_mut() {
        if obs.task == TaskKind::QaMultichoice && obs.options.is_none() {
            obs.options = Some(build_option_set(obs, &pool, seed)?);
        }
    }
    Ok(())
}
