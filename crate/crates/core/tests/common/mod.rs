#![allow(dead_code)]

use std::path::PathBuf;

use faithcheck::datasets::{Label, Observation, TaskKind};
use faithcheck::prompts::{ExplanationKind, MaskToken, Persona, PromptConfig, TargetMode};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
pub struct Turn {
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FixtureObservation {
    pub task: String,
    pub id: String,
    pub paragraph: String,
    pub gold: String,
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub options: Option<Vec<String>>,
    #[serde(default)]
    pub statement: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Expected {
    pub initial_label: String,
    pub recheck_label: String,
    #[serde(default)]
    pub paragraph: Option<String>,
    #[serde(default)]
    pub words: Option<Vec<String>>,
    #[serde(default)]
    pub redacted_paragraph: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Transcript {
    pub name: String,
    pub dataset: String,
    pub observation: FixtureObservation,
    pub explanation: String,
    pub persona: Persona,
    pub mask_token: MaskToken,
    pub cf_target: Option<TargetMode>,
    pub initial_correct: bool,
    pub verdict: String,
    pub classify: Turn,
    pub explain: Turn,
    pub recheck: Turn,
    pub expected: Expected,
}

impl Transcript {
    pub fn kind(&self) -> ExplanationKind {
        self.explanation.parse().expect("known explanation kind")
    }

    pub fn config(&self) -> PromptConfig {
        PromptConfig::new(self.persona, self.mask_token, self.cf_target.unwrap_or(TargetMode::Explicit))
    }

    pub fn observation(&self) -> Observation {
        let o = &self.observation;
        let task: TaskKind = o.task.parse().expect("known task");
        let gold = Label::parse(task, &o.gold).expect("valid gold");
        match task {
            TaskKind::Sentiment => Observation::sentiment(&o.id, &o.paragraph, gold),
            TaskKind::QaMultichoice => Observation::multichoice(
                &o.id,
                &o.paragraph,
                o.question.clone().expect("question"),
                o.options.clone(),
                o.gold.clone(),
            ),
            TaskKind::Nli => Observation::nli(&o.id, &o.paragraph, o.statement.clone().expect("statement"), gold),
        }
    }

    /// The paragraph embedded in the re-classification prompt.
    pub fn recheck_paragraph(&self) -> &str {
        let marker = "\n\nParagraph: ";
        let at = self.recheck.prompt.find(marker).expect("recheck prompt has a paragraph");
        &self.recheck.prompt[at + marker.len()..]
    }

    pub fn is_faithful(&self) -> bool {
        self.verdict == "faithful"
    }
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn transcripts() -> Vec<Transcript> {
    let text = std::fs::read_to_string(fixture_path("transcripts.json")).expect("fixture readable");
    serde_json::from_str(&text).expect("fixture parses")
}

/// Script that answers the three sessions of one transcript. The recheck
/// entry is keyed on the prompt the harness will actually send, which embeds
/// the extracted (commentary-free) paragraph.
pub fn replay_script(t: &Transcript) -> faithcheck::mockmodel::ScriptSpec {
    use faithcheck::mockmodel::{ScriptEntry, ScriptSpec};
    use faithcheck::prompts::render_classification;
    let obs = t.observation();
    let paragraph = t
        .expected
        .paragraph
        .clone()
        .or_else(|| t.expected.redacted_paragraph.clone())
        .expect("transformed paragraph annotated");
    let recheck_prompt = render_classification(&obs, &t.config(), Some(&paragraph)).unwrap();
    ScriptSpec {
        default: None,
        entries: vec![
            ScriptEntry::exact(t.classify.prompt.clone(), t.classify.response.clone()),
            ScriptEntry::exact(t.explain.prompt.clone(), t.explain.response.clone()),
            ScriptEntry::exact(recheck_prompt, t.recheck.response.clone()),
        ],
    }
}

/// Sentiment observations carrying exactly one keyword of the synthetic bots.
pub fn synthetic_sentiment(n: usize) -> Vec<Observation> {
    let subjects = ["plot", "cast", "score", "pacing", "script", "ending", "camera work"];
    let fillers = ["overall", "honestly", "for me", "in the end", "frankly"];
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let keyword = if positive { "good" } else { "bad" };
            let text = format!(
                "Review number {i} says the {} was {keyword}, {} the film held together.",
                subjects[i % subjects.len()],
                fillers[i % fillers.len()]
            );
            let gold = if positive { Label::Positive } else { Label::Negative };
            Observation::sentiment(format!("syn-{i:03}"), text, gold)
        })
        .collect()
}

/// Brute-force reference for redaction: list every legal match of every
/// item, then repeatedly accept the longest remaining one (leftmost on
/// ties) that overlaps neither an accepted match nor an existing mask token.
pub fn oracle_redact(paragraph: &str, words: &[String], surface: &str) -> (String, Vec<(usize, usize)>) {
    let text: Vec<char> = paragraph.chars().collect();
    let lower = |c: char| c.to_lowercase().collect::<String>();
    let mut blocked = vec![false; text.len()];
    for token in ["[REDACTED]", "[REMOVED]"] {
        let t: Vec<char> = token.chars().collect();
        let mut i = 0;
        while i + t.len() <= text.len() {
            if text[i..i + t.len()] == t[..] {
                for b in &mut blocked[i..i + t.len()] {
                    *b = true;
                }
                i += t.len();
            } else {
                i += 1;
            }
        }
    }
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for w in words {
        let item: Vec<char> = w.trim().chars().collect();
        if item.is_empty() || item.len() > text.len() {
            continue;
        }
        for start in 0..=text.len() - item.len() {
            let end = start + item.len();
            let same = (0..item.len()).all(|k| lower(text[start + k]) == lower(item[k]));
            if !same {
                continue;
            }
            let left = !item[0].is_alphanumeric() || start == 0 || !text[start - 1].is_alphanumeric();
            let right = !item[item.len() - 1].is_alphanumeric() || end == text.len() || !text[end].is_alphanumeric();
            if left && right {
                candidates.push((start, end));
            }
        }
    }
    candidates.sort();
    candidates.dedup();
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    loop {
        let free = |&(s, e): &(usize, usize)| {
            !blocked[s..e].iter().any(|&b| b) && !chosen.iter().any(|&(cs, ce)| s < ce && cs < e)
        };
        let best = candidates.iter().copied().filter(free).max_by(|a, b| (a.1 - a.0, std::cmp::Reverse(a.0)).cmp(&(b.1 - b.0, std::cmp::Reverse(b.0))));
        match best {
            Some(m) => chosen.push(m),
            None => break,
        }
    }
    chosen.sort();
    let mut out = String::new();
    let mut cursor = 0;
    for &(s, e) in &chosen {
        out.extend(&text[cursor..s]);
        out.push_str(surface);
        cursor = e;
    }
    out.extend(&text[cursor..]);
    (out, chosen)
}

/// Random redaction instance drawn from a small vocabulary so that items
/// collide, overlap and differ in case often.
pub fn random_redaction_case(rng: &mut impl rand::Rng) -> (String, Vec<String>) {
    const VOCAB: [&str; 16] = [
        "good", "Good", "GOOD", "goodness", "bad", "not bad", "storage capacity", "storage", "250MB", "rival(s)",
        "rivals", "[REDACTED]", "[REMOVED]", "Ça", "e-mail", "mail",
    ];
    const SEPS: [&str; 7] = [" ", " ", ", ", ". ", "-", "", "\n"];
    let n = rng.gen_range(0..14);
    let mut paragraph = String::new();
    for _ in 0..n {
        paragraph.push_str(VOCAB[rng.gen_range(0..VOCAB.len())]);
        paragraph.push_str(SEPS[rng.gen_range(0..SEPS.len())]);
    }
    let k = rng.gen_range(1..5);
    let words = (0..k)
        .map(|_| {
            let w = VOCAB[rng.gen_range(0..VOCAB.len())];
            if rng.gen_bool(0.3) {
                w.to_uppercase()
            } else {
                w.to_string()
            }
        })
        .collect();
    (paragraph, words)
}
