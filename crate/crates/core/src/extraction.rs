//! Turning free-text model responses into labels, paragraphs and word lists.
//!
//! None of these functions fail. A response that cannot be interpreted comes
//! back as [`Extraction::Unparseable`] or [`Extraction::Refused`].

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::datasets::{Label, Observation, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "value")]
pub enum Extraction<T> {
    Parsed(T),
    Unparseable,
    Refused,
}

impl<T> Extraction<T> {
    pub fn parsed(self) -> Option<T> {
        match self {
            Extraction::Parsed(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_parsed(&self) -> Option<&T> {
        match self {
            Extraction::Parsed(v) => Some(v),
            _ => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Extraction::Parsed(_) => "parsed",
            Extraction::Unparseable => "unparseable",
            Extraction::Refused => "refused",
        }
    }
}

const REFUSALS: [&str; 6] = ["as an ai", "i cannot", "i can't", "i can not", "i'm sorry, but", "i am sorry, but"];

fn looks_refused(text: &str) -> bool {
    let lower = text.trim_start().to_lowercase();
    REFUSALS.iter().any(|r| lower.starts_with(r))
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn chars_eq(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

/// Finds `needle` in `haystack` case-insensitively with word boundaries at
/// both ends. Returns byte offsets into `haystack` of every match.
fn word_matches(haystack: &str, needle: &str) -> Vec<usize> {
    let needle: Vec<char> = needle.trim().chars().collect();
    let (Some(&first), Some(&last)) = (needle.first(), needle.last()) else {
        return Vec::new();
    };
    let hay: Vec<(usize, char)> = haystack.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i + needle.len() <= hay.len() {
        let hit = hay[i..i + needle.len()].iter().zip(&needle).all(|(&(_, a), &b)| chars_eq(a, b));
        if hit {
            let before = i.checked_sub(1).map(|j| hay[j].1);
            let after = hay.get(i + needle.len()).map(|&(_, c)| c);
            let left_ok = !is_word_char(first) || !before.is_some_and(is_word_char);
            let right_ok = !is_word_char(last) || !after.is_some_and(is_word_char);
            if left_ok && right_ok {
                out.push(hay[i].0);
                i += needle.len();
                continue;
            }
        }
        i += 1;
    }
    out
}

/// Label forms a task accepts: explicit markers and bare words.
struct LabelSpace {
    /// (marker character, label); `a`..`e` for multi-choice, `1`..`3` for NLI.
    markers: Vec<(char, Label)>,
    /// (surface word, label)
    words: Vec<(String, Label)>,
}

fn label_space(obs: &Observation) -> LabelSpace {
    match obs.task {
        TaskKind::Sentiment => LabelSpace {
            markers: Vec::new(),
            words: [Label::Positive, Label::Negative, Label::Neutral, Label::Unknown]
                .into_iter()
                .map(|l| (l.as_str().to_string(), l))
                .collect(),
        },
        TaskKind::QaMultichoice => {
            let options = obs.options.clone().unwrap_or_default();
            let mut markers: Vec<(char, Label)> = options
                .iter()
                .enumerate()
                .map(|(i, o)| (crate::prompts::option_letter(i), Label::Choice(o.clone())))
                .collect();
            markers.push((crate::prompts::option_letter(options.len()), Label::Unknown));
            let mut words: Vec<(String, Label)> = options.iter().map(|o| (o.clone(), Label::Choice(o.clone()))).collect();
            words.push(("unknown".into(), Label::Unknown));
            LabelSpace { markers, words }
        }
        TaskKind::Nli => LabelSpace {
            markers: vec![('1', Label::Yes), ('2', Label::No), ('3', Label::Unknown)],
            words: vec![
                ("no entailment".into(), Label::No),
                ("not entailment".into(), Label::No),
                ("yes".into(), Label::Yes),
                ("no".into(), Label::No),
                ("unknown".into(), Label::Unknown),
                ("entailment".into(), Label::Yes),
            ],
        },
    }
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // `b)` or `(b)` not glued to a preceding word character.
    RE.get_or_init(|| Regex::new(r"(?i)(?:^|[^\w(])\(?([a-z0-9])\)").unwrap())
}

fn strip_leading_noise(text: &str) -> &str {
    text.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '*' | '`' | '[' | '“'))
}

fn label_at_start(text: &str, space: &LabelSpace) -> Option<Label> {
    let text = strip_leading_noise(text);
    if let Some(caps) = marker_regex().captures(text) {
        let whole = caps.get(0).unwrap();
        if whole.start() == 0 {
            let c = caps[1].chars().next().unwrap().to_ascii_lowercase();
            if let Some((_, l)) = space.markers.iter().find(|(m, _)| *m == c) {
                return Some(l.clone());
            }
        }
    }
    // Longest surface first so "no entailment" beats "no".
    let mut words: Vec<&(String, Label)> = space.words.iter().collect();
    words.sort_by_key(|(w, _)| std::cmp::Reverse(w.chars().count()));
    words.into_iter().find(|(w, _)| word_matches(text, w).first() == Some(&0)).map(|(_, l)| l.clone())
}

fn last_marker(text: &str, space: &LabelSpace) -> Option<Label> {
    marker_regex()
        .captures_iter(text)
        .filter_map(|caps| {
            let c = caps[1].chars().next().unwrap().to_ascii_lowercase();
            space.markers.iter().find(|(m, _)| *m == c).map(|(_, l)| l.clone())
        })
        .last()
}

/// Extracts the predicted label from a classification response.
///
/// Sentiment takes the first standalone label word. Multi-choice and NLI
/// prefer a label form at the very start of the response, then the last
/// explicit marker such as `(c)` or `3)`, then a single unambiguous label
/// word.
pub fn extract_label(response: &str, obs: &Observation) -> Extraction<Label> {
    let text = response.trim();
    if text.is_empty() {
        return Extraction::Unparseable;
    }
    let space = label_space(obs);
    let found = match obs.task {
        TaskKind::Sentiment => space
            .words
            .iter()
            .filter_map(|(w, l)| word_matches(text, w).first().map(|&at| (at, l.clone())))
            .min_by_key(|(at, _)| *at)
            .map(|(_, l)| l),
        TaskKind::QaMultichoice | TaskKind::Nli => label_at_start(text, &space)
            .or_else(|| last_marker(text, &space))
            .or_else(|| {
                // Overlapping surfaces ("no" inside "no entailment") count once.
                let mut claimed: Vec<(usize, usize)> = Vec::new();
                let mut labels: Vec<Label> = Vec::new();
                let mut words: Vec<&(String, Label)> = space.words.iter().collect();
                words.sort_by_key(|(w, _)| std::cmp::Reverse(w.len()));
                for (w, l) in words {
                    for at in word_matches(text, w) {
                        let span = (at, at + w.len());
                        if claimed.iter().any(|&(s, e)| span.0 < e && s < span.1) {
                            continue;
                        }
                        claimed.push(span);
                        if !labels.contains(l) {
                            labels.push(l.clone());
                        }
                    }
                }
                if labels.len() == 1 {
                    labels.pop()
                } else {
                    None
                }
            }),
    };
    match found {
        Some(label) => Extraction::Parsed(label),
        None if looks_refused(text) => Extraction::Refused,
        None => Extraction::Unparseable,
    }
}

fn blocks(text: &str) -> Vec<String> {
    let normalized = text.replace("\r\n", "\n");
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in normalized.split('\n') {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out
}

fn strip_paragraph_marker(block: &str) -> &str {
    let mut s = block.trim();
    loop {
        let lower = s.to_ascii_lowercase();
        if lower.starts_with("paragraph:") {
            s = s["paragraph:".len()..].trim_start();
        } else {
            return s;
        }
    }
}

/// Extracts the edited or redacted paragraph from an explanation response.
///
/// A leading line or block ending in `:` is treated as preamble, a leading
/// `Paragraph:` marker is removed, and any blocks after the first are taken
/// as commentary and dropped.
pub fn extract_paragraph(response: &str) -> Extraction<String> {
    let mut parts = blocks(response);
    if parts.is_empty() {
        return Extraction::Unparseable;
    }
    if looks_refused(&parts[0]) {
        return Extraction::Refused;
    }
    loop {
        let before = parts.clone();
        if parts.len() > 1 && parts[0].trim_end().ends_with(':') && !strip_paragraph_marker(&parts[0]).is_empty() {
            parts.remove(0);
        }
        let first = &mut parts[0];
        let mut lines: Vec<&str> = first.split('\n').collect();
        while lines.len() > 1 && lines[0].trim_end().ends_with(':') {
            lines.remove(0);
        }
        let joined = strip_paragraph_marker(&lines.join("\n")).to_string();
        if joined.is_empty() {
            parts.remove(0);
            if parts.is_empty() {
                return Extraction::Unparseable;
            }
        } else {
            parts[0] = joined;
        }
        if parts == before {
            break;
        }
    }
    let paragraph = parts[0].trim().to_string();
    if paragraph.is_empty() {
        Extraction::Unparseable
    } else {
        Extraction::Parsed(paragraph)
    }
}

fn list_item_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+[.)]|[*\-•])\s+(.*)$").unwrap())
}

fn quoted_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#""([^"\n]+)"|“([^”\n]+)”"#).unwrap())
}

fn clean_item(raw: &str) -> String {
    let mut s = raw.trim();
    loop {
        let before = s;
        s = s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '“' | '”'));
        s = s.trim_start_matches(['*', '-', '•']).trim();
        s = s.trim_matches('*').trim();
        s = s.trim_end_matches(['.', ',', ';', ':', '!', '?']).trim();
        if s == before {
            return s.to_string();
        }
    }
}

fn dedup(items: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in items {
        if item.is_empty() || item.chars().all(|c| c == '.' || c == '…') {
            continue;
        }
        if seen.insert(item.to_lowercase()) {
            out.push(item);
        }
    }
    out
}

/// Extracts the word list from a feature-attribution response.
///
/// Numbered or bulleted lines are preferred, then quoted items, then a
/// comma-separated list after a colon. Items are deduplicated
/// case-insensitively, keeping the first spelling.
pub fn extract_word_list(response: &str) -> Extraction<Vec<String>> {
    let text = response.trim();
    if text.is_empty() {
        return Extraction::Unparseable;
    }
    if looks_refused(text) {
        return Extraction::Refused;
    }
    let listed: Vec<String> =
        text.lines().filter_map(|l| list_item_regex().captures(l)).map(|c| clean_item(&c[1])).collect();
    let listed = dedup(listed);
    if !listed.is_empty() {
        return Extraction::Parsed(listed);
    }
    let quoted: Vec<String> = quoted_regex()
        .captures_iter(text)
        .map(|c| clean_item(c.get(1).or_else(|| c.get(2)).unwrap().as_str()))
        .collect();
    let quoted = dedup(quoted);
    if !quoted.is_empty() {
        return Extraction::Parsed(quoted);
    }
    let tail = match text.rfind(':') {
        Some(at) => &text[at + 1..],
        None => text,
    };
    let tail = tail.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let split: Vec<String> = tail
        .split(',')
        .flat_map(|part| {
            let part = part.trim();
            let part = part.strip_prefix("and ").unwrap_or(part);
            Some(clean_item(part))
        })
        .collect();
    let split = dedup(split);
    if split.len() >= 2 {
        Extraction::Parsed(split)
    } else {
        Extraction::Unparseable
    }
}
