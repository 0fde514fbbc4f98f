//! Synthetic sentiment models whose faithfulness is known by construction.
//!
//! Each bot classifies by a keyword rule: the positive keyword means
//! positive, the negative keyword negative, neither means unknown.

use serde::{Deserialize, Serialize};

use super::{Behavior, Reply};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BotKind {
    /// Flips the keyword for counterfactuals and names or masks the keyword.
    Faithful,
    /// Returns counterfactual paragraphs unchanged.
    Stubborn,
    /// Names or masks words that do not drive its decision.
    Oblivious,
}

impl std::str::FromStr for BotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "faithful" => Ok(BotKind::Faithful),
            "stubborn" => Ok(BotKind::Stubborn),
            "oblivious" => Ok(BotKind::Oblivious),
            other => Err(format!("unknown bot \"{other}\" (expected faithful, stubborn or oblivious)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordBot {
    pub kind: BotKind,
    pub positive: String,
    pub negative: String,
}

impl KeywordBot {
    pub fn new(kind: BotKind) -> Self {
        KeywordBot { kind, positive: "good".into(), negative: "bad".into() }
    }

    fn tokens(paragraph: &str) -> impl Iterator<Item = (usize, &str)> {
        paragraph
            .split_terminator(|c: char| !c.is_alphanumeric())
            .scan(0usize, move |offset, tok| {
                let start = *offset;
                *offset += tok.len() + 1;
                Some((start, tok))
            })
            .filter(|(_, t)| !t.is_empty())
    }

    fn keyword_of(&self, token: &str) -> Option<bool> {
        if token.eq_ignore_ascii_case(&self.positive) {
            Some(true)
        } else if token.eq_ignore_ascii_case(&self.negative) {
            Some(false)
        } else {
            None
        }
    }

    pub fn classify(&self, paragraph: &str) -> &'static str {
        match Self::tokens(paragraph).find_map(|(_, t)| self.keyword_of(t)) {
            Some(true) => "Positive",
            Some(false) => "Negative",
            None => "Unknown",
        }
    }

    fn flip(&self, paragraph: &str) -> String {
        let mut out = String::with_capacity(paragraph.len());
        let mut last = 0;
        for (start, tok) in Self::tokens(paragraph) {
            if let Some(positive) = self.keyword_of(tok) {
                out.push_str(&paragraph[last..start]);
                out.push_str(if positive { &self.negative } else { &self.positive });
                last = start + tok.len();
            }
        }
        out.push_str(&paragraph[last..]);
        out
    }

    fn chosen_words<'a>(&self, paragraph: &'a str) -> Vec<&'a str> {
        let mut seen: Vec<&str> = Vec::new();
        let want_keywords = self.kind != BotKind::Oblivious;
        for (_, tok) in Self::tokens(paragraph) {
            if (self.keyword_of(tok).is_some() == want_keywords) && !seen.iter().any(|s| s.eq_ignore_ascii_case(tok)) {
                seen.push(tok);
                if !want_keywords {
                    break;
                }
            }
        }
        seen
    }

    fn mask(&self, paragraph: &str, surface: &str) -> String {
        let words = self.chosen_words(paragraph);
        let mut out = String::with_capacity(paragraph.len());
        let mut last = 0;
        for (start, tok) in Self::tokens(paragraph) {
            if words.iter().any(|w| w.eq_ignore_ascii_case(tok)) {
                out.push_str(&paragraph[last..start]);
                out.push_str(surface);
                last = start + tok.len();
            }
        }
        out.push_str(&paragraph[last..]);
        out
    }
}

fn paragraph_of(message: &str) -> &str {
    match message.find("\n\nParagraph: ") {
        Some(at) => &message[at + "\n\nParagraph: ".len()..],
        None => message,
    }
}

fn mask_surface(message: &str) -> &'static str {
    if message.contains("with [REMOVED]") {
        "[REMOVED]"
    } else {
        "[REDACTED]"
    }
}

impl Behavior for KeywordBot {
    fn respond(&self, user_message: &str) -> Reply {
        let paragraph = paragraph_of(user_message);
        let text = if user_message.starts_with("Edit ") {
            let edited = match self.kind {
                BotKind::Stubborn => paragraph.to_string(),
                _ => self.flip(paragraph),
            };
            format!("Sure! Here is the edited paragraph:\n\n{edited}")
        } else if user_message.starts_with("List ") {
            let words = self.chosen_words(paragraph);
            if words.is_empty() {
                "There are no important words.".to_string()
            } else {
                let items: Vec<String> = words.iter().enumerate().map(|(i, w)| format!("{}. {w}", i + 1)).collect();
                format!("Sure! Here are the most important words:\n\n{}", items.join("\n"))
            }
        } else if user_message.starts_with("Redact ") {
            format!("Sure! Here's the redacted paragraph:\n\n{}", self.mask(paragraph, mask_surface(user_message)))
        } else {
            self.classify(paragraph).to_string()
        };
        Reply::text(text)
    }
}
