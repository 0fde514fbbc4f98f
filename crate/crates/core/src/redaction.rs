//! Replacing attributed words in a paragraph with a mask token.
//!
//! Matching is case-insensitive. An item whose first (or last) character is
//! alphanumeric must start (or end) on a word boundary of the original text,
//! so `Office` never matches inside `officers`. When matches overlap, longer
//! items win, then the leftmost occurrence. Mask tokens already present in
//! the paragraph are left untouched and can not be matched into.

use serde::{Deserialize, Serialize};

use crate::prompts::MaskToken;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RedactionError {
    #[error("the word list is empty")]
    EmptyWordList,
    #[error("redaction needs a mask token, got none")]
    MissingMaskToken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Redaction {
    pub text: String,
    /// Items that matched nowhere, in the order given.
    pub unmatched: Vec<String>,
    /// Character spans `[start, end)` of the original paragraph that were replaced.
    pub spans: Vec<(usize, usize)>,
}

fn chars_eq(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

fn matches_at(text: &[char], start: usize, item: &[char]) -> bool {
    start + item.len() <= text.len() && text[start..start + item.len()].iter().zip(item).all(|(&a, &b)| chars_eq(a, b))
}

fn boundary_ok(text: &[char], start: usize, item: &[char]) -> bool {
    let end = start + item.len();
    let left = !item[0].is_alphanumeric() || start == 0 || !text[start - 1].is_alphanumeric();
    let right = !item[item.len() - 1].is_alphanumeric() || end == text.len() || !text[end].is_alphanumeric();
    left && right
}

/// Marks positions covered by mask tokens already in the text.
fn protected_positions(text: &[char]) -> Vec<bool> {
    let mut out = vec![false; text.len()];
    for surface in MaskToken::SURFACES {
        let s: Vec<char> = surface.chars().collect();
        let mut i = 0;
        while i + s.len() <= text.len() {
            if text[i..i + s.len()] == s[..] {
                out[i..i + s.len()].iter_mut().for_each(|p| *p = true);
                i += s.len();
            } else {
                i += 1;
            }
        }
    }
    out
}

/// Whether `item` occurs at `start` as a legal match, ignoring what other
/// matches have claimed.
pub fn is_candidate(text: &[char], start: usize, item: &[char]) -> bool {
    !item.is_empty() && matches_at(text, start, item) && boundary_ok(text, start, item)
}

/// Replaces every occurrence of each item in `words` with the mask surface.
pub fn redact(paragraph: &str, words: &[String], mask: MaskToken) -> Result<Redaction, RedactionError> {
    let surface = mask.surface().ok_or(RedactionError::MissingMaskToken)?;
    let items: Vec<(String, Vec<char>)> = words
        .iter()
        .map(|w| w.trim())
        .filter(|w| !w.is_empty())
        .map(|w| (w.to_string(), w.chars().collect()))
        .collect();
    if items.is_empty() {
        return Err(RedactionError::EmptyWordList);
    }

    let text: Vec<char> = paragraph.chars().collect();
    let mut taken = protected_positions(&text);
    let mut hit = vec![false; items.len()];
    let mut spans: Vec<(usize, usize)> = Vec::new();

    let mut lengths: Vec<usize> = items.iter().map(|(_, c)| c.len()).collect();
    lengths.sort_unstable_by(|a, b| b.cmp(a));
    lengths.dedup();
    for len in lengths {
        let group: Vec<usize> = (0..items.len()).filter(|&i| items[i].1.len() == len).collect();
        let mut start = 0;
        while start + len <= text.len() {
            if taken[start..start + len].iter().any(|&t| t) {
                start += 1;
                continue;
            }
            let matched: Vec<usize> = group.iter().copied().filter(|&i| is_candidate(&text, start, &items[i].1)).collect();
            if matched.is_empty() {
                start += 1;
                continue;
            }
            for i in matched {
                hit[i] = true;
            }
            taken[start..start + len].iter_mut().for_each(|t| *t = true);
            spans.push((start, start + len));
            start += len;
        }
    }
    spans.sort_unstable();

    let mut out = String::with_capacity(paragraph.len());
    let mut cursor = 0;
    for &(s, e) in &spans {
        out.extend(&text[cursor..s]);
        out.push_str(surface);
        cursor = e;
    }
    out.extend(&text[cursor..]);

    let mut unmatched: Vec<String> = Vec::new();
    for (i, (word, _)) in items.iter().enumerate() {
        if !hit[i] && !unmatched.iter().any(|u| u.to_lowercase() == word.to_lowercase()) {
            unmatched.push(word.clone());
        }
    }
    Ok(Redaction { text: out, unmatched, spans })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    fn run(p: &str, ws: &[&str]) -> Redaction {
        redact(p, &words(ws), MaskToken::Redacted).unwrap()
    }

    #[test]
    fn replaces_case_insensitively_at_word_boundaries() {
        let r = run("Mary went back to the office. The officers came back.", &["Back", "Office"]);
        assert_eq!(r.text, "Mary went [REDACTED] to the [REDACTED]. The officers came [REDACTED].");
        assert!(r.unmatched.is_empty());
    }

    #[test]
    fn longer_item_wins_over_overlap() {
        let r = run("the storage capacity grew", &["storage", "storage capacity"]);
        assert_eq!(r.text, "the [REDACTED] grew");
        assert_eq!(r.unmatched, words(&["storage"]));
    }

    #[test]
    fn parenthesised_item_does_not_match_plain_plural() {
        let r = run("moves by rivals such as Google", &["rival(s)", "Google"]);
        assert_eq!(r.text, "moves by rivals such as [REDACTED]");
        assert_eq!(r.unmatched, words(&["rival(s)"]));
    }

    #[test]
    fn existing_mask_tokens_are_protected() {
        let r = run("a [REDACTED] b redacted", &["redacted"]);
        assert_eq!(r.text, "a [REDACTED] b [REDACTED]");
        assert_eq!(r.spans, vec![(15, 23)]);
        let r = run("x [REMOVED] y", &["[REMOVED]"]);
        assert_eq!(r.text, "x [REMOVED] y");
        assert_eq!(r.unmatched, words(&["[REMOVED]"]));
    }

    #[test]
    fn non_alnum_edges_skip_boundary_check() {
        let r = run("price:$5 now", &["$5"]);
        assert_eq!(r.text, "price:[REDACTED] now");
    }

    #[test]
    fn removed_surface_and_errors() {
        let r = redact("it is awful", &words(&["awful"]), MaskToken::Removed).unwrap();
        assert_eq!(r.text, "it is [REMOVED]");
        assert_eq!(redact("x", &[], MaskToken::Redacted), Err(RedactionError::EmptyWordList));
        assert_eq!(redact("x", &words(&["  "]), MaskToken::Redacted), Err(RedactionError::EmptyWordList));
        assert_eq!(redact("x", &words(&["x"]), MaskToken::None), Err(RedactionError::MissingMaskToken));
    }

    #[test]
    fn non_ascii_text_is_handled_by_char() {
        let r = run("Ça va très Bien, ÇA VA", &["ça va"]);
        assert_eq!(r.text, "[REDACTED] très Bien, [REDACTED]");
    }
}
