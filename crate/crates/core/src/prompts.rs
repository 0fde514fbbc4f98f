//! Prompt templates for classification and the three explanation kinds.
//!
//! Wording is reproduced exactly as used in the reference transcripts,
//! including their grammatical slips ("Consideing", "does not entails",
//! "such you would", "classify the as", "you a human not determine").
//! Changing any of them breaks byte-equality with the golden corpus.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::{Label, Observation, TaskKind};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("observation \"{0}\" has no option set; attach one before rendering")]
    MissingOptions(String),
    #[error("observation \"{0}\" is missing its {1}")]
    MissingField(String, &'static str),
    #[error("counterfactual target \"{target}\" equals the gold label of observation \"{id}\"")]
    TargetIsGold { id: String, target: String },
    #[error("observation \"{id}\": no counterfactual target exists for gold label \"{gold}\"")]
    NoTarget { id: String, gold: String },
    #[error("redaction explanations need a mask token")]
    MissingMaskToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Persona {
    Objective,
    Human,
    You,
}

impl Persona {
    pub const ALL: [Persona; 3] = [Persona::Objective, Persona::Human, Persona::You];

    pub fn as_str(self) -> &'static str {
        match self {
            Persona::Objective => "objective",
            Persona::Human => "human",
            Persona::You => "you",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaskToken {
    #[serde(rename = "REDACTED")]
    Redacted,
    #[serde(rename = "REMOVED")]
    Removed,
    #[serde(rename = "none")]
    None,
}

impl MaskToken {
    pub const SURFACES: [&'static str; 2] = ["[REDACTED]", "[REMOVED]"];

    pub fn surface(self) -> Option<&'static str> {
        match self {
            MaskToken::Redacted => Some("[REDACTED]"),
            MaskToken::Removed => Some("[REMOVED]"),
            MaskToken::None => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MaskToken::Redacted => "REDACTED",
            MaskToken::Removed => "REMOVED",
            MaskToken::None => "none",
        }
    }

    fn classification_sentence(self) -> Option<&'static str> {
        match self {
            MaskToken::Redacted => Some("The paragraph can contain redacted words marked with [REDACTED]."),
            MaskToken::Removed => Some("The paragraph can contain removed words marked with [REMOVED]."),
            MaskToken::None => None,
        }
    }
}

/// Whether a counterfactual prompt names the desired label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    Explicit,
    Implicit,
}

impl TargetMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetMode::Explicit => "explicit",
            TargetMode::Implicit => "implicit",
        }
    }
}

/// A resolved counterfactual target for one observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "target")]
pub enum CounterfactualTarget {
    Explicit(Label),
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplanationKind {
    Counterfactual,
    FeatureAttribution,
    Redaction,
}

impl ExplanationKind {
    pub const ALL: [ExplanationKind; 3] =
        [ExplanationKind::Counterfactual, ExplanationKind::FeatureAttribution, ExplanationKind::Redaction];

    pub fn as_str(self) -> &'static str {
        match self {
            ExplanationKind::Counterfactual => "counterfactual",
            ExplanationKind::FeatureAttribution => "feature-attribution",
            ExplanationKind::Redaction => "redaction",
        }
    }

    pub fn is_masking(self) -> bool {
        !matches!(self, ExplanationKind::Counterfactual)
    }
}

impl fmt::Display for ExplanationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExplanationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "counterfactual" | "cf" => Ok(ExplanationKind::Counterfactual),
            "feature-attribution" | "feature_attribution" | "attribution" | "fa" => Ok(ExplanationKind::FeatureAttribution),
            "redaction" | "redact" | "redacted" => Ok(ExplanationKind::Redaction),
            other => Err(format!("unknown explanation kind \"{other}\"")),
        }
    }
}

/// The prompt variation axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptConfig {
    pub persona: Persona,
    pub mask_token: MaskToken,
    pub cf_target: TargetMode,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig { persona: Persona::Objective, mask_token: MaskToken::Redacted, cf_target: TargetMode::Explicit }
    }
}

impl PromptConfig {
    pub fn new(persona: Persona, mask_token: MaskToken, cf_target: TargetMode) -> Self {
        PromptConfig { persona, mask_token, cf_target }
    }

    /// The six variations evaluated per explanation kind: persona crossed with
    /// the counterfactual target mode, or with the mask token for the masking
    /// kinds.
    pub fn variations(kind: ExplanationKind) -> Vec<PromptConfig> {
        let mut out = Vec::with_capacity(6);
        for persona in Persona::ALL {
            match kind {
                ExplanationKind::Counterfactual => {
                    for mode in [TargetMode::Explicit, TargetMode::Implicit] {
                        out.push(PromptConfig::new(persona, MaskToken::Redacted, mode));
                    }
                }
                _ => {
                    for mask in [MaskToken::Redacted, MaskToken::Removed] {
                        out.push(PromptConfig::new(persona, mask, TargetMode::Explicit));
                    }
                }
            }
        }
        out
    }

    /// Short label such as `objective/REDACTED/explicit`.
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.persona.as_str(), self.mask_token.as_str(), self.cf_target.as_str())
    }

    /// The label restricted to the axes that matter for `kind`.
    pub fn label_for(&self, kind: ExplanationKind) -> String {
        match kind {
            ExplanationKind::Counterfactual => format!("{}/{}", self.persona.as_str(), self.cf_target.as_str()),
            _ => format!("{}/{}", self.persona.as_str(), self.mask_token.as_str()),
        }
    }
}

const NO_EXPLAIN: &str = "Do not explain the answer.";
const FEW_EDITS: &str = "Make as few edits as possible.";

fn with_paragraph(instruction: String, paragraph: &str) -> String {
    format!("{instruction}\n\nParagraph: {paragraph}")
}

fn question(obs: &Observation) -> Result<&str, PromptError> {
    obs.question.as_deref().ok_or_else(|| PromptError::MissingField(obs.id.clone(), "question"))
}

fn statement(obs: &Observation) -> Result<&str, PromptError> {
    obs.statement.as_deref().ok_or_else(|| PromptError::MissingField(obs.id.clone(), "statement"))
}

fn options(obs: &Observation) -> Result<&[String], PromptError> {
    match obs.options.as_deref() {
        Some(options) if !options.is_empty() => Ok(options),
        _ => Err(PromptError::MissingOptions(obs.id.clone())),
    }
}

/// Option letter for a zero-based index: `a`, `b`, ...
pub fn option_letter(index: usize) -> char {
    (b'a' + (index % 26) as u8) as char
}

/// `a) "hallway", b) "office", or c) "unknown"`
fn answer_choices(options: &[String]) -> String {
    let mut parts: Vec<String> =
        options.iter().enumerate().map(|(i, o)| format!("{}) \"{}\"", option_letter(i), o)).collect();
    parts.push(format!("or {}) \"unknown\"", option_letter(options.len())));
    parts.join(", ")
}

/// `a) "hallway", and b) "office"`
fn option_listing(options: &[String]) -> String {
    let parts: Vec<String> = options.iter().enumerate().map(|(i, o)| format!("{}) \"{}\"", option_letter(i), o)).collect();
    match parts.split_last() {
        Some((last, rest)) if !rest.is_empty() => format!("{}, and {}", rest.join(", "), last),
        Some((last, _)) => last.clone(),
        None => String::new(),
    }
}

/// Renders the classification prompt. `paragraph_override` replaces the
/// observation's paragraph, which is how the consistency check re-classifies
/// an explanation-derived paragraph.
pub fn render_classification(
    obs: &Observation,
    cfg: &PromptConfig,
    paragraph_override: Option<&str>,
) -> Result<String, PromptError> {
    let paragraph = paragraph_override.unwrap_or(&obs.paragraph);
    let mask = cfg.mask_token.classification_sentence();
    let mut sentences: Vec<String> = Vec::with_capacity(4);
    match obs.task {
        TaskKind::Sentiment => {
            sentences.push(
                match cfg.persona {
                    Persona::Objective => "What is the sentiment of the following paragraph?",
                    Persona::Human => "What would a human classify the sentiment of the following paragraph as?",
                    Persona::You => "What would you classify the sentiment of the following paragraph as?",
                }
                .to_string(),
            );
            sentences.extend(mask.map(str::to_string));
            sentences.push(r#"Answer only "positive", "negative", "neutral", or "unknown"."#.to_string());
        }
        TaskKind::QaMultichoice => {
            let q = question(obs)?;
            let options = options(obs)?;
            sentences.push(match cfg.persona {
                Persona::Objective => format!("Consider the following paragraph, and answer the question: \"{q}\""),
                Persona::Human => format!("Consideing the following paragraph, how would a human answer the question: \"{q}\""),
                Persona::You => format!("Consideing the following paragraph, how would you answer the question: \"{q}\""),
            });
            sentences.extend(mask.map(str::to_string));
            sentences.push(format!("Answer either {} if the question can not be answered.", answer_choices(options)));
        }
        TaskKind::Nli => {
            let s = statement(obs)?;
            sentences.push(match cfg.persona {
                Persona::Objective => format!("Does the statement \"{s}\" entail from the following paragraph?"),
                Persona::Human => format!("Does a human think the statement \"{s}\" entail from the following paragraph?"),
                Persona::You => format!("Do you think the statement \"{s}\" entail from the following paragraph?"),
            });
            sentences.extend(mask.map(str::to_string));
            sentences.push(
                r#"Answer either 1) "yes" for entailment, 2) "no" for no entailment, or 3) "unknown" if the question can not be answered."#
                    .to_string(),
            );
        }
    }
    sentences.push(NO_EXPLAIN.to_string());
    Ok(with_paragraph(sentences.join(" "), paragraph))
}

/// Resolves the counterfactual target for an observation: the complement of
/// the gold label (sentiment, NLI) or the first non-gold option
/// (multi-choice).
pub fn counterfactual_target(obs: &Observation, mode: TargetMode) -> Result<CounterfactualTarget, PromptError> {
    if mode == TargetMode::Implicit {
        return Ok(CounterfactualTarget::Implicit);
    }
    let no_target = || PromptError::NoTarget { id: obs.id.clone(), gold: obs.gold_label.to_string() };
    let target = match (&obs.task, &obs.gold_label) {
        (TaskKind::Sentiment, Label::Positive) => Label::Negative,
        (TaskKind::Sentiment, Label::Negative) => Label::Positive,
        (TaskKind::Nli, Label::Yes) => Label::No,
        (TaskKind::Nli, Label::No) => Label::Yes,
        (TaskKind::QaMultichoice, Label::Choice(gold)) => {
            let option = options(obs)?.iter().find(|o| *o != gold).ok_or_else(no_target)?;
            Label::Choice(option.clone())
        }
        _ => return Err(no_target()),
    };
    Ok(CounterfactualTarget::Explicit(target))
}

/// Renders the counterfactual prompt with the target derived from `cfg`.
pub fn render_counterfactual(obs: &Observation, cfg: &PromptConfig) -> Result<String, PromptError> {
    let target = counterfactual_target(obs, cfg.cf_target)?;
    render_counterfactual_with(obs, cfg.persona, &target)
}

/// Renders the counterfactual prompt for an explicit, caller-chosen target.
pub fn render_counterfactual_with(
    obs: &Observation,
    persona: Persona,
    target: &CounterfactualTarget,
) -> Result<String, PromptError> {
    if let CounterfactualTarget::Explicit(label) = target {
        if *label == obs.gold_label {
            return Err(PromptError::TargetIsGold { id: obs.id.clone(), target: label.to_string() });
        }
    }
    let edit = match (obs.task, target) {
        (TaskKind::Sentiment, CounterfactualTarget::Explicit(label)) => match persona {
            Persona::Objective => format!("Edit the following paragraph such that the sentiment is \"{label}\"."),
            Persona::Human => format!("Edit the following paragraph such a human would classify the sentiment is \"{label}\"."),
            Persona::You => format!("Edit the following paragraph such you would classify the sentiment is \"{label}\"."),
        },
        (TaskKind::Sentiment, CounterfactualTarget::Implicit) => match persona {
            Persona::Objective => "Edit the following paragraph such that the sentiment becomes the opposite of what it currently is.",
            Persona::Human => "Edit the following paragraph such a human would classify the as the opposite of what it currently is.",
            Persona::You => "Edit the following paragraph such you would classify the sentiment as the opposite of what it currently is.",
        }
        .to_string(),
        (TaskKind::QaMultichoice, CounterfactualTarget::Explicit(label)) => {
            let q = question(obs)?;
            match persona {
                Persona::Objective => format!("Edit the following paragraph such that the answer to the question \"{q}\" is \"{label}\"."),
                Persona::Human => format!("Edit the following paragraph such a human would answer the question \"{q}\" with \"{label}\"."),
                Persona::You => format!("Edit the following paragraph such you would answer the question \"{q}\" with \"{label}\"."),
            }
        }
        (TaskKind::QaMultichoice, CounterfactualTarget::Implicit) => {
            let q = question(obs)?;
            let listing = option_listing(options(obs)?);
            let lead = match persona {
                Persona::Objective => format!("Edit the following paragraph such that the answer to the question \"{q}\" is different from how it should currently be answered."),
                Persona::Human => format!("Edit the following paragraph such a human would answer the question \"{q}\" differently from how it should currently be answered."),
                Persona::You => format!("Edit the following paragraph such you would answer the question \"{q}\" differently from how it should currently be answered."),
            };
            format!("{lead} The possible answer options, including the current answer, are {listing}.")
        }
        (TaskKind::Nli, CounterfactualTarget::Explicit(label)) => {
            let s = statement(obs)?;
            let relation = if *label == Label::Yes { "entails" } else { "does not entails" };
            match persona {
                Persona::Objective => format!("Edit the following paragraph such that the statement \"{s}\" {relation} from it."),
                Persona::Human => format!("Edit the following paragraph such that a human would say the statement \"{s}\" {relation} from it."),
                Persona::You => format!("Edit the following paragraph such that you would say the statement \"{s}\" {relation} from it."),
            }
        }
        (TaskKind::Nli, CounterfactualTarget::Implicit) => {
            let s = statement(obs)?;
            match persona {
                Persona::Objective => format!("Edit the following paragraph, such that given the statement \"{s}\", the entailment becomes the opposite of what it currently is."),
                Persona::Human => format!("Edit the following paragraph, such that given the statement \"{s}\", a human would say the entailment is the opposite of what it currently is."),
                Persona::You => format!("Edit the following paragraph, such that given the statement \"{s}\", you would say the entailment is the opposite of what it currently is."),
            }
        }
    };
    Ok(with_paragraph(format!("{edit} {FEW_EDITS} {NO_EXPLAIN}"), &obs.paragraph))
}

/// The task-specific "for determining ..." subject and the persona-specific
/// "such that without these words ..." clause shared by the attribution and
/// redaction prompts. Returns (verb phrase prefix, without-clause).
fn masking_parts(obs: &Observation, persona: Persona, list_kind: bool) -> Result<(String, &'static str), PromptError> {
    Ok(match obs.task {
        TaskKind::Sentiment => (
            "the most important words for determining the sentiment of the following paragraph".to_string(),
            match persona {
                Persona::Objective => "such that without these words the sentiment can not be determined.",
                Persona::Human => "such that without these words a human can not determine the sentiment.",
                Persona::You => "such that without these words you can not determine the sentiment.",
            },
        ),
        TaskKind::QaMultichoice => (
            format!("the most important words for answering \"{}\" given the following paragraph", question(obs)?),
            match persona {
                Persona::Objective => "such that without these words the question can not be answered.",
                Persona::Human => "such that without these words a human can not answer the question.",
                Persona::You => "such that without these words you can not answer the question.",
            },
        ),
        TaskKind::Nli => (
            format!(
                "the most important words in the following paragraph, for determining if the statement \"{}\" entails from it",
                statement(obs)?
            ),
            match (persona, list_kind) {
                (Persona::Objective, _) => "such that without these words it can not be determined if there is entailment or no entailment.",
                (Persona::Human, true) => "such that without these words you a human not determine if there is entailment or no entailment.",
                (Persona::Human, false) => "such that without these words a human can not determine if there is entailment or no entailment.",
                (Persona::You, _) => "such that without these words you can not determine if there is entailment or no entailment.",
            },
        ),
    })
}

pub fn render_feature_attribution(obs: &Observation, cfg: &PromptConfig) -> Result<String, PromptError> {
    let (subject, without) = masking_parts(obs, cfg.persona, true)?;
    Ok(with_paragraph(format!("List {subject}, {without} {NO_EXPLAIN}"), &obs.paragraph))
}

pub fn render_redaction(obs: &Observation, cfg: &PromptConfig) -> Result<String, PromptError> {
    let surface = cfg.mask_token.surface().ok_or(PromptError::MissingMaskToken)?;
    let (subject, without) = masking_parts(obs, cfg.persona, false)?;
    Ok(with_paragraph(
        format!("Redact {subject}, by replacing important words with {surface}, {without} {NO_EXPLAIN}"),
        &obs.paragraph,
    ))
}

/// Renders the explanation prompt for `kind`.
pub fn render_explanation(obs: &Observation, kind: ExplanationKind, cfg: &PromptConfig) -> Result<String, PromptError> {
    match kind {
        ExplanationKind::Counterfactual => render_counterfactual(obs, cfg),
        ExplanationKind::FeatureAttribution => render_feature_attribution(obs, cfg),
        ExplanationKind::Redaction => render_redaction(obs, cfg),
    }
}

/// One entry of the template catalog.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub task: TaskKind,
    pub prompt: &'static str,
    pub persona: Persona,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_token: Option<MaskToken>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cf_target: Option<TargetMode>,
    pub text: String,
}

fn placeholder(task: TaskKind, options: usize) -> Observation {
    match task {
        TaskKind::Sentiment => Observation::sentiment("template", "{paragraph}", Label::Negative),
        TaskKind::QaMultichoice => {
            let opts: Vec<String> = (1..=options).map(|i| format!("{{option {i}}}")).collect();
            let gold = opts[options - 1].clone();
            Observation::multichoice("template", "{paragraph}", "{question}", Some(opts), gold)
        }
        TaskKind::Nli => Observation::nli("template", "{paragraph}", "{statement}", Label::Yes),
    }
}

/// Every template with placeholder content, in a fixed order.
pub fn template_catalog() -> Vec<CatalogEntry> {
    let mut out = Vec::new();
    for task in TaskKind::ALL {
        let obs = placeholder(task, 2);
        for persona in Persona::ALL {
            for mask in [MaskToken::Redacted, MaskToken::Removed, MaskToken::None] {
                let cfg = PromptConfig::new(persona, mask, TargetMode::Explicit);
                out.push(CatalogEntry {
                    task,
                    prompt: "classification",
                    persona,
                    mask_token: Some(mask),
                    cf_target: None,
                    text: render_classification(&obs, &cfg, None).expect("placeholder is complete"),
                });
            }
            for mode in [TargetMode::Explicit, TargetMode::Implicit] {
                let cfg = PromptConfig::new(persona, MaskToken::Redacted, mode);
                out.push(CatalogEntry {
                    task,
                    prompt: "counterfactual",
                    persona,
                    mask_token: None,
                    cf_target: Some(mode),
                    text: render_counterfactual(&obs, &cfg).expect("placeholder is complete"),
                });
            }
            let cfg = PromptConfig::new(persona, MaskToken::Redacted, TargetMode::Explicit);
            out.push(CatalogEntry {
                task,
                prompt: "feature-attribution",
                persona,
                mask_token: None,
                cf_target: None,
                text: render_feature_attribution(&obs, &cfg).expect("placeholder is complete"),
            });
            for mask in [MaskToken::Redacted, MaskToken::Removed] {
                let cfg = PromptConfig::new(persona, mask, TargetMode::Explicit);
                out.push(CatalogEntry {
                    task,
                    prompt: "redaction",
                    persona,
                    mask_token: Some(mask),
                    cf_target: None,
                    text: render_redaction(&obs, &cfg).expect("placeholder is complete"),
                });
            }
        }
    }
    out
}
