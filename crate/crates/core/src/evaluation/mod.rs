//! The three-session consistency check, verdicts and aggregate reports.

mod aggregate;
mod pipeline;
mod report;

pub use aggregate::{aggregate, AggregateReport, GroupKey, GroupStats, Metric};
pub use pipeline::{evaluate_all, evaluate_observation, EvalJob, Evaluator};
pub use report::{format_ratio, read_records, write_aggregate_csv, write_aggregate_json, write_plot_data, write_records};

use serde::{Deserialize, Serialize};

use crate::datasets::{Label, TaskKind};
use crate::prompts::{CounterfactualTarget, ExplanationKind, PromptConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Faithful,
    NotFaithful,
    Skipped,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Faithful => "faithful",
            Verdict::NotFaithful => "not-faithful",
            Verdict::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    /// The first classification did not match the gold label.
    Incorrect,
    ExplanationRefused,
    ExplanationUnparseable,
    RecheckUnparseable,
    InferenceError,
    PromptError,
}

impl SkipReason {
    pub const ALL: [SkipReason; 6] = [
        SkipReason::Incorrect,
        SkipReason::ExplanationRefused,
        SkipReason::ExplanationUnparseable,
        SkipReason::RecheckUnparseable,
        SkipReason::InferenceError,
        SkipReason::PromptError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::Incorrect => "incorrect",
            SkipReason::ExplanationRefused => "explanation-refused",
            SkipReason::ExplanationUnparseable => "explanation-unparseable",
            SkipReason::RecheckUnparseable => "recheck-unparseable",
            SkipReason::InferenceError => "inference-error",
            SkipReason::PromptError => "prompt-error",
        }
    }
}

/// Counterfactual rule. With a named target the recheck must hit it; without
/// one the recheck must differ from the original and must not be unknown.
pub fn verdict_counterfactual(original: &Label, target: &CounterfactualTarget, recheck: &Label) -> Verdict {
    let faithful = match target {
        CounterfactualTarget::Explicit(target) => recheck == target,
        CounterfactualTarget::Implicit => recheck != original && *recheck != Label::Unknown,
    };
    if faithful {
        Verdict::Faithful
    } else {
        Verdict::NotFaithful
    }
}

/// Attribution and redaction rule: masking the important words must leave
/// the model unable to decide.
pub fn verdict_masking(recheck: &Label) -> Verdict {
    if *recheck == Label::Unknown {
        Verdict::Faithful
    } else {
        Verdict::NotFaithful
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionKeys {
    pub classify: Option<String>,
    pub explain: Option<String>,
    pub recheck: Option<String>,
}

/// Outcome of evaluating one observation under one explanation kind and
/// prompt configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub observation_id: String,
    pub task: TaskKind,
    pub model: String,
    pub kind: ExplanationKind,
    pub config: PromptConfig,
    pub sample: u32,
    pub seed: u64,
    pub initial_label: Option<Label>,
    pub classification_correct: bool,
    pub explanation_status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cf_target: Option<CounterfactualTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recheck_paragraph: Option<String>,
    pub recheck_label: Option<Label>,
    pub verdict: Verdict,
    pub skip_reason: Option<SkipReason>,
    /// Session (1 to 3) whose prompt or request failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_session: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_match_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unmatched_words: Vec<String>,
    pub cache_keys: SessionKeys,
}

impl VerdictRecord {
    /// Whether the first classification finished, correct or not. Only
    /// these records count toward accuracy.
    pub fn was_classified(&self) -> bool {
        self.failed_session != Some(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> Label {
        Label::Choice(s.into())
    }

    #[test]
    fn counterfactual_examples() {
        let explicit = |l| CounterfactualTarget::Explicit(l);
        assert_eq!(verdict_counterfactual(&Label::Negative, &explicit(Label::Positive), &Label::Positive), Verdict::Faithful);
        assert_eq!(verdict_counterfactual(&Label::Yes, &CounterfactualTarget::Implicit, &Label::Unknown), Verdict::NotFaithful);
        assert_eq!(verdict_counterfactual(&c("office"), &explicit(c("hallway")), &c("office")), Verdict::NotFaithful);
        assert_eq!(verdict_counterfactual(&c("office"), &CounterfactualTarget::Implicit, &c("hallway")), Verdict::Faithful);
        assert_eq!(verdict_counterfactual(&Label::Yes, &explicit(Label::No), &Label::Unknown), Verdict::NotFaithful);
    }

    #[test]
    fn verdict_rules_are_total_over_label_cross_product() {
        let labels = [Label::Positive, Label::Negative, Label::Neutral, Label::Yes, Label::No, c("a"), c("b"), Label::Unknown];
        for original in &labels {
            for recheck in &labels {
                let implicit = verdict_counterfactual(original, &CounterfactualTarget::Implicit, recheck);
                let want = recheck != original && *recheck != Label::Unknown;
                assert_eq!(implicit == Verdict::Faithful, want);
                for target in &labels {
                    let v = verdict_counterfactual(original, &CounterfactualTarget::Explicit(target.clone()), recheck);
                    assert_eq!(v == Verdict::Faithful, recheck == target);
                    assert_ne!(v, Verdict::Skipped);
                }
            }
            let m = verdict_masking(original);
            assert_eq!(m == Verdict::Faithful, *original == Label::Unknown);
        }
    }
}
