use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{SkipReason, Verdict, VerdictRecord};
use crate::datasets::TaskKind;
use crate::prompts::ExplanationKind;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub task: TaskKind,
    pub model: String,
    pub kind: ExplanationKind,
    /// Persona and the axis relevant to `kind`, e.g. `human/implicit`.
    pub config: String,
}

/// A ratio kept exact. `value` is absent when the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metric {
    pub numerator: u64,
    pub denominator: u64,
}

impl Metric {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        Metric { numerator, denominator }
    }

    pub fn exact(&self) -> Option<Ratio<u64>> {
        (self.denominator != 0).then(|| Ratio::new(self.numerator, self.denominator))
    }

    pub fn value(&self) -> Option<f64> {
        (self.denominator != 0).then(|| self.numerator as f64 / self.denominator as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStats {
    pub records: u64,
    /// Records whose first classification finished.
    pub classified: u64,
    pub correct: u64,
    pub faithful: u64,
    pub not_faithful: u64,
    pub skipped: BTreeMap<SkipReason, u64>,
}

impl GroupStats {
    pub fn accuracy(&self) -> Metric {
        Metric::new(self.correct, self.classified)
    }

    pub fn faithfulness(&self) -> Metric {
        Metric::new(self.faithful, self.faithful + self.not_faithful)
    }

    fn add(&mut self, r: &VerdictRecord) {
        self.records += 1;
        if r.was_classified() {
            self.classified += 1;
        }
        if r.classification_correct {
            self.correct += 1;
        }
        match r.verdict {
            Verdict::Faithful => self.faithful += 1,
            Verdict::NotFaithful => self.not_faithful += 1,
            Verdict::Skipped => {
                let reason = r.skip_reason.unwrap_or(SkipReason::InferenceError);
                *self.skipped.entry(reason).or_default() += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AggregateReport {
    pub groups: BTreeMap<GroupKey, GroupStats>,
}

/// Groups records by (task, model, kind, config) and counts outcomes.
pub fn aggregate<'a>(records: impl IntoIterator<Item = &'a VerdictRecord>) -> AggregateReport {
    let mut groups: BTreeMap<GroupKey, GroupStats> = BTreeMap::new();
    for r in records {
        let key = GroupKey { task: r.task, model: r.model.clone(), kind: r.kind, config: r.config.label_for(r.kind) };
        groups.entry(key).or_default().add(r);
    }
    AggregateReport { groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Label;
    use crate::evaluation::SessionKeys;
    use crate::prompts::PromptConfig;

    fn record(verdict: Verdict, reason: Option<SkipReason>) -> VerdictRecord {
        VerdictRecord {
            observation_id: "x".into(),
            task: TaskKind::Sentiment,
            model: "m".into(),
            kind: ExplanationKind::Redaction,
            config: PromptConfig::default(),
            sample: 0,
            seed: 0,
            initial_label: Some(Label::Positive),
            classification_correct: reason != Some(SkipReason::Incorrect),
            explanation_status: None,
            cf_target: None,
            words: None,
            recheck_paragraph: None,
            recheck_label: None,
            verdict,
            skip_reason: reason,
            failed_session: None,
            error: None,
            no_match_count: None,
            unmatched_words: Vec::new(),
            cache_keys: SessionKeys::default(),
        }
    }

    #[test]
    fn one_faithful_one_not_one_skipped() {
        let rs = [
            record(Verdict::Faithful, None),
            record(Verdict::NotFaithful, None),
            record(Verdict::Skipped, Some(SkipReason::Incorrect)),
        ];
        let report = aggregate(&rs);
        let stats = report.groups.values().next().unwrap();
        assert_eq!(stats.faithfulness().exact(), Some(Ratio::new(1, 2)));
        assert_eq!(stats.accuracy(), Metric::new(2, 3));
        assert_eq!(stats.skipped.get(&SkipReason::Incorrect), Some(&1));
    }

    #[test]
    fn all_skipped_is_undefined_not_zero() {
        let rs = [record(Verdict::Skipped, Some(SkipReason::Incorrect))];
        let report = aggregate(&rs);
        let stats = report.groups.values().next().unwrap();
        assert_eq!(stats.faithfulness().value(), None);
        assert_eq!(stats.faithfulness().exact(), None);
    }

    #[test]
    fn seven_of_ten() {
        let mut rs: Vec<_> = (0..7).map(|_| record(Verdict::Faithful, None)).collect();
        rs.extend((0..3).map(|_| record(Verdict::NotFaithful, None)));
        let stats = aggregate(&rs).groups.into_values().next().unwrap();
        assert_eq!(stats.faithfulness().value(), Some(0.7));
    }

    #[test]
    fn groups_split_by_kind_axis_only() {
        let mut a = record(Verdict::Faithful, None);
        let mut b = record(Verdict::Faithful, None);
        // Target mode is irrelevant to redaction, so these share a group.
        a.config.cf_target = crate::prompts::TargetMode::Implicit;
        b.config.cf_target = crate::prompts::TargetMode::Explicit;
        assert_eq!(aggregate(&[a, b]).groups.len(), 1);
    }
}
