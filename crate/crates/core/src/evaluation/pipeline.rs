use futures::StreamExt;

use super::{verdict_counterfactual, verdict_masking, SessionKeys, SkipReason, Verdict, VerdictRecord};
use crate::datasets::Observation;
use crate::extraction::{extract_label, extract_paragraph, extract_word_list, Extraction};
use crate::inference::{ChatExchange, GenerationParams, InferenceClient};
use crate::prompts::{counterfactual_target, render_classification, render_explanation, ExplanationKind, PromptConfig};
use crate::redaction::redact;

/// Runs the protocol against one client with fixed generation parameters.
pub struct Evaluator<'a> {
    pub client: &'a InferenceClient,
    pub params: GenerationParams,
}

/// One unit of work: an observation under a kind, config and sample index.
#[derive(Debug, Clone)]
pub struct EvalJob<'o> {
    pub observation: &'o Observation,
    pub kind: ExplanationKind,
    pub config: PromptConfig,
    pub sample: u32,
}

struct Draft {
    record: VerdictRecord,
}

impl Draft {
    fn skip(mut self, reason: SkipReason) -> VerdictRecord {
        self.record.verdict = Verdict::Skipped;
        self.record.skip_reason = Some(reason);
        self.record
    }

    fn fail(mut self, session: u8, reason: SkipReason, error: String) -> VerdictRecord {
        self.record.failed_session = Some(session);
        self.record.error = Some(error);
        self.skip(reason)
    }
}

impl Evaluator<'_> {
    async fn send(&self, prompt: String, seed: u64) -> ChatExchange {
        let request = self.client.profile().request(prompt, self.params.with_seed(seed));
        self.client.exchange(request).await
    }

    /// Classify, explain in a separate session, re-classify in a third, then
    /// apply the verdict rule for `kind`.
    pub async fn evaluate(&self, job: &EvalJob<'_>) -> VerdictRecord {
        let obs = job.observation;
        let cfg = &job.config;
        let seed = self.params.seed.wrapping_add(job.sample as u64);
        let mut draft = Draft {
            record: VerdictRecord {
                observation_id: obs.id.clone(),
                task: obs.task,
                model: self.client.profile().model_name.clone(),
                kind: job.kind,
                config: *cfg,
                sample: job.sample,
                seed,
                initial_label: None,
                classification_correct: false,
                explanation_status: None,
                cf_target: None,
                words: None,
                recheck_paragraph: None,
                recheck_label: None,
                verdict: Verdict::Skipped,
                skip_reason: None,
                failed_session: None,
                error: None,
                no_match_count: None,
                unmatched_words: Vec::new(),
                cache_keys: SessionKeys::default(),
            },
        };

        let prompt = match render_classification(obs, cfg, None) {
            Ok(p) => p,
            Err(e) => return draft.fail(1, SkipReason::PromptError, e.to_string()),
        };
        let first = self.send(prompt, seed).await;
        draft.record.cache_keys.classify = Some(first.cache_key.clone());
        let text = match first.response {
            Ok(t) => t,
            Err(e) => return draft.fail(1, SkipReason::InferenceError, e),
        };
        let initial = extract_label(&text, obs).parsed();
        draft.record.classification_correct = initial.as_ref() == Some(&obs.gold_label);
        draft.record.initial_label = initial.clone();
        if !draft.record.classification_correct {
            return draft.skip(SkipReason::Incorrect);
        }
        let initial = initial.expect("correct implies parsed");

        let target = if job.kind == ExplanationKind::Counterfactual {
            match counterfactual_target(obs, cfg.cf_target) {
                Ok(t) => Some(t),
                Err(e) => return draft.fail(2, SkipReason::PromptError, e.to_string()),
            }
        } else {
            None
        };
        draft.record.cf_target = target.clone();
        let prompt = match render_explanation(obs, job.kind, cfg) {
            Ok(p) => p,
            Err(e) => return draft.fail(2, SkipReason::PromptError, e.to_string()),
        };
        let second = self.send(prompt, seed).await;
        draft.record.cache_keys.explain = Some(second.cache_key.clone());
        let text = match second.response {
            Ok(t) => t,
            Err(e) => return draft.fail(2, SkipReason::InferenceError, e),
        };

        let transformed = match job.kind {
            ExplanationKind::Counterfactual | ExplanationKind::Redaction => {
                let extracted = extract_paragraph(&text);
                draft.record.explanation_status = Some(extracted.status().to_string());
                match extracted {
                    Extraction::Parsed(p) => p,
                    Extraction::Refused => return draft.skip(SkipReason::ExplanationRefused),
                    Extraction::Unparseable => return draft.skip(SkipReason::ExplanationUnparseable),
                }
            }
            ExplanationKind::FeatureAttribution => {
                let extracted = extract_word_list(&text);
                draft.record.explanation_status = Some(extracted.status().to_string());
                let words = match extracted {
                    Extraction::Parsed(w) => w,
                    Extraction::Refused => return draft.skip(SkipReason::ExplanationRefused),
                    Extraction::Unparseable => return draft.skip(SkipReason::ExplanationUnparseable),
                };
                let redaction = match redact(&obs.paragraph, &words, cfg.mask_token) {
                    Ok(r) => r,
                    Err(e) => return draft.fail(2, SkipReason::PromptError, e.to_string()),
                };
                draft.record.no_match_count = Some(redaction.unmatched.len());
                draft.record.unmatched_words = redaction.unmatched;
                draft.record.words = Some(words);
                redaction.text
            }
        };
        draft.record.recheck_paragraph = Some(transformed.clone());

        let prompt = match render_classification(obs, cfg, Some(&transformed)) {
            Ok(p) => p,
            Err(e) => return draft.fail(3, SkipReason::PromptError, e.to_string()),
        };
        let third = self.send(prompt, seed).await;
        draft.record.cache_keys.recheck = Some(third.cache_key.clone());
        let text = match third.response {
            Ok(t) => t,
            Err(e) => return draft.fail(3, SkipReason::InferenceError, e),
        };
        let Some(recheck) = extract_label(&text, obs).parsed() else {
            return draft.skip(SkipReason::RecheckUnparseable);
        };
        draft.record.verdict = match &target {
            Some(t) => verdict_counterfactual(&initial, t, &recheck),
            None => verdict_masking(&recheck),
        };
        draft.record.recheck_label = Some(recheck);
        draft.record
    }
}

/// Evaluates a single observation.
pub async fn evaluate_observation(
    client: &InferenceClient,
    params: GenerationParams,
    obs: &Observation,
    kind: ExplanationKind,
    cfg: PromptConfig,
) -> VerdictRecord {
    Evaluator { client, params }.evaluate(&EvalJob { observation: obs, kind, config: cfg, sample: 0 }).await
}

/// Evaluates every observation under every (kind, config) pair and sample.
/// Records come back ordered by kind, config, sample, then observation, no
/// matter which requests finish first. `window` bounds how many jobs are
/// driven at once; the client still bounds network requests in flight.
pub async fn evaluate_all(
    client: &InferenceClient,
    params: GenerationParams,
    observations: &[Observation],
    plan: &[(ExplanationKind, Vec<PromptConfig>)],
    samples: u32,
    window: usize,
) -> Vec<VerdictRecord> {
    let evaluator = Evaluator { client, params };
    let mut jobs = Vec::new();
    for (kind, configs) in plan {
        for cfg in configs {
            for sample in 0..samples.max(1) {
                for obs in observations {
                    jobs.push(EvalJob { observation: obs, kind: *kind, config: *cfg, sample });
                }
            }
        }
    }
    let total = jobs.len();
    let evaluator = &evaluator;
    let mut out = Vec::with_capacity(total);
    let mut stream = futures::stream::iter(jobs.into_iter().map(|job| async move { evaluator.evaluate(&job).await }))
        .buffered(window.max(1));
    while let Some(record) = stream.next().await {
        out.push(record);
        if out.len() % 500 == 0 {
            tracing::info!(done = out.len(), total, "evaluated");
        }
    }
    out
}
