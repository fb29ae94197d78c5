//! Single-model evaluators: zero-shot, chain-of-thought and self-consistency.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ask::{ask, Asked};
use crate::data::runlog::RunLogError;
use crate::debate::{majority_vote, EngineOptions};
use crate::domain::{EvaluationRecord, FaithfulnessLabel};
use crate::exec::map_ordered;
use crate::gateway::{CompletionRequest, Gateway, GatewayError};
use crate::guidelines::GuidelineSet;
use crate::prompting::{
    parse_verdict, render_prompt, ParseFailure, ParsedVerdict, PromptError, PromptExtras, PromptKind,
};

/// Sample count used when none is given.
pub const DEFAULT_SC_SAMPLES: u32 = 40;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("record {record_id}: {source}")]
    Parse {
        record_id: String,
        #[source]
        source: ParseFailure,
    },
    #[error("record {record_id}: all {n} self-consistency samples were unparseable")]
    AllSamplesInvalid { record_id: String, n: u32 },
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    RunLog(#[from] RunLogError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfConsistencyOutcome {
    /// Valid sample labels in sample order.
    pub samples: Vec<FaithfulnessLabel>,
    pub invalid_samples: u32,
    pub majority: FaithfulnessLabel,
    /// (faithful, unfaithful) over valid samples.
    pub tally: (u32, u32),
    pub tie_broken: bool,
}

impl SelfConsistencyOutcome {
    /// Share of Faithful among valid samples.
    pub fn ratio_faithful(&self) -> f64 {
        self.tally.0 as f64 / self.samples.len() as f64
    }

    pub fn from_samples(samples: Vec<FaithfulnessLabel>, invalid_samples: u32) -> Self {
        let (majority, tally, tie_broken) = majority_vote(&samples);
        Self { samples, invalid_samples, majority, tally, tie_broken }
    }
}

fn single_call(
    gateway: &Gateway,
    record: &EvaluationRecord,
    kind: PromptKind,
    tag_suffix: &str,
    options: &EngineOptions,
) -> Result<ParsedVerdict, BaselineError> {
    let prompt = render_prompt(kind, record, &GuidelineSet::new("none"), None, None, &PromptExtras::default())?;
    let request = CompletionRequest::new(format!("{}/{tag_suffix}", record.record_id), prompt, options.decoding);
    let verdict = match ask(gateway, &request, options.parse_retries, parse_verdict)? {
        Asked::Parsed { value, .. } => value,
        Asked::Invalid { reason, .. } => {
            return Err(BaselineError::Parse { record_id: record.record_id.clone(), source: ParseFailure { reason } })
        }
    };
    gateway.runlog().append(&record.record_id, tag_suffix, json!({ "verdict": verdict }))?;
    Ok(verdict)
}

pub fn zero_shot(
    gateway: &Gateway,
    record: &EvaluationRecord,
    options: &EngineOptions,
) -> Result<ParsedVerdict, BaselineError> {
    single_call(gateway, record, PromptKind::ZeroShot, "zero_shot", options)
}

/// Like [`zero_shot`] with the step-by-step prompt; `thinking` is `None` when the tag is absent.
pub fn chain_of_thought(
    gateway: &Gateway,
    record: &EvaluationRecord,
    options: &EngineOptions,
) -> Result<ParsedVerdict, BaselineError> {
    single_call(gateway, record, PromptKind::ChainOfThought, "cot", options)
}

/// `n_samples` sampled chain-of-thought calls, majority-voted.
pub fn self_consistency(
    gateway: &Gateway,
    record: &EvaluationRecord,
    n_samples: u32,
    options: &EngineOptions,
) -> Result<SelfConsistencyOutcome, BaselineError> {
    let out = sample_labels(gateway, record, n_samples, "self_consistency", options)?;
    gateway.runlog().append(&record.record_id, "self_consistency", json!({ "outcome": out }))?;
    Ok(out)
}

/// Shared sampler; tags are `{record}/{prefix}/sample{i}` with 1-based `i`.
pub(crate) fn sample_labels(
    gateway: &Gateway,
    record: &EvaluationRecord,
    n_samples: u32,
    prefix: &str,
    options: &EngineOptions,
) -> Result<SelfConsistencyOutcome, BaselineError> {
    if n_samples == 0 {
        return Err(BaselineError::NoSamples);
    }
    let prompt = render_prompt(
        PromptKind::ChainOfThought,
        record,
        &GuidelineSet::new("none"),
        None,
        None,
        &PromptExtras::default(),
    )?;
    let ids: Vec<u32> = (1..=n_samples).collect();
    let threads = if options.parallel { ids.len() } else { 1 };
    let results = map_ordered(&ids, threads, |_, i| {
        let request = CompletionRequest::new(
            format!("{}/{prefix}/sample{i}", record.record_id),
            prompt.clone(),
            options.decoding,
        );
        ask(gateway, &request, options.parse_retries, parse_verdict).map(|a| a.ok().map(|v| v.label))
    });
    let mut samples = Vec::new();
    let mut invalid = 0;
    for r in results {
        match r? {
            Some(l) => samples.push(l),
            None => invalid += 1,
        }
    }
    if samples.is_empty() {
        return Err(BaselineError::AllSamplesInvalid { record_id: record.record_id.clone(), n: n_samples });
    }
    Ok(SelfConsistencyOutcome::from_samples(samples, invalid))
}
