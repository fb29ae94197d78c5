//! Ambiguity detection: four detectors plus a seeded random baseline, and the
//! filter that drops ambiguous records before scoring.

pub mod taxonomy;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ask::{ask, Asked};
use crate::baselines::{sample_labels, BaselineError};
use crate::data::runlog::RunLogError;
use crate::debate::{EngineOptions, SessionTranscript};
use crate::domain::EvaluationRecord;
use crate::gateway::{CompletionRequest, Gateway, GatewayError};
use crate::guidelines::GuidelineSet;
use crate::prompting::{
    parse_ambiguity_verdict, render_prompt, ChatHistoryView, ParseFailure, PromptError, PromptExtras, PromptKind,
};
use crate::seeds;

pub use taxonomy::{AmbiguityTaxonomy, CoarseCategory, FineType, PromptEntry, TaxonomyType};

pub const DEFAULT_SC_QUERIES: u32 = 41;
pub const DEFAULT_THRESHOLD_PTS: f64 = 20.0;

#[derive(Debug, Error)]
pub enum AmbiguityError {
    #[error("record {record_id}: only {valid} of {n} samples parsed; the signal is degraded")]
    DegradedSignal { record_id: String, valid: u32, n: u32 },
    #[error("invalid detector parameter: {0}")]
    InvalidParameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("record {record_id}: {source}")]
    Parse {
        record_id: String,
        #[source]
        source: ParseFailure,
    },
    #[error("no ambiguity verdict for record {0}")]
    MissingVerdict(String),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    RunLog(#[from] RunLogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityMethod {
    SelfConsistencyVariation,
    ZeroShotTaxonomy,
    DebateDisagreement,
    DebateArguments,
    RandomBaseline,
}

/// Method-specific evidence; the variant fixes the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Evidence {
    SelfConsistencyVariation { faithful: u32, unfaithful: u32, invalid: u32, gap_pts: f64, threshold_pts: f64 },
    ZeroShotTaxonomy { cited_type: Option<FineType>, explanation: String },
    DebateDisagreement { session_id: u32, rounds: u32, consensus: bool, unchanged_agents: Vec<u32> },
    DebateArguments { session_id: u32, cited_type: Option<FineType>, explanation: String },
    RandomBaseline { seed: u64 },
}

impl Evidence {
    pub fn method(&self) -> AmbiguityMethod {
        match self {
            Evidence::SelfConsistencyVariation { .. } => AmbiguityMethod::SelfConsistencyVariation,
            Evidence::ZeroShotTaxonomy { .. } => AmbiguityMethod::ZeroShotTaxonomy,
            Evidence::DebateDisagreement { .. } => AmbiguityMethod::DebateDisagreement,
            Evidence::DebateArguments { .. } => AmbiguityMethod::DebateArguments,
            Evidence::RandomBaseline { .. } => AmbiguityMethod::RandomBaseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityVerdict {
    pub record_id: String,
    pub is_ambiguous: bool,
    pub evidence: Evidence,
}

impl AmbiguityVerdict {
    pub fn method(&self) -> AmbiguityMethod {
        self.evidence.method()
    }
}

/// Gap between the faithful and unfaithful shares, in percentage points of valid samples.
pub fn sc_gap_pts(faithful: u32, unfaithful: u32) -> f64 {
    let valid = faithful + unfaithful;
    if valid == 0 {
        return 0.0;
    }
    (faithful.abs_diff(unfaithful) as f64) * 100.0 / valid as f64
}

/// `gap < threshold`, evaluated as `|F-U| * 100 < threshold * valid` to avoid rounding.
pub fn sc_is_ambiguous(faithful: u32, unfaithful: u32, threshold_pts: f64) -> bool {
    let valid = (faithful + unfaithful) as f64;
    (faithful.abs_diff(unfaithful) as f64) * 100.0 < threshold_pts * valid
}

/// Samples `n_queries` faithfulness verdicts and calls the record ambiguous when
/// neither label dominates by `threshold_pts` points or more.
pub fn detect_self_consistency_variation(
    gateway: &Gateway,
    record: &EvaluationRecord,
    n_queries: u32,
    threshold_pts: f64,
    options: &EngineOptions,
) -> Result<AmbiguityVerdict, AmbiguityError> {
    if n_queries == 0 {
        return Err(AmbiguityError::InvalidParameter("n_queries must be at least 1".into()));
    }
    if !(0.0..=100.0).contains(&threshold_pts) {
        return Err(AmbiguityError::InvalidParameter(format!("threshold {threshold_pts} outside [0, 100]")));
    }
    let degraded = |valid| AmbiguityError::DegradedSignal { record_id: record.record_id.clone(), valid, n: n_queries };
    let outcome = match sample_labels(gateway, record, n_queries, "ambiguity/sc_variation", options) {
        Ok(o) => o,
        Err(BaselineError::AllSamplesInvalid { .. }) => return Err(degraded(0)),
        Err(e) => return Err(e.into()),
    };
    let (faithful, unfaithful) = outcome.tally;
    let valid = faithful + unfaithful;
    if valid * 2 < n_queries {
        return Err(degraded(valid));
    }
    let verdict = AmbiguityVerdict {
        record_id: record.record_id.clone(),
        is_ambiguous: sc_is_ambiguous(faithful, unfaithful, threshold_pts),
        evidence: Evidence::SelfConsistencyVariation {
            faithful,
            unfaithful,
            invalid: outcome.invalid_samples,
            gap_pts: sc_gap_pts(faithful, unfaithful),
            threshold_pts,
        },
    };
    log_verdict(gateway, &verdict)?;
    Ok(verdict)
}

fn judge(
    gateway: &Gateway,
    record: &EvaluationRecord,
    prompt: String,
    tag_suffix: &str,
    taxonomy: &AmbiguityTaxonomy,
    options: &EngineOptions,
) -> Result<crate::prompting::ParsedAmbiguity, AmbiguityError> {
    let request = CompletionRequest::new(format!("{}/{tag_suffix}", record.record_id), prompt, options.decoding);
    match ask(gateway, &request, options.parse_retries, |t| parse_ambiguity_verdict(t, taxonomy))? {
        Asked::Parsed { value, .. } => Ok(value),
        Asked::Invalid { reason, .. } => {
            Err(AmbiguityError::Parse { record_id: record.record_id.clone(), source: ParseFailure { reason } })
        }
    }
}

/// One call with the taxonomy prompt.
pub fn detect_zero_shot_taxonomy(
    gateway: &Gateway,
    record: &EvaluationRecord,
    taxonomy: &AmbiguityTaxonomy,
    options: &EngineOptions,
) -> Result<AmbiguityVerdict, AmbiguityError> {
    let prompt = render_prompt(
        PromptKind::AmbiguityZeroShot,
        record,
        &GuidelineSet::new("none"),
        None,
        Some(taxonomy),
        &PromptExtras::default(),
    )?;
    let parsed = judge(gateway, record, prompt, "ambiguity/zero_shot", taxonomy, options)?;
    let verdict = AmbiguityVerdict {
        record_id: record.record_id.clone(),
        is_ambiguous: parsed.is_ambiguous,
        evidence: Evidence::ZeroShotTaxonomy { cited_type: parsed.cited_type, explanation: parsed.explanation },
    };
    log_verdict(gateway, &verdict)?;
    Ok(verdict)
}

/// Agents whose final label equals their imposed stance.
fn unchanged_agents(t: &SessionTranscript) -> Vec<u32> {
    t.stances
        .iter()
        .filter(|s| t.per_agent_final.iter().any(|f| f.agent_id == s.agent_id && f.label == s.label))
        .map(|s| s.agent_id)
        .collect()
}

/// Ambiguous iff the session ran all rounds without consensus and every agent
/// ended on its imposed stance. Makes no model calls.
pub fn detect_debate_disagreement(transcript: &SessionTranscript) -> Result<AmbiguityVerdict, AmbiguityError> {
    if transcript.rounds.is_empty() {
        return Err(AmbiguityError::Precondition("transcript has no completed round".into()));
    }
    let unchanged = unchanged_agents(transcript);
    let consensus = transcript.outcome.is_consensus();
    let is_ambiguous = !consensus && transcript.reached_max_rounds() && unchanged.len() == transcript.stances.len();
    Ok(AmbiguityVerdict {
        record_id: transcript.record_id.clone(),
        is_ambiguous,
        evidence: Evidence::DebateDisagreement {
            session_id: transcript.session_id,
            rounds: transcript.rounds.len() as u32,
            consensus,
            unchanged_agents: unchanged,
        },
    })
}

/// Judge call over every debate round of `transcript` (stances excluded), the
/// taxonomy and the guidelines.
pub fn detect_with_debate_arguments(
    gateway: &Gateway,
    record: &EvaluationRecord,
    transcript: &SessionTranscript,
    taxonomy: &AmbiguityTaxonomy,
    guidelines: &GuidelineSet,
    options: &EngineOptions,
) -> Result<AmbiguityVerdict, AmbiguityError> {
    if transcript.rounds.iter().all(|r| r.is_empty()) {
        return Err(AmbiguityError::Precondition("transcript holds no debate arguments".into()));
    }
    if transcript.record_id != record.record_id {
        return Err(AmbiguityError::Precondition(format!(
            "transcript of {} given for record {}",
            transcript.record_id, record.record_id
        )));
    }
    let history = ChatHistoryView::rounds(transcript.rounds.clone())?;
    let prompt = render_prompt(
        PromptKind::AmbiguityWithArguments,
        record,
        guidelines,
        Some(&history),
        Some(taxonomy),
        &PromptExtras::default(),
    )?;
    let parsed = judge(gateway, record, prompt, "ambiguity/arguments", taxonomy, options)?;
    let verdict = AmbiguityVerdict {
        record_id: record.record_id.clone(),
        is_ambiguous: parsed.is_ambiguous,
        evidence: Evidence::DebateArguments {
            session_id: transcript.session_id,
            cited_type: parsed.cited_type,
            explanation: parsed.explanation,
        },
    };
    log_verdict(gateway, &verdict)?;
    Ok(verdict)
}

/// Seeded fair coin per record.
pub fn random_baseline(record: &EvaluationRecord, seed: u64) -> AmbiguityVerdict {
    let s = seeds::derive(seed, &[seeds::STREAM_COIN, seeds::hash_str(&record.record_id)]);
    AmbiguityVerdict {
        record_id: record.record_id.clone(),
        is_ambiguous: seeds::rng(s).random_bool(0.5),
        evidence: Evidence::RandomBaseline { seed },
    }
}

fn log_verdict(gateway: &Gateway, verdict: &AmbiguityVerdict) -> Result<(), RunLogError> {
    gateway.runlog().append(&verdict.record_id, "ambiguity", json!({ "verdict": verdict }))
}

/// Where ambiguity decisions come from when filtering.
#[derive(Debug, Clone, Copy)]
pub enum VerdictSource<'a> {
    /// Each record's `gold_ambiguity` annotation.
    Gold,
    /// Detector output keyed by record id.
    Verdicts(&'a HashMap<String, bool>),
}

impl VerdictSource<'_> {
    pub fn is_ambiguous(&self, record: &EvaluationRecord) -> Result<bool, AmbiguityError> {
        match self {
            VerdictSource::Gold => record.gold_ambiguity.as_ref().map(|a| a.is_ambiguous),
            VerdictSource::Verdicts(map) => map.get(&record.record_id).copied(),
        }
        .ok_or_else(|| AmbiguityError::MissingVerdict(record.record_id.clone()))
    }
}

/// Splits records into (kept = not ambiguous, removed = ambiguous), preserving order.
pub fn filter_ambiguous(
    records: &[EvaluationRecord],
    source: VerdictSource<'_>,
) -> Result<(Vec<EvaluationRecord>, Vec<EvaluationRecord>), AmbiguityError> {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for r in records {
        if source.is_ambiguous(r)? {
            removed.push(r.clone());
        } else {
            kept.push(r.clone());
        }
    }
    Ok((kept, removed))
}
