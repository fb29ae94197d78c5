//! Evaluation guidelines: the curated default set and the learning phase that
//! grows a pool from agents' self-reported guidelines on a labeled dev set.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ask::{ask, Asked};
use crate::data::runlog::RunLogError;
use crate::data::sha8;
use crate::debate::{DebateEngine, DebateError, EngineOptions};
use crate::domain::{DebateConfig, EvaluationRecord};
use crate::gateway::{CompletionRequest, Gateway, GatewayError};
use crate::prompting::{parse_negated, render_negation, ParseFailure, PromptError};

const DEFAULT_GUIDELINES: &str = include_str!("../assets/guidelines_default.txt");

/// Records without a new guideline after which learning stops.
pub const DEFAULT_STAGNATION_WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum GuidelineError {
    #[error("the dev set is empty")]
    EmptyDevSet,
    #[error("dev record {0} has no gold label")]
    MissingGold(String),
    #[error("guideline text is empty")]
    EmptyGuideline,
    #[error("negation response unparseable: {0}")]
    Parse(#[from] ParseFailure),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Debate(#[from] DebateError),
    #[error("malformed guideline set: {0}")]
    Malformed(String),
    #[error(transparent)]
    RunLog(#[from] RunLogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Curated,
    LearnedPositive,
    LearnedNegated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guideline {
    pub text: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_run: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_record: Option<String>,
    /// Machine-negated entries stay flagged until a person checks them.
    #[serde(default)]
    pub needs_review: bool,
}

impl Guideline {
    pub fn curated(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            provenance: Provenance::Curated,
            source_run: None,
            source_record: None,
            needs_review: false,
        }
    }
}

/// Case-folded, whitespace-collapsed form used for uniqueness.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Ordered guideline pool; texts are unique after [`normalize`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineSet {
    pub version: String,
    entries: Vec<Guideline>,
}

impl GuidelineSet {
    pub fn new(version: impl Into<String>) -> Self {
        Self { version: version.into(), entries: Vec::new() }
    }

    pub fn entries(&self) -> &[Guideline] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, text: &str) -> bool {
        let n = normalize(text);
        self.entries.iter().any(|e| normalize(&e.text) == n)
    }

    /// Appends unless an equal text is present. Returns whether it was added.
    pub fn add(&mut self, entry: Guideline) -> bool {
        if entry.text.trim().is_empty() || self.contains(&entry.text) {
            return false;
        }
        self.entries.push(Guideline { text: entry.text.trim().to_string(), ..entry });
        true
    }

    /// "1. text" lines, as embedded in prompts.
    pub fn render_block(&self) -> String {
        self.entries.iter().enumerate().map(|(i, g)| format!("{}. {}", i + 1, g.text)).collect::<Vec<_>>().join("\n")
    }

    /// Plain text form: `# version:` header then one curated guideline per line.
    pub fn from_text(text: &str) -> Result<Self, GuidelineError> {
        let mut set = GuidelineSet::new("1");
        for line in text.lines() {
            let line = line.trim();
            if let Some(v) = line.strip_prefix("# version:") {
                set.version = v.trim().to_string();
            } else if !line.is_empty() && !line.starts_with('#') {
                set.add(Guideline::curated(line));
            }
        }
        if set.is_empty() {
            return Err(GuidelineError::Malformed("no guidelines found".into()));
        }
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("guideline set serializes")
    }

    /// Loads an exported set; duplicate texts are rejected.
    pub fn from_json(text: &str) -> Result<Self, GuidelineError> {
        let raw: GuidelineSet = serde_json::from_str(text).map_err(|e| GuidelineError::Malformed(e.to_string()))?;
        let mut set = GuidelineSet::new(raw.version.clone());
        for e in raw.entries {
            let t = e.text.clone();
            if !set.add(e) {
                return Err(GuidelineError::Malformed(format!("duplicate or empty guideline {t:?}")));
            }
        }
        Ok(set)
    }
}

/// The 13 curated guidelines, in prompt order.
pub fn default_guidelines() -> GuidelineSet {
    static CELL: OnceLock<GuidelineSet> = OnceLock::new();
    CELL.get_or_init(|| GuidelineSet::from_text(DEFAULT_GUIDELINES).expect("bundled guidelines parse")).clone()
}

/// Negated restatement of `text` from one model call.
pub fn negate_guideline(gateway: &Gateway, text: &str, options: &EngineOptions) -> Result<String, GuidelineError> {
    if text.trim().is_empty() {
        return Err(GuidelineError::EmptyGuideline);
    }
    let prompt = render_negation(text)?;
    let tag = format!("guidelines/negate/{}", sha8(&normalize(text)));
    let request = CompletionRequest::new(tag, prompt, options.decoding);
    match ask(gateway, &request, options.parse_retries, parse_negated)? {
        Asked::Parsed { value, .. } => Ok(value),
        Asked::Invalid { reason, .. } => Err(GuidelineError::Parse(ParseFailure { reason })),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningOptions {
    pub stagnation_window: usize,
}

impl Default for LearningOptions {
    fn default() -> Self {
        Self { stagnation_window: DEFAULT_STAGNATION_WINDOW }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningReport {
    pub set: GuidelineSet,
    pub records_processed: usize,
    /// Entries added while processing each record, in record order.
    pub additions: Vec<usize>,
    pub stopped_by_stagnation: bool,
}

/// Incremental learning over `dev`. Each record runs one debate session
/// (session 1) with the pool so far; agents whose final label matches gold
/// contribute their reported guidelines, agents that miss contribute negations.
pub fn learn_guidelines(
    gateway: &Gateway,
    dev: &[EvaluationRecord],
    config: &DebateConfig,
    engine_options: &EngineOptions,
    learning: &LearningOptions,
    initial: GuidelineSet,
    run_id: Option<&str>,
) -> Result<LearningReport, GuidelineError> {
    if dev.is_empty() {
        return Err(GuidelineError::EmptyDevSet);
    }
    if let Some(r) = dev.iter().find(|r| r.gold_label.is_none()) {
        return Err(GuidelineError::MissingGold(r.record_id.clone()));
    }
    let options = EngineOptions { learning_mode: true, ..*engine_options };
    let mut pool = initial;
    let mut negations: HashMap<String, String> = HashMap::new();
    let mut additions = Vec::new();
    let mut stagnant = 0usize;
    for record in dev {
        let gold = record.gold_label.expect("checked above");
        let engine = DebateEngine::new(gateway.clone(), pool.clone(), config.clone(), options)?;
        let transcript = engine.run_session(record, 1)?;
        let mut added = 0usize;
        for fin in &transcript.per_agent_final {
            let reported =
                transcript.final_argument(fin.agent_id).map(|a| a.reported_guidelines.clone()).unwrap_or_default();
            for text in reported {
                let entry = if fin.label == gold {
                    Guideline {
                        text,
                        provenance: Provenance::LearnedPositive,
                        source_run: run_id.map(str::to_string),
                        source_record: Some(record.record_id.clone()),
                        needs_review: false,
                    }
                } else {
                    let key = normalize(&text);
                    let negated = match negations.get(&key) {
                        Some(n) => n.clone(),
                        None => {
                            let n = negate_guideline(gateway, &text, &options)?;
                            negations.insert(key, n.clone());
                            n
                        }
                    };
                    Guideline {
                        text: negated,
                        provenance: Provenance::LearnedNegated,
                        source_run: run_id.map(str::to_string),
                        source_record: Some(record.record_id.clone()),
                        needs_review: true,
                    }
                };
                if pool.add(entry) {
                    added += 1;
                }
            }
        }
        gateway.runlog().append(
            &record.record_id,
            "guideline_learning",
            json!({ "added": added, "pool_size": pool.len() }),
        )?;
        additions.push(added);
        stagnant = if added == 0 { stagnant + 1 } else { 0 };
        if stagnant >= learning.stagnation_window {
            return Ok(LearningReport {
                set: pool,
                records_processed: additions.len(),
                additions,
                stopped_by_stagnation: true,
            });
        }
    }
    Ok(LearningReport { set: pool, records_processed: additions.len(), additions, stopped_by_stagnation: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackendSpec;

    #[test]
    fn defaults() {
        let g = default_guidelines();
        assert_eq!(g.len(), 13);
        assert!(g.entries()[0].text.starts_with("You should aim for accuracy and not comprehensiveness"));
        assert!(g.entries().iter().all(|e| e.provenance == Provenance::Curated));
        assert_eq!(g, default_guidelines());
        let mut g2 = g.clone();
        assert!(!g2.add(Guideline::curated(format!("  {}  ", g.entries()[0].text.to_uppercase()))));
        assert_eq!(g2.len(), 13);
    }

    #[test]
    fn json_round_trip_keeps_provenance() {
        let mut g = default_guidelines();
        g.add(Guideline {
            text: "New rule".into(),
            provenance: Provenance::LearnedNegated,
            source_run: Some("r".into()),
            source_record: None,
            needs_review: true,
        });
        assert_eq!(GuidelineSet::from_json(&g.to_json()).unwrap(), g);
    }

    #[test]
    fn negation_via_scripted_call() {
        let text = "Omissions make a summary inconsistent";
        let tag = format!("guidelines/negate/{}", sha8(&normalize(text)));
        let gw = Gateway::scripted(
            ScriptedBackendSpec::new()
                .tag(tag, vec!["<negated>Omissions do not make a summary inconsistent</negated>".into()]),
        );
        let n = negate_guideline(&gw, text, &EngineOptions::default()).unwrap();
        assert_eq!(n, "Omissions do not make a summary inconsistent");
        assert!(matches!(negate_guideline(&gw, " ", &EngineOptions::default()), Err(GuidelineError::EmptyGuideline)));
    }

    #[test]
    fn empty_dev_set_is_an_error() {
        let gw = Gateway::scripted(ScriptedBackendSpec::new());
        let r = learn_guidelines(
            &gw,
            &[],
            &DebateConfig::single(2, 1, 0).unwrap(),
            &EngineOptions::default(),
            &LearningOptions::default(),
            default_guidelines(),
            None,
        );
        assert!(matches!(r, Err(GuidelineError::EmptyDevSet)));
        assert!(gw.runlog().entries().unwrap().is_empty());
    }
}
