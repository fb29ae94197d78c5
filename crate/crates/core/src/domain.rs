//! Core vocabulary shared by every module: labels, records, arguments and
//! debate configuration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambiguity::taxonomy::{CoarseCategory, FineType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("invalid wire label {0}: expected 0 or 1")]
    InvalidWireLabel(i64),
    #[error("invalid record {record_id}: {reason}")]
    InvalidRecord { record_id: String, reason: String },
    #[error("invalid ambiguity annotation: {0}")]
    InvalidAnnotation(String),
    #[error("invalid debate config: {0}")]
    InvalidConfig(String),
}

/// Binary faithfulness verdict. Agents never abstain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaithfulnessLabel {
    Faithful,
    Unfaithful,
}

impl FaithfulnessLabel {
    pub const ALL: [FaithfulnessLabel; 2] = [FaithfulnessLabel::Faithful, FaithfulnessLabel::Unfaithful];

    /// The sentence an agent holds as its imposed initial stance.
    pub fn stance_sentence(self) -> &'static str {
        match self {
            FaithfulnessLabel::Faithful => "The summary is faithful",
            FaithfulnessLabel::Unfaithful => "The summary is unfaithful",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            FaithfulnessLabel::Faithful => FaithfulnessLabel::Unfaithful,
            FaithfulnessLabel::Unfaithful => FaithfulnessLabel::Faithful,
        }
    }

    /// True when the label marks a faithfulness error (the positive class in metrics).
    pub fn is_error(self) -> bool {
        self == FaithfulnessLabel::Unfaithful
    }
}

impl fmt::Display for FaithfulnessLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaithfulnessLabel::Faithful => f.write_str("faithful"),
            FaithfulnessLabel::Unfaithful => f.write_str("unfaithful"),
        }
    }
}

/// Faithful → 1, Unfaithful → 0, matching the prompts' "1 (consistent) / 0 (inconsistent)".
pub fn label_to_wire(label: FaithfulnessLabel) -> u8 {
    match label {
        FaithfulnessLabel::Faithful => 1,
        FaithfulnessLabel::Unfaithful => 0,
    }
}

pub fn wire_to_label(value: i64) -> Result<FaithfulnessLabel, DomainError> {
    match value {
        1 => Ok(FaithfulnessLabel::Faithful),
        0 => Ok(FaithfulnessLabel::Unfaithful),
        other => Err(DomainError::InvalidWireLabel(other)),
    }
}

/// Serde adapter storing a label as its 0/1 wire integer.
pub mod wire_label {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &FaithfulnessLabel, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(label_to_wire(*label))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FaithfulnessLabel, D::Error> {
        let v = i64::deserialize(d)?;
        wire_to_label(v).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(label: &Option<FaithfulnessLabel>, s: S) -> Result<S::Ok, S::Error> {
            match label {
                Some(l) => s.serialize_some(&label_to_wire(*l)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<FaithfulnessLabel>, D::Error> {
            match Option::<i64>::deserialize(d)? {
                Some(v) => wire_to_label(v).map(Some).map_err(serde::de::Error::custom),
                None => Ok(None),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    FullSummary,
    Sentence,
}

/// Human ambiguity judgment attached to a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityAnnotation {
    pub is_ambiguous: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse: Option<CoarseCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine: Option<FineType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl AmbiguityAnnotation {
    pub fn non_ambiguous() -> Self {
        Self { is_ambiguous: false, coarse: None, fine: None, note: None }
    }

    /// Ambiguous annotation with the coarse category implied by `fine`.
    pub fn ambiguous(fine: Option<FineType>) -> Self {
        Self { is_ambiguous: true, coarse: fine.map(FineType::parent), fine, note: None }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if !self.is_ambiguous && (self.coarse.is_some() || self.fine.is_some()) {
            return Err(DomainError::InvalidAnnotation(
                "coarse/fine category given for a non-ambiguous annotation".into(),
            ));
        }
        if let (Some(coarse), Some(fine)) = (self.coarse, self.fine) {
            if fine.parent() != coarse {
                return Err(DomainError::InvalidAnnotation(format!(
                    "fine type {fine:?} belongs to {:?}, not {coarse:?}",
                    fine.parent()
                )));
            }
        }
        Ok(())
    }
}

/// One document/summary unit to be judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub record_id: String,
    #[serde(default)]
    pub dataset: String,
    pub document: String,
    pub summary: String,
    #[serde(default)]
    pub granularity: Granularity,
    /// 0-based index of the sentence inside its summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_index: Option<u32>,
    /// Stored as the 0/1 wire value.
    #[serde(default, with = "wire_label::option", skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<FaithfulnessLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_ambiguity: Option<AmbiguityAnnotation>,
}

impl EvaluationRecord {
    /// Full-summary record without gold annotations.
    pub fn new(record_id: impl Into<String>, document: impl Into<String>, summary: impl Into<String>) -> Self {
        Self {
            record_id: record_id.into(),
            dataset: String::new(),
            document: document.into(),
            summary: summary.into(),
            granularity: Granularity::FullSummary,
            sentence_index: None,
            gold_label: None,
            gold_ambiguity: None,
        }
    }

    pub fn with_gold(mut self, label: FaithfulnessLabel) -> Self {
        self.gold_label = Some(label);
        self
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let bad =
            |reason: &str| DomainError::InvalidRecord { record_id: self.record_id.clone(), reason: reason.to_string() };
        if self.record_id.trim().is_empty() {
            return Err(bad("empty record_id"));
        }
        if self.document.trim().is_empty() {
            return Err(bad("empty document"));
        }
        if self.summary.trim().is_empty() {
            return Err(bad("empty summary"));
        }
        match (self.granularity, self.sentence_index) {
            (Granularity::Sentence, None) => return Err(bad("sentence record without sentence_index")),
            (Granularity::FullSummary, Some(_)) => return Err(bad("full-summary record with a sentence_index")),
            _ => {}
        }
        if let Some(a) = &self.gold_ambiguity {
            a.validate()?;
        }
        Ok(())
    }
}

/// One agent utterance: an explanation and a label at a given round.
///
/// Round 0 holds the imposed initial stance, which carries no explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argument {
    pub agent_id: u32,
    pub round: u32,
    pub label: FaithfulnessLabel,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinking: Option<String>,
    pub imposed: bool,
    /// Guidelines the agent reported relying on (guideline learning only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reported_guidelines: Vec<String>,
}

impl Argument {
    pub fn stance(agent_id: u32, label: FaithfulnessLabel) -> Self {
        Self {
            agent_id,
            round: 0,
            label,
            explanation: String::new(),
            thinking: None,
            imposed: true,
            reported_guidelines: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Majority over the session outcome labels.
    DebateVote,
    /// Majority over every agent's final label across sessions.
    AgentVote,
    SingleSession,
}

/// Debate shape and seeding. Defaults: 4 agents split 2+2, 3 rounds,
/// 3 adjudicators, 3 simultaneous sessions aggregated by debate vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateConfig {
    pub num_agents: u32,
    /// (agents starting Faithful, agents starting Unfaithful)
    pub stance_split: (u32, u32),
    pub max_rounds: u32,
    pub num_adjudicators: u32,
    pub num_sessions: u32,
    pub aggregation: Aggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention_round: Option<u32>,
    pub master_seed: u64,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self {
            num_agents: 4,
            stance_split: (2, 2),
            max_rounds: 3,
            num_adjudicators: 3,
            num_sessions: 3,
            aggregation: Aggregation::DebateVote,
            intervention_round: Some(3),
            master_seed: 0,
        }
    }
}

impl DebateConfig {
    /// Uniform split of `num_agents`; odd counts have no uniform split and are rejected.
    pub fn uniform_split(num_agents: u32) -> Result<(u32, u32), DomainError> {
        if !num_agents.is_multiple_of(2) {
            return Err(DomainError::InvalidConfig(format!(
                "uniform stance split is undefined for {num_agents} agents; give an explicit split"
            )));
        }
        Ok((num_agents / 2, num_agents / 2))
    }

    /// Single-session config with a uniform split.
    pub fn single(num_agents: u32, max_rounds: u32, master_seed: u64) -> Result<Self, DomainError> {
        let cfg = Self {
            num_agents,
            stance_split: Self::uniform_split(num_agents)?,
            max_rounds,
            num_adjudicators: 3,
            num_sessions: 1,
            aggregation: Aggregation::SingleSession,
            intervention_round: None,
            master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let err = |m: String| Err(DomainError::InvalidConfig(m));
        if self.num_agents < 2 {
            return err(format!("need at least 2 agents, got {}", self.num_agents));
        }
        if self.stance_split.0 + self.stance_split.1 != self.num_agents {
            return err(format!(
                "stance split {}+{} does not sum to {} agents",
                self.stance_split.0, self.stance_split.1, self.num_agents
            ));
        }
        if self.max_rounds < 1 {
            return err("max_rounds must be at least 1".into());
        }
        if self.num_adjudicators < 1 || self.num_adjudicators.is_multiple_of(2) {
            return err(format!("num_adjudicators must be odd, got {}", self.num_adjudicators));
        }
        if self.num_sessions < 1 {
            return err("num_sessions must be at least 1".into());
        }
        match self.aggregation {
            Aggregation::SingleSession if self.num_sessions != 1 => {
                return err(format!("single-session aggregation with {} sessions", self.num_sessions))
            }
            Aggregation::DebateVote | Aggregation::AgentVote if self.num_sessions < 2 => {
                return err("vote aggregation needs at least 2 sessions".into())
            }
            Aggregation::DebateVote if self.num_sessions.is_multiple_of(2) => {
                return err(format!("debate vote needs an odd session count, got {}", self.num_sessions))
            }
            _ => {}
        }
        if let Some(r) = self.intervention_round {
            if r < 2 || r > self.max_rounds {
                return err(format!("intervention_round {r} outside [2, {}]", self.max_rounds));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_encoding() {
        assert_eq!(label_to_wire(FaithfulnessLabel::Faithful), 1);
        assert_eq!(label_to_wire(FaithfulnessLabel::Unfaithful), 0);
        assert_eq!(wire_to_label(1).unwrap(), FaithfulnessLabel::Faithful);
        assert_eq!(wire_to_label(0).unwrap(), FaithfulnessLabel::Unfaithful);
        assert_eq!(wire_to_label(2), Err(DomainError::InvalidWireLabel(2)));
        assert_eq!(wire_to_label(-1), Err(DomainError::InvalidWireLabel(-1)));
        for l in FaithfulnessLabel::ALL {
            assert_eq!(wire_to_label(label_to_wire(l) as i64).unwrap(), l);
        }
    }

    #[test]
    fn stance_argument_is_imposed_round_zero() {
        let a = Argument::stance(3, FaithfulnessLabel::Unfaithful);
        assert!(a.imposed);
        assert_eq!(a.round, 0);
        assert!(a.explanation.is_empty());
        assert!(a.thinking.is_none());
    }

    #[test]
    fn record_invariants() {
        let mut r = EvaluationRecord::new("r1", "doc", "sum");
        assert!(r.validate().is_ok());
        r.granularity = Granularity::Sentence;
        assert!(r.validate().is_err());
        r.sentence_index = Some(0);
        assert!(r.validate().is_ok());
        r.summary = "  ".into();
        assert!(r.validate().is_err());
    }

    #[test]
    fn annotation_parent_must_match() {
        let mut a = AmbiguityAnnotation::ambiguous(Some(FineType::Vagueness));
        assert_eq!(a.coarse, Some(CoarseCategory::Meaning));
        assert!(a.validate().is_ok());
        a.coarse = Some(CoarseCategory::Context);
        assert!(a.validate().is_err());
        let mut n = AmbiguityAnnotation::non_ambiguous();
        n.fine = Some(FineType::Conflation);
        assert!(n.validate().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DebateConfig::default().validate().is_ok());
        let c = DebateConfig { num_adjudicators: 2, ..DebateConfig::default() };
        assert!(c.validate().is_err());
        let mut c = DebateConfig { num_sessions: 2, ..DebateConfig::default() };
        assert!(c.validate().is_err());
        c.aggregation = Aggregation::AgentVote;
        assert!(c.validate().is_ok());
        let mut c = DebateConfig { stance_split: (3, 2), ..DebateConfig::default() };
        assert!(c.validate().is_err());
        c.num_agents = 5;
        assert!(c.validate().is_ok());
        assert!(DebateConfig::uniform_split(5).is_err());
        assert_eq!(DebateConfig::uniform_split(6).unwrap(), (3, 3));
        let mut c = DebateConfig { intervention_round: Some(1), ..DebateConfig::default() };
        assert!(c.validate().is_err());
        c.intervention_round = Some(4);
        assert!(c.validate().is_err());
    }
}
