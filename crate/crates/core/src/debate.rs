//! Stance-initialized multi-round debate with adjudication and simultaneous sessions.
//!
//! Session flow: imposed stances (round 0) → rounds 1..=n, stopping at the first
//! round whose valid labels all agree → otherwise k adjudicators vote over the
//! final-round arguments. Agents in round j see rounds before j only; round 1
//! shows the imposed stances, later rounds never do.
//!
//! Every random choice is seeded from the session seed, which derives from
//! (master seed, record id, session index). Results are collected in agent and
//! session order, so serial and parallel execution give identical transcripts.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ask::{ask, Asked, DEFAULT_PARSE_RETRIES};
use crate::data::runlog::RunLogError;
use crate::domain::{Aggregation, Argument, DebateConfig, DomainError, EvaluationRecord, FaithfulnessLabel};
use crate::exec::map_ordered;
use crate::gateway::{CompletionRequest, Decoding, Gateway, GatewayError};
use crate::guidelines::GuidelineSet;
use crate::prompting::{
    parse_argument, parse_verdict, render_prompt, ChatHistoryView, ParsedVerdict, PromptError, PromptExtras, PromptKind,
};
use crate::seeds;

#[derive(Debug, Error)]
pub enum DebateError {
    #[error(transparent)]
    InvalidConfig(#[from] DomainError),
    #[error("stance split {faithful}+{unfaithful} does not sum to {num_agents} agents")]
    InvalidSplit { faithful: u32, unfaithful: u32, num_agents: u32 },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("record {record_id} session {session}: every agent response in round {round} was unparseable")]
    AllAgentsInvalid { record_id: String, session: u32, round: u32 },
    #[error("record {record_id} session {session}: no adjudicator verdict could be parsed")]
    AllAdjudicatorsInvalid { record_id: String, session: u32 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    RunLog(#[from] RunLogError),
}

/// Binary majority. Ties (including no voters) go to Unfaithful with `tie_broken = true`.
pub fn majority_vote(labels: &[FaithfulnessLabel]) -> (FaithfulnessLabel, (u32, u32), bool) {
    let f = labels.iter().filter(|l| **l == FaithfulnessLabel::Faithful).count() as u32;
    let u = labels.len() as u32 - f;
    match f.cmp(&u) {
        std::cmp::Ordering::Greater => (FaithfulnessLabel::Faithful, (f, u), false),
        std::cmp::Ordering::Less => (FaithfulnessLabel::Unfaithful, (f, u), false),
        std::cmp::Ordering::Equal => (FaithfulnessLabel::Unfaithful, (f, u), true),
    }
}

/// Common label iff every valid argument carries it.
pub fn check_consensus(round_args: &[Argument]) -> Option<FaithfulnessLabel> {
    let first = round_args.first()?.label;
    round_args.iter().all(|a| a.label == first).then_some(first)
}

/// Round-0 stances: `stance_split.0` Faithful and `stance_split.1` Unfaithful,
/// assigned to agent ids 1..=n by a seeded permutation. Sorted by agent id.
pub fn assign_stances(config: &DebateConfig, session_seed: u64) -> Result<Vec<Argument>, DebateError> {
    let (faithful, unfaithful) = config.stance_split;
    if faithful + unfaithful != config.num_agents {
        return Err(DebateError::InvalidSplit { faithful, unfaithful, num_agents: config.num_agents });
    }
    let mut labels: Vec<FaithfulnessLabel> = std::iter::repeat_n(FaithfulnessLabel::Faithful, faithful as usize)
        .chain(std::iter::repeat_n(FaithfulnessLabel::Unfaithful, unfaithful as usize))
        .collect();
    labels.shuffle(&mut seeds::rng(seeds::derive(session_seed, &[seeds::STREAM_STANCE])));
    Ok(labels.into_iter().enumerate().map(|(i, l)| Argument::stance(i as u32 + 1, l)).collect())
}

/// True when round `round` runs with the openness instruction. Callers only
/// reach round `round` when no earlier round reached consensus.
pub fn intervention_applies(config: &DebateConfig, round: u32) -> bool {
    config.intervention_round.is_some_and(|r| round >= r)
}

/// Adds the openness instruction to an evaluator prompt context.
pub fn apply_intervention(extras: PromptExtras) -> PromptExtras {
    PromptExtras { intervention: true, ..extras }
}

fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut seeds::rng(seed));
    v
}

/// An agent or adjudicator response that stayed unparseable after re-asks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidResponse {
    pub agent_id: u32,
    pub round: u32,
    pub reason: String,
    pub raw_responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicatorVote {
    pub adjudicator: u32,
    /// Agent ids in the order this adjudicator saw the final-round arguments.
    pub order: Vec<u32>,
    pub label: Option<FaithfulnessLabel>,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionOutcome {
    Consensus {
        label: FaithfulnessLabel,
        at_round: u32,
    },
    Adjudicated {
        label: FaithfulnessLabel,
        explanation: String,
        votes: Vec<AdjudicatorVote>,
        tally: (u32, u32),
        tie_broken: bool,
    },
}

impl SessionOutcome {
    pub fn label(&self) -> FaithfulnessLabel {
        match self {
            SessionOutcome::Consensus { label, .. } | SessionOutcome::Adjudicated { label, .. } => *label,
        }
    }

    pub fn is_consensus(&self) -> bool {
        matches!(self, SessionOutcome::Consensus { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentFinal {
    pub agent_id: u32,
    pub label: FaithfulnessLabel,
}

/// Full record of one debate session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub record_id: String,
    pub session_id: u32,
    pub session_seed: u64,
    pub config_snapshot: DebateConfig,
    pub stances: Vec<Argument>,
    /// Valid arguments per round, sorted by agent id.
    pub rounds: Vec<Vec<Argument>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invalid: Vec<InvalidResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention_from: Option<u32>,
    pub outcome: SessionOutcome,
    pub per_agent_final: Vec<AgentFinal>,
    /// Some agent or adjudicator response was excluded as unparseable.
    pub degraded: bool,
}

impl SessionTranscript {
    pub fn stance_of(&self, agent_id: u32) -> Option<FaithfulnessLabel> {
        self.stances.iter().find(|a| a.agent_id == agent_id).map(|a| a.label)
    }

    pub fn reached_max_rounds(&self) -> bool {
        self.rounds.len() as u32 >= self.config_snapshot.max_rounds
    }

    /// Last valid argument of an agent.
    pub fn final_argument(&self, agent_id: u32) -> Option<&Argument> {
        self.rounds.iter().rev().flat_map(|r| r.iter()).find(|a| a.agent_id == agent_id)
    }
}

/// Finals taken from each agent's last valid round; agents never valid are omitted.
pub fn per_agent_final(num_agents: u32, rounds: &[Vec<Argument>]) -> Vec<AgentFinal> {
    (1..=num_agents)
        .filter_map(|agent_id| {
            rounds
                .iter()
                .rev()
                .flat_map(|r| r.iter())
                .find(|a| a.agent_id == agent_id)
                .map(|a| AgentFinal { agent_id, label: a.label })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: u32,
    pub label: FaithfulnessLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_round: Option<u32>,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateOutcome {
    pub record_id: String,
    pub final_label: FaithfulnessLabel,
    pub mode: Aggregation,
    pub session_outcomes: Vec<SessionSummary>,
    /// (faithful votes, unfaithful votes)
    pub vote_tally: (u32, u32),
    pub tie_broken: bool,
    pub degraded: bool,
}

/// Aggregates finished sessions per `mode`.
pub fn aggregate(record_id: &str, mode: Aggregation, transcripts: &[SessionTranscript]) -> AggregateOutcome {
    let labels: Vec<FaithfulnessLabel> = match mode {
        Aggregation::DebateVote | Aggregation::SingleSession => transcripts.iter().map(|t| t.outcome.label()).collect(),
        Aggregation::AgentVote => transcripts.iter().flat_map(|t| t.per_agent_final.iter().map(|f| f.label)).collect(),
    };
    let (final_label, vote_tally, tie_broken) = majority_vote(&labels);
    AggregateOutcome {
        record_id: record_id.to_string(),
        final_label,
        mode,
        session_outcomes: transcripts
            .iter()
            .map(|t| SessionSummary {
                session_id: t.session_id,
                label: t.outcome.label(),
                consensus_round: match t.outcome {
                    SessionOutcome::Consensus { at_round, .. } => Some(at_round),
                    SessionOutcome::Adjudicated { .. } => None,
                },
                degraded: t.degraded,
            })
            .collect(),
        vote_tally,
        tie_broken,
        degraded: transcripts.iter().any(|t| t.degraded),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateRun {
    pub outcome: AggregateOutcome,
    pub transcripts: Vec<SessionTranscript>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub decoding: Decoding,
    pub parse_retries: u32,
    /// Run sessions and the agents of a round on separate threads.
    pub parallel: bool,
    /// Ask agents to list the guidelines they used.
    pub learning_mode: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            decoding: Decoding::default(),
            parse_retries: DEFAULT_PARSE_RETRIES,
            parallel: true,
            learning_mode: false,
        }
    }
}

/// Debate progress before the outcome is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub record_id: String,
    pub session_id: u32,
    pub session_seed: u64,
    pub stances: Vec<Argument>,
    pub rounds: Vec<Vec<Argument>>,
    pub invalid: Vec<InvalidResponse>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundResult {
    pub arguments: Vec<Argument>,
    pub invalid: Vec<InvalidResponse>,
}

#[derive(Debug, Clone)]
pub struct DebateEngine {
    gateway: Gateway,
    guidelines: GuidelineSet,
    config: DebateConfig,
    options: EngineOptions,
}

impl DebateEngine {
    pub fn new(
        gateway: Gateway,
        guidelines: GuidelineSet,
        config: DebateConfig,
        options: EngineOptions,
    ) -> Result<Self, DebateError> {
        config.validate()?;
        Ok(Self { gateway, guidelines, config, options })
    }

    pub fn config(&self) -> &DebateConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn threads(&self, n: usize) -> usize {
        if self.options.parallel {
            n
        } else {
            1
        }
    }

    /// Runs the agents of round `round` over the state so far.
    pub fn run_round(
        &self,
        record: &EvaluationRecord,
        state: &SessionState,
        round: u32,
    ) -> Result<RoundResult, DebateError> {
        if round < 1 || round > self.config.max_rounds || state.rounds.len() as u32 != round - 1 {
            return Err(DebateError::Precondition(format!(
                "round {round} requested with {} completed rounds (max {})",
                state.rounds.len(),
                self.config.max_rounds
            )));
        }
        let intervention = intervention_applies(&self.config, round);
        let agents: Vec<&Argument> = state.stances.iter().collect();
        let results = map_ordered(&agents, self.threads(agents.len()), |_, stance| {
            self.agent_turn(record, state, round, stance, intervention)
        });
        let mut arguments = Vec::new();
        let mut invalid = Vec::new();
        for r in results {
            match r? {
                Ok(a) => arguments.push(a),
                Err(bad) => invalid.push(bad),
            }
        }
        Ok(RoundResult { arguments, invalid })
    }

    fn agent_turn(
        &self,
        record: &EvaluationRecord,
        state: &SessionState,
        round: u32,
        stance: &Argument,
        intervention: bool,
    ) -> Result<Result<Argument, InvalidResponse>, DebateError> {
        let agent_id = stance.agent_id;
        let hseed = |r: u32| {
            seeds::derive(state.session_seed, &[seeds::STREAM_HISTORY, round as u64, agent_id as u64, r as u64])
        };
        let mut extras = PromptExtras { learning_request: self.options.learning_mode, ..Default::default() };
        if intervention {
            extras = apply_intervention(extras);
        }
        let (kind, history) = if round == 1 {
            extras.own_stance = Some(stance.label);
            (PromptKind::EvaluatorRound1, ChatHistoryView::stances(shuffled(&state.stances, hseed(0)))?)
        } else {
            let blocks = state.rounds.iter().enumerate().map(|(i, r)| shuffled(r, hseed(i as u32 + 1))).collect();
            (PromptKind::EvaluatorLater, ChatHistoryView::rounds(blocks)?)
        };
        let prompt = render_prompt(kind, record, &self.guidelines, Some(&history), None, &extras)?;
        let tag = format!("{}/session{}/agent{}/round{}", record.record_id, state.session_id, agent_id, round);
        let request = CompletionRequest::new(tag, prompt, self.options.decoding);
        Ok(match ask(&self.gateway, &request, self.options.parse_retries, |t| parse_argument(t, agent_id, round))? {
            Asked::Parsed { value, .. } => Ok(value),
            Asked::Invalid { raws, reason } => Err(InvalidResponse { agent_id, round, reason, raw_responses: raws }),
        })
    }

    /// Majority verdict of k adjudicators over the final-round arguments, each
    /// seeing its own seeded order. The explanation is drawn from a
    /// majority-side response.
    pub fn adjudicate(
        &self,
        record: &EvaluationRecord,
        state: &SessionState,
    ) -> Result<(SessionOutcome, Vec<InvalidResponse>), DebateError> {
        let final_round = state
            .rounds
            .last()
            .filter(|r| !r.is_empty())
            .ok_or_else(|| DebateError::Precondition("adjudication needs a completed round".into()))?;
        let k = self.config.num_adjudicators;
        let ids: Vec<u32> = (1..=k).collect();
        let results = map_ordered(&ids, self.threads(ids.len()), |_, &a| {
            let order =
                shuffled(final_round, seeds::derive(state.session_seed, &[seeds::STREAM_ADJUDICATOR, a as u64]));
            let history = ChatHistoryView::rounds(vec![order.clone()])?;
            let prompt = render_prompt(
                PromptKind::Adjudicator,
                record,
                &self.guidelines,
                Some(&history),
                None,
                &PromptExtras::default(),
            )?;
            let tag = format!("{}/session{}/adjudicator{}", record.record_id, state.session_id, a);
            let request = CompletionRequest::new(tag, prompt, self.options.decoding);
            let asked = ask(&self.gateway, &request, self.options.parse_retries, parse_verdict)?;
            Ok::<_, DebateError>((a, order.iter().map(|x| x.agent_id).collect::<Vec<_>>(), asked))
        });
        let mut votes = Vec::new();
        let mut invalid = Vec::new();
        let mut verdicts: Vec<(u32, ParsedVerdict)> = Vec::new();
        for r in results {
            let (a, order, asked) = r?;
            match asked {
                Asked::Parsed { value, .. } => {
                    votes.push(AdjudicatorVote {
                        adjudicator: a,
                        order,
                        label: Some(value.label),
                        explanation: value.explanation.clone(),
                    });
                    verdicts.push((a, value));
                }
                Asked::Invalid { raws, reason } => {
                    votes.push(AdjudicatorVote { adjudicator: a, order, label: None, explanation: String::new() });
                    invalid.push(InvalidResponse {
                        agent_id: a,
                        round: state.rounds.len() as u32,
                        reason,
                        raw_responses: raws,
                    });
                }
            }
        }
        if verdicts.is_empty() {
            return Err(DebateError::AllAdjudicatorsInvalid {
                record_id: record.record_id.clone(),
                session: state.session_id,
            });
        }
        let labels: Vec<FaithfulnessLabel> = verdicts.iter().map(|(_, v)| v.label).collect();
        let (label, tally, tie_broken) = majority_vote(&labels);
        let pool: Vec<&ParsedVerdict> = verdicts.iter().map(|(_, v)| v).filter(|v| v.label == label).collect();
        let explanation = if pool.is_empty() {
            String::new()
        } else {
            let mut rng = seeds::rng(seeds::derive(state.session_seed, &[seeds::STREAM_PICK]));
            pool[rng.random_range(0..pool.len())].explanation.clone()
        };
        Ok((SessionOutcome::Adjudicated { label, explanation, votes, tally, tie_broken }, invalid))
    }

    /// One full session with the seed of `session_id` (1-based).
    pub fn run_session(&self, record: &EvaluationRecord, session_id: u32) -> Result<SessionTranscript, DebateError> {
        let seed = seeds::session_seed(self.config.master_seed, &record.record_id, session_id);
        self.run_session_seeded(record, session_id, seed)
    }

    pub fn run_session_seeded(
        &self,
        record: &EvaluationRecord,
        session_id: u32,
        session_seed: u64,
    ) -> Result<SessionTranscript, DebateError> {
        let mut state = SessionState {
            record_id: record.record_id.clone(),
            session_id,
            session_seed,
            stances: assign_stances(&self.config, session_seed)?,
            rounds: Vec::new(),
            invalid: Vec::new(),
        };
        let mut outcome = None;
        let mut intervention_from = None;
        for round in 1..=self.config.max_rounds {
            if intervention_applies(&self.config, round) && intervention_from.is_none() {
                intervention_from = Some(round);
            }
            let result = self.run_round(record, &state, round)?;
            state.invalid.extend(result.invalid);
            if result.arguments.is_empty() {
                return Err(DebateError::AllAgentsInvalid {
                    record_id: record.record_id.clone(),
                    session: session_id,
                    round,
                });
            }
            let consensus = check_consensus(&result.arguments);
            state.rounds.push(result.arguments);
            if let Some(label) = consensus {
                outcome = Some(SessionOutcome::Consensus { label, at_round: round });
                break;
            }
        }
        let outcome = match outcome {
            Some(o) => o,
            None => {
                let (o, bad) = self.adjudicate(record, &state)?;
                state.invalid.extend(bad);
                o
            }
        };
        let transcript = SessionTranscript {
            record_id: state.record_id,
            session_id,
            session_seed,
            config_snapshot: self.config.clone(),
            per_agent_final: per_agent_final(self.config.num_agents, &state.rounds),
            degraded: !state.invalid.is_empty(),
            stances: state.stances,
            rounds: state.rounds,
            invalid: state.invalid,
            intervention_from,
            outcome,
        };
        self.gateway.runlog().append(
            &record.record_id,
            "debate_session",
            json!({ "session_id": session_id, "session_seed": session_seed, "transcript": transcript }),
        )?;
        Ok(transcript)
    }

    /// m independent sessions aggregated per the configured mode. Any failed
    /// session fails the whole record.
    pub fn run_simultaneous(&self, record: &EvaluationRecord) -> Result<DebateRun, DebateError> {
        record.validate()?;
        let ids: Vec<u32> = (1..=self.config.num_sessions).collect();
        let transcripts = map_ordered(&ids, self.threads(ids.len()), |_, &s| self.run_session(record, s))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let outcome = aggregate(&record.record_id, self.config.aggregation, &transcripts);
        self.gateway.runlog().append(&record.record_id, "debate_aggregate", json!({ "outcome": outcome }))?;
        Ok(DebateRun { outcome, transcripts })
    }
}
