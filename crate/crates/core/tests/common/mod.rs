//! Scripted scenarios, fixtures and brute-force oracles shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use std::path::PathBuf;

use faithdebate::data::runlog::RunLogEntry;
use faithdebate::debate::{
    assign_stances, AdjudicatorVote, DebateEngine, DebateRun, EngineOptions, SessionOutcome, SessionTranscript,
};
use faithdebate::domain::{label_to_wire, Aggregation, DebateConfig, EvaluationRecord, FaithfulnessLabel};
use faithdebate::gateway::{Gateway, ScriptedBackendSpec};
use faithdebate::guidelines::{default_guidelines, GuidelineSet};
use faithdebate::prompting::INTERVENTION_TEXT;
use faithdebate::seeds;

pub use FaithfulnessLabel::{Faithful as F, Unfaithful as U};

/// One scripted agent or adjudicator turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    Says(FaithfulnessLabel),
    /// Unparseable on every ask.
    Junk,
}

pub const JUNK: &str = "I would rather not say.";

pub fn resp(label: FaithfulnessLabel, why: &str) -> String {
    format!("<thinking>checked</thinking><label>{}</label><explanation>{why}</explanation>", label_to_wire(label))
}

/// Responses for one turn: a single parseable answer, or enough junk to exhaust every re-ask.
pub fn turn_responses(t: Turn, why: &str, parse_retries: u32) -> Vec<String> {
    match t {
        Turn::Says(l) => vec![resp(l, why)],
        Turn::Junk => vec![JUNK.to_string(); parse_retries as usize + 1],
    }
}

/// Adds `matrix[round][agent]` for one session (rounds and agents 1-based in tags).
pub fn script_session(
    mut spec: ScriptedBackendSpec,
    record_id: &str,
    session: u32,
    matrix: &[Vec<Turn>],
    adjudicators: &[Turn],
) -> ScriptedBackendSpec {
    for (r, row) in matrix.iter().enumerate() {
        for (a, t) in row.iter().enumerate() {
            let tag = format!("{record_id}/session{session}/agent{}/round{}", a + 1, r + 1);
            let why = format!("s{session} a{} r{}", a + 1, r + 1);
            spec = spec.tag(tag, turn_responses(*t, &why, 2));
        }
    }
    for (j, t) in adjudicators.iter().enumerate() {
        let tag = format!("{record_id}/session{session}/adjudicator{}", j + 1);
        spec = spec.tag(tag, turn_responses(*t, &format!("judge {}", j + 1), 2));
    }
    spec
}

pub fn says(labels: &[FaithfulnessLabel]) -> Vec<Turn> {
    labels.iter().map(|l| Turn::Says(*l)).collect()
}

pub fn record(id: &str) -> EvaluationRecord {
    EvaluationRecord::new(
        id,
        "The council approved the budget on Tuesday after a two hour debate.",
        "The council approved the budget on Monday.",
    )
}

type Check = fn(&DebateRun, &[RunLogEntry]) -> Result<(), String>;

pub struct Scenario {
    pub name: &'static str,
    pub config: DebateConfig,
    pub record: EvaluationRecord,
    pub spec: ScriptedBackendSpec,
    pub check: Check,
}

impl Scenario {
    pub fn run(&self, parallel: bool) -> Result<(DebateRun, Vec<RunLogEntry>), String> {
        let options = EngineOptions { parallel, ..EngineOptions::default() };
        let engine =
            DebateEngine::new(Gateway::scripted(self.spec.clone()), default_guidelines(), self.config.clone(), options)
                .map_err(|e| e.to_string())?;
        let run = engine.run_simultaneous(&self.record).map_err(|e| e.to_string())?;
        let log = engine.gateway().runlog().entries().map_err(|e| e.to_string())?;
        Ok((run, log))
    }

    pub fn golden_path(&self) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{}.json", self.name))
    }
}

/// Canonical serialized form compared across runs.
pub fn canonical(run: &DebateRun) -> String {
    serde_json::to_string_pretty(run).expect("serializable") + "\n"
}

fn single(agents: u32, rounds: u32, seed: u64) -> DebateConfig {
    DebateConfig::single(agents, rounds, seed).expect("valid config")
}

fn only(run: &DebateRun) -> &SessionTranscript {
    &run.transcripts[0]
}

fn expect(cond: bool, what: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.to_string())
    }
}

fn prompts_with_intervention(log: &[RunLogEntry], round: u32) -> (usize, usize) {
    let suffix = format!("/round{round}");
    let prompts: Vec<&str> = log
        .iter()
        .filter(|e| e.payload["tag"].as_str().is_some_and(|t| t.ends_with(&suffix)))
        .filter_map(|e| e.payload["prompt"].as_str())
        .collect();
    (prompts.iter().filter(|p| p.contains(INTERVENTION_TEXT.trim())).count(), prompts.len())
}

/// Every agent repeats its imposed stance for every round.
fn stubborn(config: &DebateConfig, record_id: &str, session: u32) -> Vec<Vec<Turn>> {
    let seed = seeds::session_seed(config.master_seed, record_id, session);
    let stances = assign_stances(config, seed).expect("valid split");
    let row: Vec<Turn> = stances.iter().map(|s| Turn::Says(s.label)).collect();
    vec![row; config.max_rounds as usize]
}

/// The orchestration fixtures. Each check states what the scenario is for.
pub fn scenarios() -> Vec<Scenario> {
    let mut out = Vec::new();

    out.push(Scenario {
        name: "consensus_round1",
        config: single(4, 3, 11),
        record: record("g-r1"),
        spec: script_session(ScriptedBackendSpec::new(), "g-r1", 1, &[says(&[F, F, F, F])], &[]),
        check: |run, log| {
            let t = only(run);
            expect(t.outcome == SessionOutcome::Consensus { label: F, at_round: 1 }, "consensus F at round 1")?;
            expect(t.rounds.len() == 1 && !t.degraded, "one clean round")?;
            expect(!log.iter().any(|e| e.payload["tag"].as_str().is_some_and(|t| t.contains("round2"))), "no round 2")
        },
    });

    out.push(Scenario {
        name: "consensus_round2",
        config: single(4, 3, 12),
        record: record("g-r2"),
        spec: script_session(ScriptedBackendSpec::new(), "g-r2", 1, &[says(&[F, U, F, U]), says(&[U, U, U, U])], &[]),
        check: |run, _| {
            let t = only(run);
            expect(t.outcome == SessionOutcome::Consensus { label: U, at_round: 2 }, "consensus U at round 2")?;
            expect(run.outcome.final_label == U, "final U")
        },
    });

    let mut c = single(4, 3, 13);
    c.intervention_round = Some(3);
    out.push(Scenario {
        name: "consensus_round3",
        config: c,
        record: record("g-r3"),
        spec: script_session(
            ScriptedBackendSpec::new(),
            "g-r3",
            1,
            &[says(&[F, U, F, U]), says(&[F, U, U, U]), says(&[F, F, F, F])],
            &[],
        ),
        check: |run, _| {
            let t = only(run);
            expect(t.outcome == SessionOutcome::Consensus { label: F, at_round: 3 }, "consensus F at round 3")?;
            expect(t.intervention_from == Some(3), "intervention recorded from round 3")
        },
    });

    out.push(Scenario {
        name: "adjudication",
        config: single(4, 3, 14),
        record: record("g-adj"),
        spec: script_session(
            ScriptedBackendSpec::new(),
            "g-adj",
            1,
            &[says(&[F, U, F, U]), says(&[F, U, F, U]), says(&[F, U, U, F])],
            &says(&[U, F, U]),
        ),
        check: |run, _| {
            let t = only(run);
            let SessionOutcome::Adjudicated { label, tally, tie_broken, votes, explanation } = &t.outcome else {
                return Err("expected adjudication".into());
            };
            expect(*label == U && *tally == (1, 2) && !tie_broken, "adjudicators 2:1 for U")?;
            expect(votes.len() == 3 && votes.iter().all(|v| v.order.len() == 4), "three votes over four arguments")?;
            expect(explanation == "judge 1" || explanation == "judge 3", "explanation from the majority side")?;
            expect(t.rounds.len() == 3, "all rounds ran")
        },
    });

    let mut c = single(4, 3, 15);
    c.intervention_round = Some(2);
    out.push(Scenario {
        name: "intervention_firing",
        config: c,
        record: record("g-int"),
        spec: script_session(
            ScriptedBackendSpec::new(),
            "g-int",
            1,
            &[says(&[F, U, F, U]), says(&[F, U, F, U]), says(&[F, F, F, U])],
            &says(&[F, F, U]),
        ),
        check: |run, log| {
            let t = only(run);
            expect(t.intervention_from == Some(2), "intervention from round 2")?;
            expect(prompts_with_intervention(log, 1) == (0, 4), "round 1 prompts lack the intervention")?;
            expect(prompts_with_intervention(log, 2) == (4, 4), "round 2 prompts carry it")?;
            expect(prompts_with_intervention(log, 3) == (4, 4), "round 3 prompts carry it")?;
            expect(t.outcome.label() == F, "adjudicated F")
        },
    });

    out.push(Scenario {
        name: "parse_failure_degradation",
        config: single(4, 3, 16),
        record: record("g-bad"),
        spec: script_session(
            ScriptedBackendSpec::new(),
            "g-bad",
            1,
            &[vec![Turn::Says(U), Turn::Says(U), Turn::Junk, Turn::Says(U)]],
            &[],
        ),
        check: |run, _| {
            let t = only(run);
            expect(t.outcome == SessionOutcome::Consensus { label: U, at_round: 1 }, "valid agents agree")?;
            expect(t.degraded && run.outcome.degraded, "degraded flagged")?;
            expect(t.invalid.len() == 1 && t.invalid[0].agent_id == 3, "agent 3 excluded")?;
            expect(t.invalid[0].raw_responses.len() == 3, "asked three times")?;
            expect(t.per_agent_final.len() == 3, "no final for agent 3")
        },
    });

    let c = single(4, 2, 17);
    let m = stubborn(&c, "g-22", 1);
    out.push(Scenario {
        name: "stance_split_2_2",
        config: c,
        record: record("g-22"),
        spec: script_session(ScriptedBackendSpec::new(), "g-22", 1, &m, &says(&[U, U, F])),
        check: |run, _| {
            let t = only(run);
            let f = t.stances.iter().filter(|s| s.label == F).count();
            expect(t.stances.len() == 4 && f == 2, "2 faithful + 2 unfaithful stances")?;
            expect(t.per_agent_final.iter().all(|a| t.stance_of(a.agent_id) == Some(a.label)), "nobody moved")?;
            expect(!t.outcome.is_consensus() && t.reached_max_rounds(), "ran to adjudication")
        },
    });

    let mut c = single(4, 2, 18);
    c.num_agents = 5;
    c.stance_split = (2, 3);
    let m = stubborn(&c, "g-23", 1);
    out.push(Scenario {
        name: "stance_split_2_3",
        config: c,
        record: record("g-23"),
        spec: script_session(ScriptedBackendSpec::new(), "g-23", 1, &m, &says(&[U, F, U])),
        check: |run, _| {
            let t = only(run);
            let f = t.stances.iter().filter(|s| s.label == F).count();
            expect(t.stances.len() == 5 && f == 2, "2 faithful + 3 unfaithful stances")?;
            expect(t.rounds.iter().all(|r| r.len() == 5), "five arguments per round")?;
            expect(t.outcome.label() == U, "adjudicated U")
        },
    });

    for (name, mode) in
        [("three_sessions_debate_vote", Aggregation::DebateVote), ("three_sessions_agent_vote", Aggregation::AgentVote)]
    {
        let config = DebateConfig {
            num_agents: 4,
            stance_split: (2, 2),
            max_rounds: 1,
            num_adjudicators: 3,
            num_sessions: 3,
            aggregation: mode,
            intervention_round: None,
            master_seed: 19,
        };
        let mut spec = ScriptedBackendSpec::new();
        spec = script_session(spec, "g-m3", 1, &[says(&[F, F, F, F])], &[]);
        spec = script_session(spec, "g-m3", 2, &[says(&[U, U, U, U])], &[]);
        spec = script_session(spec, "g-m3", 3, &[says(&[F, F, U, U])], &says(&[F, F, U]));
        out.push(Scenario {
            name,
            config,
            record: record("g-m3"),
            spec,
            check: |run, _| {
                let o = &run.outcome;
                let labels: Vec<_> = o.session_outcomes.iter().map(|s| s.label).collect();
                expect(labels == [F, U, F], "session labels F, U, F")?;
                match o.mode {
                    // 2 of 3 sessions say Faithful.
                    Aggregation::DebateVote => {
                        expect(o.final_label == F && o.vote_tally == (2, 1) && !o.tie_broken, "debate vote F 2:1")
                    }
                    // 4 + 0 + 2 faithful finals against 0 + 4 + 2: a tie.
                    _ => expect(o.final_label == U && o.vote_tally == (6, 6) && o.tie_broken, "agent vote tie to U"),
                }
            },
        });
    }

    out
}

/// Scenario result compared across repeats, execution modes and the golden file.
pub fn check_scenario(s: &Scenario, repeats: usize) -> Result<(), String> {
    let (first, log) = s.run(true)?;
    (s.check)(&first, &log).map_err(|e| format!("{}: {e}", s.name))?;
    let want = canonical(&first);
    for i in 0..repeats {
        for parallel in [true, false] {
            let (run, _) = s.run(parallel)?;
            if canonical(&run) != want {
                return Err(format!("{}: repeat {i} (parallel={parallel}) differs", s.name));
            }
        }
    }
    let path = s.golden_path();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, &want).map_err(|e| e.to_string())?;
    }
    let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if golden != want {
        return Err(format!("{}: differs from {}", s.name, path.display()));
    }
    Ok(())
}

/// First round at which all valid labels agree, or `None` after `rounds`; `Err` when a round has no valid label.
pub fn consensus_oracle(matrix: &[Vec<Turn>]) -> Result<Option<(usize, FaithfulnessLabel)>, usize> {
    for (r, row) in matrix.iter().enumerate() {
        let valid: Vec<FaithfulnessLabel> =
            row.iter().filter_map(|t| if let Turn::Says(l) = t { Some(*l) } else { None }).collect();
        if valid.is_empty() {
            return Err(r + 1);
        }
        let faithful = valid.iter().filter(|l| **l == F).count();
        if faithful == valid.len() {
            return Ok(Some((r + 1, F)));
        }
        if faithful == 0 {
            return Ok(Some((r + 1, U)));
        }
    }
    Ok(None)
}

/// Counted majority with ties to Unfaithful: (label, (faithful, unfaithful), tie).
pub fn count_vote(labels: impl IntoIterator<Item = FaithfulnessLabel>) -> (FaithfulnessLabel, (u32, u32), bool) {
    let (mut f, mut u) = (0u32, 0u32);
    for l in labels {
        if l == F {
            f += 1;
        } else {
            u += 1;
        }
    }
    if f > u {
        (F, (f, u), false)
    } else if u > f {
        (U, (f, u), false)
    } else {
        (U, (f, u), true)
    }
}

/// Labels of the parsed adjudicator votes.
pub fn vote_labels(votes: &[AdjudicatorVote]) -> Vec<FaithfulnessLabel> {
    votes.iter().filter_map(|v| v.label).collect()
}

/// Dev set, script and expected result of the guideline-learning fixture.
pub struct LearningFixture {
    pub dev: Vec<EvaluationRecord>,
    pub config: DebateConfig,
    pub spec: ScriptedBackendSpec,
    /// Learned texts appended after the curated set, in order.
    pub expected_added: Vec<&'static str>,
    pub expected_additions: Vec<usize>,
}

fn with_used(label: FaithfulnessLabel, used: &[&str]) -> String {
    format!(
        "{}<guidelines_used>\n{}\n</guidelines_used>",
        resp(label, "x"),
        used.iter().map(|u| format!("- {u}")).collect::<Vec<_>>().join("\n")
    )
}

/// Two agents, one round per record. Hand simulation:
/// * d1 (gold U): agent 1 says U citing A, B; agent 2 says F citing C.
///   Adds A, B and the negation of C. Disagreement goes to the judges.
/// * d2 (gold F): both say F citing A (known) and D. Adds D.
/// * d3 (gold F): both say U citing C. Adds the negation of C once; it is
///   already in the pool, so nothing is added.
/// * d4 (gold U): both say U citing nothing. Adds nothing.
pub fn learning_fixture() -> LearningFixture {
    let dev: Vec<EvaluationRecord> =
        [("d1", U), ("d2", F), ("d3", F), ("d4", U)].iter().map(|(id, g)| record(id).with_gold(*g)).collect();
    let a = "Check every date against the document.";
    let b = "Numbers must match the document exactly.";
    let c = "Omitted details make a summary unfaithful.";
    let d = "Paraphrases that keep the meaning are acceptable.";
    let tag = |id: &str, agent: u32| format!("{id}/session1/agent{agent}/round1");
    let spec = ScriptedBackendSpec::new()
        .tag(tag("d1", 1), vec![with_used(U, &[a, b])])
        .tag(tag("d1", 2), vec![with_used(F, &[c])])
        .tag(tag("d2", 1), vec![with_used(F, &[a, d])])
        .tag(tag("d2", 2), vec![with_used(F, &[d])])
        .tag(tag("d3", 1), vec![with_used(U, &[c])])
        .tag(tag("d3", 2), vec![with_used(U, &[c])])
        .tag(tag("d4", 1), vec![resp(U, "x")])
        .tag(tag("d4", 2), vec![resp(U, "x")])
        .pattern("*/adjudicator*", vec![resp(U, "judge")])
        .contains(c, vec!["<negated>Omitted details do not make a summary unfaithful.</negated>".into()]);
    LearningFixture {
        dev,
        config: DebateConfig::single(2, 1, 7).expect("valid"),
        spec,
        expected_added: vec![a, b, "Omitted details do not make a summary unfaithful.", d],
        expected_additions: vec![3, 1, 0, 0],
    }
}

/// Curated set followed by the fixture's expected additions.
pub fn expected_learned_texts(f: &LearningFixture) -> Vec<String> {
    let base: GuidelineSet = default_guidelines();
    base.entries().iter().map(|g| g.text.clone()).chain(f.expected_added.iter().map(|s| s.to_string())).collect()
}
