use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::Evaluator;
use super::{
    build_backend, load_guidelines, load_records, make_gateway, run_batch, CliError, ConfigSnapshot, RunConfig,
    RunContext, RunOutput,
};
use crate::ambiguity::{
    detect_debate_disagreement, detect_self_consistency_variation, detect_with_debate_arguments,
    detect_zero_shot_taxonomy, random_baseline, AmbiguityMethod, AmbiguityTaxonomy, AmbiguityVerdict, VerdictSource,
};
use crate::baselines::{chain_of_thought, self_consistency, zero_shot};
use crate::data::runlog::{RunLogEntry, CONFIG_FILE, LOG_FILE};
use crate::debate::{DebateEngine, DebateRun, SessionTranscript};
use crate::domain::{wire_label, AmbiguityAnnotation, EvaluationRecord, FaithfulnessLabel, Granularity};
use crate::gateway::ScriptedBackendSpec;
use crate::guidelines::{learn_guidelines, LearningOptions};
use crate::metrics::{filtered_report, render_table, report_flags, MetricReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub record_id: String,
    pub error: String,
}

/// One line of `predictions.jsonl`. Labels use the 0/1 wire form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub record_id: String,
    pub dataset: String,
    pub granularity: Granularity,
    pub evaluator: Evaluator,
    #[serde(with = "wire_label")]
    pub label: FaithfulnessLabel,
    #[serde(default, with = "wire_label::option", skip_serializing_if = "Option::is_none")]
    pub gold: Option<FaithfulnessLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_ambiguous: Option<bool>,
    pub degraded: bool,
    pub tie_broken: bool,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

impl Prediction {
    fn new(r: &EvaluationRecord, evaluator: Evaluator, label: FaithfulnessLabel) -> Self {
        Self {
            record_id: r.record_id.clone(),
            dataset: r.dataset.clone(),
            granularity: r.granularity,
            evaluator,
            label,
            gold: r.gold_label,
            gold_ambiguous: r.gold_ambiguity.as_ref().map(|a| a.is_ambiguous),
            degraded: false,
            tie_broken: false,
            detail: Value::Null,
        }
    }

    /// Stand-in record carrying only what scoring needs.
    fn as_record(&self) -> EvaluationRecord {
        let mut r = EvaluationRecord::new(self.record_id.clone(), "", "");
        r.dataset = self.dataset.clone();
        r.granularity = self.granularity;
        r.gold_label = self.gold;
        r.gold_ambiguity = self.gold_ambiguous.map(|a| {
            if a {
                AmbiguityAnnotation::ambiguous(None)
            } else {
                AmbiguityAnnotation::non_ambiguous()
            }
        });
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SideMetrics {
    Report(MetricReport),
    Error { error: String },
}

impl SideMetrics {
    fn from_result<E: ToString>(r: Result<MetricReport, E>) -> Self {
        match r {
            Ok(m) => SideMetrics::Report(m),
            Err(e) => SideMetrics::Error { error: e.to_string() },
        }
    }

    fn as_row(&self) -> Result<&MetricReport, String> {
        match self {
            SideMetrics::Report(m) => Ok(m),
            SideMetrics::Error { error } => Err(error.clone()),
        }
    }
}

/// Metrics of one `dataset/granularity` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub set: String,
    pub unfiltered: SideMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtered: Option<SideMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed: Option<usize>,
}

/// Scores predictions with gold labels per `dataset/granularity`. Filtering uses
/// `verdicts` when given, otherwise gold annotations when every record has one.
pub fn compute_metrics(predictions: &[Prediction], verdicts: Option<&HashMap<String, bool>>) -> Vec<SetMetrics> {
    let mut groups: BTreeMap<String, Vec<&Prediction>> = BTreeMap::new();
    for p in predictions.iter().filter(|p| p.gold.is_some()) {
        let g = match p.granularity {
            Granularity::Sentence => "sentence",
            Granularity::FullSummary => "summary",
        };
        groups.entry(format!("{}/{g}", p.dataset)).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|(set, preds)| {
            let records: Vec<EvaluationRecord> = preds.iter().map(|p| p.as_record()).collect();
            let labels: HashMap<String, FaithfulnessLabel> =
                preds.iter().map(|p| (p.record_id.clone(), p.label)).collect();
            let source = match verdicts {
                Some(v) => Some(VerdictSource::Verdicts(v)),
                None if records.iter().all(|r| r.gold_ambiguity.is_some()) => Some(VerdictSource::Gold),
                None => None,
            };
            match source.map(|s| filtered_report(&records, &labels, s)) {
                Some(Ok(r)) => SetMetrics {
                    set,
                    unfiltered: SideMetrics::from_result(r.unfiltered),
                    filtered: Some(SideMetrics::from_result(r.filtered)),
                    removed: Some(r.removed),
                },
                Some(Err(e)) => SetMetrics {
                    set,
                    unfiltered: unfiltered(&preds),
                    filtered: Some(SideMetrics::Error { error: e.to_string() }),
                    removed: None,
                },
                None => SetMetrics { set, unfiltered: unfiltered(&preds), filtered: None, removed: None },
            }
        })
        .collect()
}

fn unfiltered(preds: &[&Prediction]) -> SideMetrics {
    let p: Vec<_> = preds.iter().map(|p| p.label).collect();
    let g: Vec<_> = preds.iter().map(|p| p.gold.expect("filtered on gold")).collect();
    SideMetrics::from_result(crate::metrics::report(&p, &g))
}

fn metrics_table(sets: &[SetMetrics]) -> String {
    let mut rows = Vec::new();
    for s in sets {
        rows.push((s.set.clone(), s.unfiltered.as_row()));
        if let Some(f) = &s.filtered {
            rows.push((format!("{} filtered", s.set), f.as_row()));
        }
    }
    render_table(&rows)
}

fn write_metrics<T: Serialize>(ctx: &RunContext, value: &T, table: &str) -> Result<(), CliError> {
    ctx.write("metrics.json", &format!("{}\n", serde_json::to_string_pretty(value).expect("json")))?;
    ctx.write("metrics.txt", table)
}

pub(super) fn evaluate(
    mut cfg: RunConfig,
    script: Option<ScriptedBackendSpec>,
    replay_of: Option<&str>,
) -> Result<RunOutput, CliError> {
    let replaying = script.is_some();
    cfg.validate(!replaying)?;
    let backend = build_backend(&cfg, script)?;
    let records = load_records(&cfg)?;
    let guidelines = load_guidelines(&cfg)?;
    let debate_cfg = cfg.debate_config()?;
    let ctx = RunContext::create(&mut cfg, "evaluate", replay_of)?;
    ctx.guard(|| {
        let gateway = make_gateway(&cfg, backend, ctx.log.clone(), replaying);
        let opts = cfg.engine_options();
        let engine = DebateEngine::new(gateway.clone(), guidelines, debate_cfg, opts)?;
        let evaluator = cfg.evaluator;
        let (results, failures) = run_batch(&records, cfg.records_in_flight, cfg.fail_fast, &ctx.log, |r| {
            Ok(match evaluator {
                Evaluator::Debate => {
                    let run = engine.run_simultaneous(r)?;
                    let o = &run.outcome;
                    let mut p = Prediction::new(r, evaluator, o.final_label);
                    p.degraded = o.degraded;
                    p.tie_broken = o.tie_broken;
                    p.detail = json!({ "vote_tally": o.vote_tally });
                    (p, Some(run))
                }
                Evaluator::ZeroShot => {
                    let v = zero_shot(&gateway, r, &opts)?;
                    let mut p = Prediction::new(r, evaluator, v.label);
                    p.detail = json!({ "explanation": v.explanation });
                    (p, None)
                }
                Evaluator::Cot => {
                    let v = chain_of_thought(&gateway, r, &opts)?;
                    let mut p = Prediction::new(r, evaluator, v.label);
                    p.detail = json!({ "explanation": v.explanation, "thinking": v.thinking });
                    (p, None)
                }
                Evaluator::SelfConsistency => {
                    let o = self_consistency(&gateway, r, cfg.baselines.sc_samples, &opts)?;
                    let mut p = Prediction::new(r, evaluator, o.majority);
                    p.degraded = o.invalid_samples > 0;
                    p.tie_broken = o.tie_broken;
                    p.detail = json!({ "tally": o.tally, "invalid_samples": o.invalid_samples });
                    (p, None)
                }
            })
        });
        let (predictions, runs): (Vec<Prediction>, Vec<Option<DebateRun>>) = results.into_iter().flatten().unzip();
        ctx.write_jsonl("predictions.jsonl", &predictions)?;
        if evaluator == Evaluator::Debate {
            ctx.write_jsonl("transcripts.jsonl", &runs.into_iter().flatten().collect::<Vec<_>>())?;
        }
        let sets = compute_metrics(&predictions, None);
        if !sets.is_empty() {
            write_metrics(&ctx, &sets, &metrics_table(&sets))?;
        }
        Ok(RunOutput { dir: ctx.dir.clone(), failures, total: records.len() })
    })
}

/// Session-1 transcripts keyed by record, from lines holding either a debate run or a single transcript.
fn read_transcripts(path: &Path) -> Result<HashMap<String, SessionTranscript>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad =
            |e: serde_json::Error| CliError::Io { path: path.to_path_buf(), message: format!("line {}: {e}", i + 1) };
        let v: Value = serde_json::from_str(line).map_err(bad)?;
        let transcript = if v.get("transcripts").is_some() {
            let run: DebateRun = serde_json::from_value(v).map_err(bad)?;
            let mut ts = run.transcripts;
            let pos = ts.iter().position(|t| t.session_id == 1).unwrap_or(0);
            if ts.is_empty() {
                continue;
            }
            ts.swap_remove(pos)
        } else {
            serde_json::from_value::<SessionTranscript>(v).map_err(bad)?
        };
        out.insert(transcript.record_id.clone(), transcript);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct AmbiguityMetrics {
    method: AmbiguityMethod,
    verdicts: usize,
    ambiguous: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    detector: Option<SideMetrics>,
}

pub(super) fn ambiguity(
    mut cfg: RunConfig,
    script: Option<ScriptedBackendSpec>,
    replay_of: Option<&str>,
) -> Result<RunOutput, CliError> {
    let replaying = script.is_some();
    let needs_model = cfg.ambiguity_needs_model();
    cfg.validate(needs_model && !replaying)?;
    let backend = if needs_model { Some(build_backend(&cfg, script)?) } else { None };
    let records = load_records(&cfg)?;
    let guidelines = load_guidelines(&cfg)?;
    let stored = cfg.ambiguity.transcripts.as_deref().map(read_transcripts).transpose()?;
    let debate_cfg = cfg.debate_config()?;
    let ctx = RunContext::create(&mut cfg, "ambiguity", replay_of)?;
    ctx.guard(|| {
        let gateway = backend.map(|b| make_gateway(&cfg, b, ctx.log.clone(), replaying));
        let opts = cfg.engine_options();
        let engine =
            gateway.as_ref().map(|g| DebateEngine::new(g.clone(), guidelines.clone(), debate_cfg, opts)).transpose()?;
        let taxonomy = AmbiguityTaxonomy::builtin();
        let a = &cfg.ambiguity;
        let seed = cfg.seed();
        let (results, failures) = run_batch(&records, cfg.records_in_flight, cfg.fail_fast, &ctx.log, |r| {
            let gw = || gateway.as_ref().ok_or_else(|| CliError::Config("this method needs a backend".into()));
            let transcript = || -> Result<(SessionTranscript, bool), CliError> {
                match &stored {
                    Some(map) => map
                        .get(&r.record_id)
                        .cloned()
                        .map(|t| (t, false))
                        .ok_or_else(|| CliError::MissingTranscripts(r.record_id.clone())),
                    None => {
                        let e = engine.as_ref().ok_or_else(|| CliError::Config("no backend for debating".into()))?;
                        Ok((e.run_session(r, 1)?, true))
                    }
                }
            };
            Ok(match a.method {
                AmbiguityMethod::SelfConsistencyVariation => {
                    (detect_self_consistency_variation(gw()?, r, a.sc_queries, a.threshold_pts, &opts)?, None)
                }
                AmbiguityMethod::ZeroShotTaxonomy => (detect_zero_shot_taxonomy(gw()?, r, taxonomy, &opts)?, None),
                AmbiguityMethod::DebateDisagreement => {
                    let (t, produced) = transcript()?;
                    (detect_debate_disagreement(&t)?, produced.then_some(t))
                }
                AmbiguityMethod::DebateArguments => {
                    let (t, produced) = transcript()?;
                    let v = detect_with_debate_arguments(gw()?, r, &t, taxonomy, &guidelines, &opts)?;
                    (v, produced.then_some(t))
                }
                AmbiguityMethod::RandomBaseline => (random_baseline(r, seed), None),
            })
        });
        let mut verdicts = Vec::new();
        let mut produced = Vec::new();
        let mut pairs = (Vec::new(), Vec::new());
        for (r, res) in records.iter().zip(results) {
            let Some((v, t)) = res else { continue };
            if let Some(gold) = &r.gold_ambiguity {
                pairs.0.push(v.is_ambiguous);
                pairs.1.push(gold.is_ambiguous);
            }
            verdicts.push(v);
            produced.extend(t);
        }
        ctx.write_jsonl("verdicts.jsonl", &verdicts)?;
        if !produced.is_empty() {
            ctx.write_jsonl("transcripts.jsonl", &produced)?;
        }
        let detector = (!pairs.0.is_empty()).then(|| SideMetrics::from_result(report_flags(&pairs.0, &pairs.1)));
        let summary = AmbiguityMetrics {
            method: a.method,
            verdicts: verdicts.len(),
            ambiguous: verdicts.iter().filter(|v| v.is_ambiguous).count(),
            detector: detector.clone(),
        };
        let mut table =
            format!("method: {:?}\nverdicts: {}\nambiguous: {}\n", a.method, summary.verdicts, summary.ambiguous);
        if let Some(d) = &detector {
            table.push_str(&render_table(&[("detector vs gold".to_string(), d.as_row())]));
        }
        write_metrics(&ctx, &summary, &table)?;
        Ok(RunOutput { dir: ctx.dir.clone(), failures, total: records.len() })
    })
}

pub(super) fn learn(
    mut cfg: RunConfig,
    script: Option<ScriptedBackendSpec>,
    replay_of: Option<&str>,
) -> Result<RunOutput, CliError> {
    let replaying = script.is_some();
    cfg.validate(!replaying)?;
    let backend = build_backend(&cfg, script)?;
    let records = load_records(&cfg)?;
    let initial = load_guidelines(&cfg)?;
    let debate_cfg = cfg.debate_config()?;
    let ctx = RunContext::create(&mut cfg, "learn-guidelines", replay_of)?;
    ctx.guard(|| {
        let gateway = make_gateway(&cfg, backend, ctx.log.clone(), replaying);
        let learning = LearningOptions { stagnation_window: cfg.learning.stagnation_window };
        let report = learn_guidelines(
            &gateway,
            &records,
            &debate_cfg,
            &cfg.engine_options(),
            &learning,
            initial,
            Some(&ctx.run_id),
        )?;
        let json = format!("{}\n", report.set.to_json());
        ctx.write("guidelines.json", &json)?;
        let summary = json!({
            "records_processed": report.records_processed,
            "additions": report.additions,
            "stopped_by_stagnation": report.stopped_by_stagnation,
            "guidelines": report.set.len(),
        });
        ctx.write("learning.json", &format!("{}\n", serde_json::to_string_pretty(&summary).expect("json")))?;
        if let Some(p) = &cfg.learning.export {
            fs::write(p, &json).map_err(CliError::io(p))?;
        }
        Ok(RunOutput { dir: ctx.dir.clone(), failures: Vec::new(), total: records.len() })
    })
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Io { path: path.to_path_buf(), message: format!("line {}: {e}", i + 1) })
        })
        .collect()
}

pub(super) fn report(run: &Path, verdicts: Option<&Path>, as_json: bool) -> Result<String, CliError> {
    let predictions: Vec<Prediction> = read_jsonl(&run.join("predictions.jsonl"))?;
    let verdict_map = verdicts
        .map(|p| {
            read_jsonl::<AmbiguityVerdict>(p)
                .map(|vs| vs.into_iter().map(|v| (v.record_id, v.is_ambiguous)).collect::<HashMap<_, _>>())
        })
        .transpose()?;
    let sets = compute_metrics(&predictions, verdict_map.as_ref());
    Ok(if as_json { format!("{}\n", serde_json::to_string_pretty(&sets).expect("json")) } else { metrics_table(&sets) })
}

/// Scripted spec answering every tag with the texts it received, in order.
pub fn script_from_log(entries: &[RunLogEntry]) -> ScriptedBackendSpec {
    let mut by_tag: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.component == "gateway") {
        let ok = e.payload["outcome"]["status"] == "ok";
        if let (true, Some(tag), Some(text)) = (ok, e.payload["tag"].as_str(), e.payload["outcome"]["text"].as_str()) {
            by_tag.entry(tag.to_string()).or_default().push(text.to_string());
        }
    }
    by_tag.into_iter().fold(ScriptedBackendSpec::new(), |s, (tag, texts)| s.tag(tag, texts))
}

/// Outputs compared by `replay --verify`.
const REPLAYED_OUTPUTS: [&str; 5] =
    ["predictions.jsonl", "transcripts.jsonl", "verdicts.jsonl", "metrics.json", "guidelines.json"];

fn comparable(name: &str, bytes: Vec<u8>) -> Vec<u8> {
    if name != "guidelines.json" {
        return bytes;
    }
    // Learned entries name their source run, which differs by construction.
    let Ok(mut v) = serde_json::from_slice::<Value>(&bytes) else { return bytes };
    if let Some(entries) = v.get_mut("entries").and_then(Value::as_array_mut) {
        for e in entries {
            if let Some(o) = e.as_object_mut() {
                o.remove("source_run");
            }
        }
    }
    serde_json::to_vec(&v).expect("json")
}

pub(super) fn replay(run: &Path, verify: bool) -> Result<String, CliError> {
    let cfg_path = run.join(CONFIG_FILE);
    let snapshot: ConfigSnapshot =
        serde_json::from_str(&fs::read_to_string(&cfg_path).map_err(CliError::io(&cfg_path))?)
            .map_err(|e| CliError::Io { path: cfg_path.clone(), message: e.to_string() })?;
    let entries: Vec<RunLogEntry> = read_jsonl(&run.join(LOG_FILE))?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        *counts.entry(e.component.as_str()).or_default() += 1;
    }
    let gateway_errors =
        entries.iter().filter(|e| e.component == "gateway" && e.payload["outcome"]["status"] != "ok").count();
    let mut out = format!("command: {}\nentries: {}\n", snapshot.command, entries.len());
    for (c, n) in &counts {
        out.push_str(&format!("  {c}: {n}\n"));
    }
    out.push_str(&format!("failed backend attempts: {gateway_errors}\n"));
    if !verify {
        return Ok(out);
    }

    let original_id = run.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string();
    let root = run.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let replay_id =
        (1..).map(|n| format!("{original_id}-replay{n}")).find(|id| !root.join(id).exists()).expect("unbounded");
    let mut cfg = snapshot.config.clone();
    cfg.output_dir = root;
    cfg.run_id = Some(replay_id);
    let script = Some(script_from_log(&entries));
    let result = match snapshot.command.as_str() {
        "evaluate" => evaluate(cfg, script, Some(&original_id)),
        "ambiguity" => ambiguity(cfg, script, Some(&original_id)),
        "learn-guidelines" => learn(cfg, script, Some(&original_id)),
        other => return Err(CliError::Config(format!("cannot replay command {other:?}"))),
    }?;
    for name in REPLAYED_OUTPUTS {
        let a = run.join(name);
        let b = result.dir.join(name);
        match (fs::read(&a), fs::read(&b)) {
            (Err(_), Err(_)) => {}
            (Ok(x), Ok(y)) if comparable(name, x.clone()) == comparable(name, y.clone()) => {
                out.push_str(&format!("{name}: identical\n"));
            }
            _ => return Err(CliError::ReplayMismatch(format!("{name} (replay in {})", result.dir.display()))),
        }
    }
    out.push_str(&format!("replay: {}\n", result.dir.display()));
    Ok(out)
}
