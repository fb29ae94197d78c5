//! Command-line entry point: evaluate, ambiguity, learn-guidelines, report, replay.
//!
//! Every run writes into `<output_dir>/<run_id>/`: `config.json`, `log.jsonl`,
//! command outputs, and `error.json` when the run did not fully succeed.

mod commands;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ambiguity::AmbiguityMethod;
use crate::data::runlog::RunLog;
use crate::domain::EvaluationRecord;
use crate::exec::map_ordered;
use crate::gateway::{
    CompletionBackend, Gateway, HttpBackend, HttpBackendConfig, RetryPolicy, ScriptedBackend, ScriptedBackendSpec,
};
use crate::guidelines::{default_guidelines, GuidelineSet};

pub use commands::{compute_metrics, Prediction, RecordFailure, SetMetrics, SideMetrics};
pub use config::{BackendKind, ConfigFlags, Evaluator, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run directory {0} already exists")]
    RunExists(PathBuf),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("no transcript for record {0}")]
    MissingTranscripts(String),
    #[error("{} of {total} records failed", failures.len())]
    BatchFailed { failures: Vec<RecordFailure>, total: usize },
    #[error("replay differs from the original run in {0}")]
    ReplayMismatch(String),
    #[error(transparent)]
    Lib(#[from] crate::Error),
}

macro_rules! lib_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Lib(e.into())
            }
        })*
    };
}

lib_error!(
    crate::domain::DomainError,
    crate::gateway::GatewayError,
    crate::prompting::PromptError,
    crate::debate::DebateError,
    crate::baselines::BaselineError,
    crate::ambiguity::AmbiguityError,
    crate::guidelines::GuidelineError,
    crate::data::DataError,
    crate::data::runlog::RunLogError,
    crate::metrics::MetricsError
);

impl CliError {
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |e| CliError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    /// Stable name used in `error.json`.
    pub fn kind(&self) -> &'static str {
        use crate::gateway::GatewayError as G;
        match self {
            CliError::Config(_) => "config",
            CliError::RunExists(_) => "run_exists",
            CliError::Io { .. } => "io",
            CliError::MissingTranscripts(_) => "missing_transcripts",
            CliError::BatchFailed { .. } => "batch_failed",
            CliError::ReplayMismatch(_) => "replay_mismatch",
            CliError::Lib(crate::Error::Gateway(G::AuthError(_))) => "auth",
            CliError::Lib(crate::Error::Gateway(_)) => "gateway",
            CliError::Lib(crate::Error::Domain(_)) => "config",
            CliError::Lib(crate::Error::Data(_)) => "data",
            CliError::Lib(_) => "runtime",
        }
    }

    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "config" | "run_exists" => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::BatchFailed { failures, total } = self {
            v["failures"] = json!(failures);
            v["total"] = json!(total);
        }
        v
    }
}

#[derive(Debug, Parser)]
#[command(name = "faithdebate", version, about = "Summary faithfulness evaluation with multi-agent debate")]
pub struct Cli {
    /// Log filter used when RUST_LOG is unset.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label every record as faithful or unfaithful and score against gold labels.
    Evaluate(EvaluateArgs),
    /// Detect ambiguous records and score against ambiguity annotations.
    Ambiguity(AmbiguityArgs),
    /// Grow a guideline set on a labeled development set.
    LearnGuidelines(LearnArgs),
    /// Recompute metrics of a finished evaluate run.
    Report(ReportArgs),
    /// Summarize a run log; with --verify, rerun it from the log and compare outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub flags: ConfigFlags,
    #[arg(long, value_enum)]
    pub evaluator: Option<Evaluator>,
    /// Samples per record for the self-consistency evaluator.
    #[arg(long)]
    pub sc_samples: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct AmbiguityArgs {
    #[command(flatten)]
    pub flags: ConfigFlags,
    /// self-consistency-variation, zero-shot-taxonomy, debate-disagreement, debate-arguments, random-baseline
    #[arg(long, value_parser = config::parse_enum::<AmbiguityMethod>)]
    pub method: Option<AmbiguityMethod>,
    #[arg(long)]
    pub sc_queries: Option<u32>,
    /// Percentage-point gap below which a record counts as ambiguous.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// transcripts.jsonl from an earlier evaluate run.
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub flags: ConfigFlags,
    /// Stop after this many consecutive records add nothing.
    #[arg(long)]
    pub stagnation_window: Option<usize>,
    /// Also write the learned set to this path.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run directory of an evaluate run.
    pub run: PathBuf,
    /// verdicts.jsonl of an ambiguity run used for filtering instead of gold annotations.
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Run directory to replay.
    pub run: PathBuf,
    /// Rerun the command against the logged responses and compare outputs byte for byte.
    #[arg(long)]
    pub verify: bool,
}

/// Body of `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_of: Option<String>,
    pub config: RunConfig,
}

/// Run directory plus its log.
pub struct RunContext {
    pub run_id: String,
    pub dir: PathBuf,
    pub log: Arc<RunLog>,
}

impl RunContext {
    /// Creates a fresh run directory; an existing one is an error.
    pub fn create(cfg: &mut RunConfig, command: &str, replay_of: Option<&str>) -> Result<Self, CliError> {
        let run_id = cfg
            .run_id
            .clone()
            .unwrap_or_else(|| format!("{command}-{}", chrono::Local::now().format("%Y%m%dT%H%M%S%.3f")));
        cfg.run_id = Some(run_id.clone());
        let dir = cfg.output_dir.join(&run_id);
        if dir.exists() {
            return Err(CliError::RunExists(dir));
        }
        let log = RunLog::create(&cfg.output_dir, &run_id)?;
        log.write_config_snapshot(&ConfigSnapshot {
            command: command.to_string(),
            replay_of: replay_of.map(str::to_string),
            config: cfg.clone(),
        })?;
        Ok(Self { run_id, dir, log: Arc::new(log) })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(CliError::io(&p))
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Result<(), CliError> {
        self.write(name, &to_jsonl(items))
    }

    /// Runs `body`; any error or record failure is written to `error.json`.
    fn guard(&self, body: impl FnOnce() -> Result<RunOutput, CliError>) -> Result<RunOutput, CliError> {
        let result = body();
        let err = match &result {
            Err(e) => Some(e.to_json()),
            Ok(out) if !out.failures.is_empty() => {
                Some(CliError::BatchFailed { failures: out.failures.clone(), total: out.total }.to_json())
            }
            Ok(_) => None,
        };
        if let Some(v) = err {
            self.write("error.json", &format!("{}\n", serde_json::to_string_pretty(&v).expect("json")))?;
        }
        result
    }
}

/// Result of a command that processed a batch.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub failures: Vec<RecordFailure>,
    pub total: usize,
}

impl RunOutput {
    fn into_result(self) -> Result<PathBuf, CliError> {
        if self.failures.is_empty() {
            Ok(self.dir)
        } else {
            Err(CliError::BatchFailed { failures: self.failures, total: self.total })
        }
    }
}

pub(crate) fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

/// Builds the configured backend. A missing HTTP credential fails here, before any record is read.
pub fn build_backend(
    cfg: &RunConfig,
    script: Option<ScriptedBackendSpec>,
) -> Result<Arc<dyn CompletionBackend>, CliError> {
    if let Some(spec) = script {
        return Ok(Arc::new(ScriptedBackend::new(spec)));
    }
    let b = &cfg.backend;
    match b.kind {
        BackendKind::Scripted => {
            let path = b.script.as_ref().ok_or_else(|| CliError::Config("backend.script is required".into()))?;
            let text = fs::read_to_string(path).map_err(CliError::io(path))?;
            let spec = ScriptedBackendSpec::from_json(&text)
                .map_err(|e| CliError::Config(format!("script {}: {e}", path.display())))?;
            Ok(Arc::new(ScriptedBackend::new(spec)))
        }
        BackendKind::Http => {
            let config = HttpBackendConfig {
                base_url: b.base_url.clone().unwrap_or_default(),
                model: b.model.clone().unwrap_or_default(),
                timeout_s: b.timeout_s,
            };
            Ok(Arc::new(HttpBackend::from_env(config)?))
        }
    }
}

pub fn make_gateway(
    cfg: &RunConfig,
    backend: Arc<dyn CompletionBackend>,
    log: Arc<RunLog>,
    replaying: bool,
) -> Gateway {
    let gw = Gateway::new(backend, log);
    if replaying || cfg.backend.kind == BackendKind::Scripted {
        return gw.with_retry(RetryPolicy::no_delay(cfg.backend.retries));
    }
    gw.with_retry(RetryPolicy { retries: cfg.backend.retries, ..RetryPolicy::default() })
        .with_rate_limit(cfg.backend.max_in_flight, cfg.backend.max_per_minute)
}

/// Ingests, joins annotations, filters by granularity and applies the limit.
pub fn load_records(cfg: &RunConfig) -> Result<Vec<EvaluationRecord>, CliError> {
    let path = cfg.dataset.path.as_ref().ok_or_else(|| CliError::Config("dataset path is required".into()))?;
    let mut records = crate::data::ingest(path, cfg.dataset.adapter)?;
    if let Some(a) = &cfg.dataset.annotations {
        records = crate::data::join_ambiguity_file(records, a)?;
    }
    if let Some(g) = cfg.dataset.granularity {
        records.retain(|r| r.granularity == g);
    }
    if let Some(n) = cfg.dataset.limit {
        records.truncate(n);
    }
    Ok(records)
}

pub fn load_guidelines(cfg: &RunConfig) -> Result<GuidelineSet, CliError> {
    let Some(path) = &cfg.guidelines else {
        return Ok(default_guidelines());
    };
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let set = if path.extension().is_some_and(|e| e == "json") {
        GuidelineSet::from_json(&text)?
    } else {
        GuidelineSet::from_text(&text)?
    };
    Ok(set)
}

/// Runs `f` over records with at most `in_flight` at once. With `fail_fast`,
/// records not yet started after a failure are skipped.
pub(crate) fn run_batch<T: Send>(
    records: &[EvaluationRecord],
    in_flight: usize,
    fail_fast: bool,
    log: &RunLog,
    f: impl Fn(&EvaluationRecord) -> Result<T, CliError> + Sync,
) -> (Vec<Option<T>>, Vec<RecordFailure>) {
    let abort = AtomicBool::new(false);
    let results = map_ordered(records, in_flight, |_, r| {
        if abort.load(Ordering::SeqCst) {
            return Err("skipped after an earlier failure".to_string());
        }
        f(r).map_err(|e| {
            if fail_fast {
                abort.store(true, Ordering::SeqCst);
            }
            e.to_string()
        })
    });
    let mut out = Vec::with_capacity(records.len());
    let mut failures = Vec::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(v) => out.push(Some(v)),
            Err(error) => {
                tracing::warn!(record = %r.record_id, %error, "record failed");
                let _ = log.append(&r.record_id, "record_failure", json!({ "error": error }));
                failures.push(RecordFailure { record_id: r.record_id.clone(), error });
                out.push(None);
            }
        }
    }
    (out, failures)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Evaluate(a) => {
            let mut cfg = a.flags.resolve()?;
            if let Some(e) = a.evaluator {
                cfg.evaluator = e;
            }
            if let Some(n) = a.sc_samples {
                cfg.baselines.sc_samples = n;
            }
            let dir = commands::evaluate(cfg, None, None)?.into_result()?;
            println!("{}", dir.display());
        }
        Command::Ambiguity(a) => {
            let mut cfg = a.flags.resolve()?;
            let s = &mut cfg.ambiguity;
            if let Some(m) = a.method {
                s.method = m;
            }
            if let Some(n) = a.sc_queries {
                s.sc_queries = n;
            }
            if let Some(t) = a.threshold {
                s.threshold_pts = t;
            }
            if a.transcripts.is_some() {
                s.transcripts = a.transcripts;
            }
            let dir = commands::ambiguity(cfg, None, None)?.into_result()?;
            println!("{}", dir.display());
        }
        Command::LearnGuidelines(a) => {
            let mut cfg = a.flags.resolve()?;
            if let Some(w) = a.stagnation_window {
                cfg.learning.stagnation_window = w;
            }
            if a.export.is_some() {
                cfg.learning.export = a.export;
            }
            let dir = commands::learn(cfg, None, None)?.into_result()?;
            println!("{}", dir.display());
        }
        Command::Report(a) => print!("{}", commands::report(&a.run, a.verdicts.as_deref(), a.json)?),
        Command::Replay(a) => print!("{}", commands::replay(&a.run, a.verify)?),
    }
    Ok(())
}

/// Binary entry point: parses arguments, sets up logging, maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(&cli.log_level));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
