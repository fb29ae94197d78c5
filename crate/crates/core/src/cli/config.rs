//! TOML run configuration and the flags that override it.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::ambiguity::{AmbiguityMethod, DEFAULT_SC_QUERIES, DEFAULT_THRESHOLD_PTS};
use crate::baselines::DEFAULT_SC_SAMPLES;
use crate::data::Adapter;
use crate::debate::EngineOptions;
use crate::domain::{Aggregation, DebateConfig, Granularity};
use crate::gateway::Decoding;
use crate::guidelines::DEFAULT_STAGNATION_WINDOW;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    #[default]
    Debate,
    ZeroShot,
    Cot,
    SelfConsistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Http,
    Scripted,
}

/// Fully resolved configuration; also the body of every `config.json` snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Required: nothing is seeded from the clock.
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default)]
    pub evaluator: Evaluator,
    /// Guideline set, either exported JSON (`.json`) or one guideline per line.
    #[serde(default)]
    pub guidelines: Option<PathBuf>,
    #[serde(default)]
    pub fail_fast: bool,
    #[serde(default = "one")]
    pub records_in_flight: usize,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub debate: DebateSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub baselines: BaselineSection,
    #[serde(default)]
    pub ambiguity: AmbiguitySection,
    #[serde(default)]
    pub learning: LearningSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Scripted backend spec (JSON).
    pub script: Option<PathBuf>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub timeout_s: u64,
    /// Extra attempts after a transient failure.
    pub retries: u32,
    pub max_in_flight: usize,
    pub max_per_minute: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Re-asks after an unparseable response.
    pub parse_retries: u32,
    /// Run agents and sessions of one record concurrently.
    pub parallel: bool,
}

impl Default for BackendSection {
    fn default() -> Self {
        let d = Decoding::default();
        let e = EngineOptions::default();
        Self {
            kind: BackendKind::Http,
            script: None,
            base_url: None,
            model: None,
            timeout_s: 120,
            retries: 3,
            max_in_flight: 8,
            max_per_minute: 60,
            temperature: d.temperature,
            max_tokens: d.max_tokens,
            parse_retries: e.parse_retries,
            parallel: e.parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DebateSection {
    pub num_agents: u32,
    /// `[faithful, unfaithful]`; a uniform split when absent.
    pub stance_split: Option<(u32, u32)>,
    pub max_rounds: u32,
    pub num_adjudicators: u32,
    pub num_sessions: u32,
    pub aggregation: Aggregation,
    /// First round with the intervention text; 0 disables it.
    pub intervention_round: u32,
}

impl Default for DebateSection {
    fn default() -> Self {
        let d = DebateConfig::default();
        Self {
            num_agents: d.num_agents,
            stance_split: None,
            max_rounds: d.max_rounds,
            num_adjudicators: d.num_adjudicators,
            num_sessions: d.num_sessions,
            aggregation: d.aggregation,
            intervention_round: d.intervention_round.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    pub adapter: Adapter,
    /// Ambiguity annotations (JSONL) joined onto the records.
    pub annotations: Option<PathBuf>,
    /// Keep only records of this granularity.
    pub granularity: Option<Granularity>,
    /// Keep only the first N records after filtering.
    pub limit: Option<usize>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { path: None, adapter: Adapter::Canonical, annotations: None, granularity: None, limit: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub sc_samples: u32,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self { sc_samples: DEFAULT_SC_SAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmbiguitySection {
    pub method: AmbiguityMethod,
    pub sc_queries: u32,
    pub threshold_pts: f64,
    /// `transcripts.jsonl` of an earlier evaluate run; debate methods replay it instead of debating.
    pub transcripts: Option<PathBuf>,
}

impl Default for AmbiguitySection {
    fn default() -> Self {
        Self {
            method: AmbiguityMethod::SelfConsistencyVariation,
            sc_queries: DEFAULT_SC_QUERIES,
            threshold_pts: DEFAULT_THRESHOLD_PTS,
            transcripts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningSection {
    pub stagnation_window: usize,
    /// Extra copy of the learned set outside the run directory.
    pub export: Option<PathBuf>,
}

impl Default for LearningSection {
    fn default() -> Self {
        Self { stagnation_window: DEFAULT_STAGNATION_WINDOW, export: None }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn one() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn debate_config(&self) -> Result<DebateConfig, CliError> {
        let d = &self.debate;
        let split = match d.stance_split {
            Some(s) => s,
            None => DebateConfig::uniform_split(d.num_agents)?,
        };
        let cfg = DebateConfig {
            num_agents: d.num_agents,
            stance_split: split,
            max_rounds: d.max_rounds,
            num_adjudicators: d.num_adjudicators,
            num_sessions: d.num_sessions,
            aggregation: d.aggregation,
            intervention_round: (d.intervention_round > 0).then_some(d.intervention_round),
            master_seed: self.seed.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn engine_options(&self) -> EngineOptions {
        EngineOptions {
            decoding: Decoding { temperature: self.backend.temperature, max_tokens: self.backend.max_tokens },
            parse_retries: self.backend.parse_retries,
            parallel: self.backend.parallel,
            learning_mode: false,
        }
    }

    /// Whether the configured ambiguity method issues model calls.
    pub fn ambiguity_needs_model(&self) -> bool {
        match self.ambiguity.method {
            AmbiguityMethod::RandomBaseline => false,
            AmbiguityMethod::DebateDisagreement => self.ambiguity.transcripts.is_none(),
            _ => true,
        }
    }

    /// Checks inputs; backend settings only when `check_backend`.
    pub fn validate(&self, check_backend: bool) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seed.is_none() {
            return bad("seed is required (set `seed` in the config or pass --seed)".into());
        }
        if self.records_in_flight == 0 {
            return bad("records_in_flight must be at least 1".into());
        }
        if let Some(id) = &self.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
                return bad(format!("run_id {id:?} must be a plain directory name"));
            }
        }
        match &self.dataset.path {
            None => return bad("dataset path is required".into()),
            Some(p) => must_exist(p, "dataset")?,
        }
        if let Some(p) = &self.dataset.annotations {
            must_exist(p, "annotations")?;
        }
        if let Some(p) = &self.guidelines {
            must_exist(p, "guidelines")?;
        }
        self.debate_config()?;
        if self.baselines.sc_samples == 0 {
            return bad("sc_samples must be at least 1".into());
        }
        let a = &self.ambiguity;
        if a.sc_queries == 0 || !(a.threshold_pts > 0.0 && a.threshold_pts <= 100.0) {
            return bad("sc_queries must be >= 1 and threshold_pts in (0, 100]".into());
        }
        if let Some(p) = &a.transcripts {
            must_exist(p, "transcripts")?;
        }
        if self.learning.stagnation_window == 0 {
            return bad("stagnation_window must be at least 1".into());
        }
        if check_backend {
            self.validate_backend()?;
        }
        Ok(())
    }

    fn validate_backend(&self) -> Result<(), CliError> {
        let b = &self.backend;
        match b.kind {
            BackendKind::Scripted => match &b.script {
                None => Err(CliError::Config("scripted backend needs `backend.script`".into())),
                Some(p) => must_exist(p, "script"),
            },
            BackendKind::Http => {
                if b.base_url.as_deref().is_none_or(str::is_empty) || b.model.as_deref().is_none_or(str::is_empty) {
                    return Err(CliError::Config("http backend needs `backend.base_url` and `backend.model`".into()));
                }
                if b.max_in_flight == 0 || b.max_per_minute == 0 {
                    return Err(CliError::Config("rate limits must be at least 1".into()));
                }
                Ok(())
            }
        }
    }
}

fn must_exist(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} path {} does not exist", path.display())))
    }
}

/// Parses a snake_case or kebab-case enum name through its serde form.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_split(s: &str) -> Result<(u32, u32), String> {
    let (f, u) = s.split_once(':').ok_or("expected FAITHFUL:UNFAITHFUL, e.g. 2:3")?;
    Ok((f.trim().parse().map_err(|e| format!("{e}"))?, u.trim().parse().map_err(|e| format!("{e}"))?))
}

/// Flags shared by every command that runs records; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigFlags {
    /// TOML run configuration.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory name under the output directory; defaults to `<command>-<timestamp>`.
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Guideline set (exported JSON or one guideline per line).
    #[arg(long)]
    pub guidelines: Option<PathBuf>,
    /// Abort the batch at the first record failure.
    #[arg(long)]
    pub fail_fast: bool,
    /// Records processed concurrently.
    #[arg(long)]
    pub records_in_flight: Option<usize>,
    /// Run the agents and sessions of a record one after another.
    #[arg(long)]
    pub serial: bool,

    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Scripted backend spec (JSON).
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub timeout_s: Option<u64>,
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub max_per_minute: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub parse_retries: Option<u32>,

    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// canonical, tofu-eval-meeting-bank, tofu-eval-media-sum, aggre-fact-cnn, aggre-fact-xsum
    #[arg(long, value_parser = parse_enum::<Adapter>)]
    pub adapter: Option<Adapter>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// sentence or full-summary
    #[arg(long, value_parser = parse_enum::<Granularity>)]
    pub granularity: Option<Granularity>,
    #[arg(long)]
    pub limit: Option<usize>,

    #[arg(long)]
    pub agents: Option<u32>,
    /// Imposed stances as FAITHFUL:UNFAITHFUL.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<(u32, u32)>,
    #[arg(long)]
    pub rounds: Option<u32>,
    #[arg(long)]
    pub adjudicators: Option<u32>,
    #[arg(long)]
    pub sessions: Option<u32>,
    /// debate-vote, agent-vote or single-session
    #[arg(long, value_parser = parse_enum::<Aggregation>)]
    pub aggregation: Option<Aggregation>,
    /// First intervention round; 0 disables it.
    #[arg(long)]
    pub intervention_round: Option<u32>,
}

macro_rules! set {
    ($flag:expr => $($target:tt)+) => {
        if let Some(v) = $flag.clone() {
            $($target)+ = v;
        }
    };
}

impl ConfigFlags {
    /// Loads the config file (or defaults) and applies every given flag.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut c);
        Ok(c)
    }

    pub fn apply(&self, c: &mut RunConfig) {
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if self.run_id.is_some() {
            c.run_id = self.run_id.clone();
        }
        set!(self.output_dir => c.output_dir);
        if self.guidelines.is_some() {
            c.guidelines = self.guidelines.clone();
        }
        c.fail_fast |= self.fail_fast;
        set!(self.records_in_flight => c.records_in_flight);
        if self.serial {
            c.backend.parallel = false;
        }

        let b = &mut c.backend;
        set!(self.backend => b.kind);
        if self.script.is_some() {
            b.script = self.script.clone();
        }
        if self.base_url.is_some() {
            b.base_url = self.base_url.clone();
        }
        if self.model.is_some() {
            b.model = self.model.clone();
        }
        set!(self.timeout_s => b.timeout_s);
        set!(self.retries => b.retries);
        set!(self.max_in_flight => b.max_in_flight);
        set!(self.max_per_minute => b.max_per_minute);
        set!(self.temperature => b.temperature);
        set!(self.max_tokens => b.max_tokens);
        set!(self.parse_retries => b.parse_retries);

        let d = &mut c.dataset;
        if self.dataset.is_some() {
            d.path = self.dataset.clone();
        }
        set!(self.adapter => d.adapter);
        if self.annotations.is_some() {
            d.annotations = self.annotations.clone();
        }
        if self.granularity.is_some() {
            d.granularity = self.granularity;
        }
        if self.limit.is_some() {
            d.limit = self.limit;
        }

        let g = &mut c.debate;
        set!(self.agents => g.num_agents);
        if self.split.is_some() {
            g.stance_split = self.split;
        }
        set!(self.rounds => g.max_rounds);
        set!(self.adjudicators => g.num_adjudicators);
        set!(self.sessions => g.num_sessions);
        set!(self.aggregation => g.aggregation);
        set!(self.intervention_round => g.intervention_round);
    }
}
