//! Summary faithfulness evaluation with stance-initialized multi-agent debate.
//!
//! Agents are driven through a [`gateway::Gateway`], which wraps either an HTTP
//! chat-completions backend or a scripted backend for deterministic tests.

pub mod ambiguity;
pub mod baselines;
pub mod cli;
pub mod data;
pub mod debate;
pub mod domain;
pub mod exec;
pub mod gateway;
pub mod guidelines;
pub mod metrics;
pub mod prompting;
pub mod seeds;

mod ask;

use thiserror::Error;

/// Any error a library entry point can return.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] domain::DomainError),
    #[error(transparent)]
    Gateway(#[from] gateway::GatewayError),
    #[error(transparent)]
    Prompt(#[from] prompting::PromptError),
    #[error(transparent)]
    Debate(#[from] debate::DebateError),
    #[error(transparent)]
    Baseline(#[from] baselines::BaselineError),
    #[error(transparent)]
    Ambiguity(#[from] ambiguity::AmbiguityError),
    #[error(transparent)]
    Guidelines(#[from] guidelines::GuidelineError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    RunLog(#[from] data::runlog::RunLogError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
