//! Command implementations behind the `tickmix` binary. Each command reads
//! its inputs from and writes its outputs under the run's `out_dir`.

pub mod config;
pub mod pipeline;

use thiserror::Error;
use tickmix::benchmarks::BenchmarkError;
use tickmix::eval::EvalError;
use tickmix::features::FeatureError;
use tickmix::mixtures::MixtureError;
use tickmix::net::NetError;
use tickmix::orderflow::OrderFlowError;
use tickmix::sim::SimError;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Io(format!("malformed file: {e}"))
        }
    }
}

impl From<OrderFlowError> for CliError {
    fn from(e: OrderFlowError) -> Self {
        match e {
            OrderFlowError::Config(_) | OrderFlowError::DegenerateConfig => CliError::Config(e.to_string()),
            OrderFlowError::Io(_) => CliError::Io(e.to_string()),
            OrderFlowError::Line { ref source, .. } if matches!(**source, OrderFlowError::Io(_)) => CliError::Io(e.to_string()),
            _ => CliError::Io(format!("bad stream: {e}")),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Config(_) => CliError::Config(e.to_string()),
            FeatureError::Stream(s) => s.into(),
            FeatureError::Format(_) | FeatureError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Config(_) | NetError::EmptySplit(_) => CliError::Config(e.to_string()),
            NetError::Checkpoint(_) | NetError::Io(_) => CliError::Io(e.to_string()),
            NetError::Numeric(_) | NetError::Divergence { .. } | NetError::Index { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<BenchmarkError> for CliError {
    fn from(e: BenchmarkError) -> Self {
        match e {
            BenchmarkError::Fit(_) => CliError::Numeric(e.to_string()),
            BenchmarkError::Stream(s) => s.into(),
            BenchmarkError::MissingAnchor { .. } => CliError::Config(e.to_string()),
            BenchmarkError::Json(_) | BenchmarkError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownBaseline(_) | EvalError::Shape(_) => CliError::Config(e.to_string()),
            EvalError::Empty | EvalError::Mixture(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<MixtureError> for CliError {
    fn from(e: MixtureError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Shape { .. } => CliError::Config(e.to_string()),
            SimError::Io(_) | SimError::Json(_) => CliError::Io(e.to_string()),
            SimError::DegenerateForecast(_) | SimError::Degenerate(_) => CliError::Numeric(e.to_string()),
        }
    }
}
