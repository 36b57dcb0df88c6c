//! Literature baselines: a fitted zero-intelligence birth-death book model
//! sampled through the emulator, and a two-component Poisson mixture GLM.

pub mod birth_death;
pub mod glm;

use thiserror::Error;

use crate::orderflow::OrderFlowError;

pub use birth_death::{
    anchor_states, fit_birth_death, forecast_birth_death, forecast_birth_death_batch, AnchorState, BirthDeathRates,
};
pub use glm::{fit_glm, fit_glm_design, forecast_glm, glm_covariates, GlmOptions, GlmParams};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("fit: {0}")]
    Fit(String),
    #[error(transparent)]
    Stream(#[from] OrderFlowError),
    #[error("sample at seq {seq} has no matching event in the stream")]
    MissingAnchor { seq: u64 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
