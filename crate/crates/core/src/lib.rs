//! Probabilistic forecasting of tick-quantized price moves from order-flow
//! event streams with recurrent mixture-density networks, plus the evaluation,
//! benchmark, and Kelly-sizing simulation machinery around them.

pub mod benchmarks;
pub mod eval;
pub mod features;
pub mod forecast;
pub mod mixtures;
pub mod net;
pub mod orderflow;
pub mod seed;
pub mod sim;
