//! Exchange message decoding, the limit-order-book emulator, and the synthetic
//! order-flow generator.

mod book;
mod event;
pub mod generator;
pub mod io;

use rust_decimal::{Decimal, RoundingStrategy};
use rust_decimal::prelude::ToPrimitive;
use thiserror::Error;

pub use book::{ApplyOutcome, BookState, Fill, Level, RestingOrder};
pub use event::{parse_message, EventType, OrderFlowEvent, Pair, Side};
pub use generator::{generate_stream, ArrivalModel, GeneratorConfig, GeneratorModel, ZiEngine};

#[derive(Debug, Error)]
pub enum OrderFlowError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("field `{field}`: {reason}")]
    Schema { field: &'static str, reason: String },
    #[error("timestamp went backwards: {got} after {previous}")]
    Ordering { previous: i64, got: i64 },
    #[error("order id {0:?} is already resting")]
    DuplicateOrder(String),
    #[error("book has an empty side, no mid price")]
    NoMid,
    #[error("every arrival rate is zero")]
    DegenerateConfig,
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("line {line}: {source}")]
    Line { line: usize, source: Box<OrderFlowError> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Signed number of ticks in `price_change`, rounding half away from zero.
pub fn tick_quantize(price_change: Decimal, tick_size: Decimal) -> i64 {
    assert!(tick_size > Decimal::ZERO, "tick size must be positive");
    (price_change / tick_size)
        .round_dp_with_strategy(0, RoundingStrategy::MidpointAwayFromZero)
        .to_i64()
        .expect("tick count fits in i64")
}
