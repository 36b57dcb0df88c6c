use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde_json::Value;

use super::OrderFlowError;

/// Message class as it appears in the feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum EventType {
    /// A resting limit order is placed.
    LimitPlace,
    /// A marketable order that takes liquidity from the opposite side.
    Open,
    /// A resting order is withdrawn.
    Cancel,
}

impl EventType {
    pub fn wire_name(self) -> &'static str {
        match self {
            EventType::LimitPlace => "limit",
            EventType::Open => "open",
            EventType::Cancel => "cancel",
        }
    }

    /// Category code used as a model covariate (1, 2 or 3).
    pub fn category(self) -> u8 {
        match self {
            EventType::LimitPlace => 1,
            EventType::Open => 2,
            EventType::Cancel => 3,
        }
    }

    fn from_wire(s: &str) -> Option<Self> {
        match s {
            "limit" => Some(EventType::LimitPlace),
            "open" => Some(EventType::Open),
            "cancel" => Some(EventType::Cancel),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn wire_name(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }

    /// Category code used as a model covariate (1 or 2).
    pub fn category(self) -> u8 {
        match self {
            Side::Buy => 1,
            Side::Sell => 2,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Buy => 0,
            Side::Sell => 1,
        }
    }

    fn from_wire(s: &str) -> Option<Self> {
        match s {
            "buy" => Some(Side::Buy),
            "sell" => Some(Side::Sell),
            _ => None,
        }
    }
}

/// Traded instrument. Two pairs are supported, matching the two-market setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Pair {
    PairA,
    PairB,
}

impl Pair {
    pub fn wire_name(self) -> &'static str {
        match self {
            Pair::PairA => "A",
            Pair::PairB => "B",
        }
    }

    /// Category code used as a static covariate (1 or 2).
    pub fn category(self) -> u8 {
        match self {
            Pair::PairA => 1,
            Pair::PairB => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Pair> {
        match i {
            0 => Some(Pair::PairA),
            1 => Some(Pair::PairB),
            _ => None,
        }
    }

    fn from_wire(s: &str) -> Option<Self> {
        match s {
            "A" => Some(Pair::PairA),
            "B" => Some(Pair::PairB),
            _ => None,
        }
    }
}

/// One decoded exchange message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderFlowEvent {
    /// Microseconds since the Unix epoch.
    pub timestamp: i64,
    pub event_type: EventType,
    pub side: Side,
    pub price: Decimal,
    pub size: Decimal,
    pub order_id: String,
    pub pair: Pair,
}

impl OrderFlowEvent {
    /// Canonical single-line JSON form. Field order and decimal scale are fixed,
    /// so parsing and re-serializing a canonical line reproduces it byte for byte.
    pub fn to_json(&self) -> String {
        let id = serde_json::to_string(&self.order_id).expect("string serialization is infallible");
        format!(
            "{{\"type\":\"{}\",\"side\":\"{}\",\"price\":\"{}\",\"size\":\"{}\",\"time\":{},\"order_id\":{},\"product_id\":\"{}\"}}",
            self.event_type.wire_name(),
            self.side.wire_name(),
            self.price,
            self.size,
            self.timestamp,
            id,
            self.pair.wire_name()
        )
    }
}

impl fmt::Display for OrderFlowEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &'static str) -> Result<&'a Value, OrderFlowError> {
    obj.get(name).ok_or(OrderFlowError::Schema { field: name, reason: "missing".into() })
}

fn str_field<'a>(obj: &'a serde_json::Map<String, Value>, name: &'static str) -> Result<&'a str, OrderFlowError> {
    field(obj, name)?
        .as_str()
        .ok_or(OrderFlowError::Schema { field: name, reason: "expected a string".into() })
}

fn decimal_field(obj: &serde_json::Map<String, Value>, name: &'static str) -> Result<Decimal, OrderFlowError> {
    let s = str_field(obj, name)?;
    Decimal::from_str(s).map_err(|e| OrderFlowError::Schema { field: name, reason: format!("bad decimal {s:?}: {e}") })
}

/// Decode one JSON message. Unknown fields are ignored.
pub fn parse_message(json_text: &str) -> Result<OrderFlowEvent, OrderFlowError> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| OrderFlowError::Json(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| OrderFlowError::Json("message is not a JSON object".into()))?;

    let type_name = str_field(obj, "type")?;
    let event_type = EventType::from_wire(type_name)
        .ok_or_else(|| OrderFlowError::Schema { field: "type", reason: format!("unknown type {type_name:?}") })?;
    let side_name = str_field(obj, "side")?;
    let side = Side::from_wire(side_name)
        .ok_or_else(|| OrderFlowError::Schema { field: "side", reason: format!("unknown side {side_name:?}") })?;
    let price = decimal_field(obj, "price")?;
    if price.is_sign_negative() && !price.is_zero() {
        return Err(OrderFlowError::Schema { field: "price", reason: "negative price".into() });
    }
    let size = decimal_field(obj, "size")?;
    if size <= Decimal::ZERO {
        return Err(OrderFlowError::Schema { field: "size", reason: "size must be positive".into() });
    }
    let timestamp = field(obj, "time")?
        .as_i64()
        .ok_or(OrderFlowError::Schema { field: "time", reason: "expected integer microseconds".into() })?;
    let order_id = str_field(obj, "order_id")?.to_owned();
    let product = str_field(obj, "product_id")?;
    let pair = Pair::from_wire(product)
        .ok_or_else(|| OrderFlowError::Schema { field: "product_id", reason: format!("unknown product {product:?}") })?;

    Ok(OrderFlowEvent { timestamp, event_type, side, price, size, order_id, pair })
}
