use std::collections::{BTreeMap, HashMap, VecDeque};

use rust_decimal::Decimal;

use super::event::{EventType, OrderFlowEvent, Side};
use super::OrderFlowError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestingOrder {
    pub id: String,
    pub size: Decimal,
}

/// One price level: FIFO queue plus its cached aggregate size.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Level {
    pub total: Decimal,
    pub queue: VecDeque<RestingOrder>,
}

/// An execution against a resting order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fill {
    pub maker_id: String,
    pub price: Decimal,
    pub size: Decimal,
    /// The resting order was fully consumed and left the book.
    pub maker_done: bool,
}

/// What applying one event did to the book.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApplyOutcome {
    pub fills: Vec<Fill>,
    /// Size that came to rest (limit orders only).
    pub rested: Decimal,
    /// Size of a resting order removed by a cancel.
    pub cancelled: Option<Decimal>,
    /// Cancel for an order id the book does not hold.
    pub unknown_cancel: bool,
}

/// Aggregated limit-order-book state driven by `apply`.
///
/// Matching follows price-time priority. `Open` orders are immediate-or-cancel:
/// a positive `price` bounds how far they walk the book, a zero price leaves
/// them unbounded. Limit orders that cross the spread trade first and rest
/// the remainder.
#[derive(Debug, Clone)]
pub struct BookState {
    bids: BTreeMap<Decimal, Level>,
    asks: BTreeMap<Decimal, Level>,
    index: HashMap<String, (Side, Decimal)>,
    side_counts: [usize; 2],
    last_event_time: Option<i64>,
    tick_size: Decimal,
}

impl BookState {
    pub fn new(tick_size: Decimal) -> Self {
        assert!(tick_size > Decimal::ZERO, "tick size must be positive");
        BookState {
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            index: HashMap::new(),
            side_counts: [0, 0],
            last_event_time: None,
            tick_size,
        }
    }

    pub fn tick_size(&self) -> Decimal {
        self.tick_size
    }

    pub fn last_event_time(&self) -> Option<i64> {
        self.last_event_time
    }

    pub fn best_bid(&self) -> Option<Decimal> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Decimal> {
        self.asks.keys().next().copied()
    }

    pub fn levels(&self, side: Side) -> &BTreeMap<Decimal, Level> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    pub fn order_count(&self) -> usize {
        self.index.len()
    }

    pub fn side_order_count(&self, side: Side) -> usize {
        self.side_counts[side.index()]
    }

    pub fn contains_order(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn order_location(&self, id: &str) -> Option<(Side, Decimal)> {
        self.index.get(id).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    /// Size resting at the best quote of `side`.
    pub fn top_size(&self, side: Side) -> Option<Decimal> {
        let lvl = match side {
            Side::Buy => self.bids.values().next_back(),
            Side::Sell => self.asks.values().next(),
        };
        lvl.map(|l| l.total)
    }

    pub fn mid_price(&self) -> Result<Decimal, OrderFlowError> {
        match (self.best_bid(), self.best_ask()) {
            (Some(b), Some(a)) => Ok((b + a) / Decimal::TWO),
            _ => Err(OrderFlowError::NoMid),
        }
    }

    /// Books hold the same resting orders in the same queue order.
    pub fn same_orders(&self, other: &BookState) -> bool {
        self.bids == other.bids && self.asks == other.asks && self.index == other.index
    }

    pub fn apply(&mut self, event: &OrderFlowEvent) -> Result<ApplyOutcome, OrderFlowError> {
        if let Some(last) = self.last_event_time {
            if event.timestamp < last {
                return Err(OrderFlowError::Ordering { previous: last, got: event.timestamp });
            }
        }
        let outcome = match event.event_type {
            EventType::LimitPlace => self.place_limit(event)?,
            EventType::Open => {
                let limit = if event.price.is_zero() { None } else { Some(event.price) };
                let mut out = ApplyOutcome::default();
                self.take(event.side, event.size, limit, &mut out);
                out
            }
            EventType::Cancel => self.cancel(&event.order_id),
        };
        self.last_event_time = Some(event.timestamp);
        Ok(outcome)
    }

    fn place_limit(&mut self, event: &OrderFlowEvent) -> Result<ApplyOutcome, OrderFlowError> {
        if self.index.contains_key(&event.order_id) {
            return Err(OrderFlowError::DuplicateOrder(event.order_id.clone()));
        }
        let mut out = ApplyOutcome::default();
        let remaining = self.take(event.side, event.size, Some(event.price), &mut out);
        if remaining > Decimal::ZERO {
            let book = match event.side {
                Side::Buy => &mut self.bids,
                Side::Sell => &mut self.asks,
            };
            let level = book.entry(event.price).or_default();
            level.total += remaining;
            level.queue.push_back(RestingOrder { id: event.order_id.clone(), size: remaining });
            self.index.insert(event.order_id.clone(), (event.side, event.price));
            self.side_counts[event.side.index()] += 1;
            out.rested = remaining;
        }
        Ok(out)
    }

    /// Consume opposite liquidity for an aggressor on `side`; returns unfilled size.
    fn take(&mut self, side: Side, mut size: Decimal, limit: Option<Decimal>, out: &mut ApplyOutcome) -> Decimal {
        while size > Decimal::ZERO {
            let best = match side {
                Side::Buy => self.asks.first_entry(),
                Side::Sell => self.bids.last_entry(),
            };
            let Some(mut entry) = best else { break };
            let price = *entry.key();
            let crosses = match (side, limit) {
                (_, None) => true,
                (Side::Buy, Some(l)) => price <= l,
                (Side::Sell, Some(l)) => price >= l,
            };
            if !crosses {
                break;
            }
            let level = entry.get_mut();
            while size > Decimal::ZERO {
                let Some(front) = level.queue.front_mut() else { break };
                let traded = front.size.min(size);
                front.size -= traded;
                level.total -= traded;
                size -= traded;
                let done = front.size.is_zero();
                out.fills.push(Fill { maker_id: front.id.clone(), price, size: traded, maker_done: done });
                if done {
                    let gone = level.queue.pop_front().expect("front exists");
                    self.index.remove(&gone.id);
                    self.side_counts[side.opposite().index()] -= 1;
                }
            }
            if level.queue.is_empty() {
                entry.remove();
            }
        }
        size
    }

    fn cancel(&mut self, id: &str) -> ApplyOutcome {
        let mut out = ApplyOutcome::default();
        let Some((side, price)) = self.index.remove(id) else {
            log::warn!("cancel for unknown order id {id:?} ignored");
            out.unknown_cancel = true;
            return out;
        };
        let book = match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        };
        let level = book.get_mut(&price).expect("index points at an existing level");
        let pos = level.queue.iter().position(|o| o.id == id).expect("indexed order is queued");
        let removed = level.queue.remove(pos).expect("position is valid");
        self.side_counts[side.index()] -= 1;
        level.total -= removed.size;
        if level.queue.is_empty() {
            book.remove(&price);
        }
        out.cancelled = Some(removed.size);
        out
    }

    /// Full structural check; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let (Some(b), Some(a)) = (self.best_bid(), self.best_ask()) {
            if b >= a {
                return Err(format!("crossed book: bid {b} >= ask {a}"));
            }
        }
        let mut seen = 0usize;
        for (side, book) in [(Side::Buy, &self.bids), (Side::Sell, &self.asks)] {
            let on_side: usize = book.values().map(|l| l.queue.len()).sum();
            if on_side != self.side_counts[side.index()] {
                return Err(format!("{side:?} count {} != queued {on_side}", self.side_counts[side.index()]));
            }
            for (price, level) in book {
                if level.queue.is_empty() {
                    return Err(format!("empty level {price} on {side:?}"));
                }
                let mut sum = Decimal::ZERO;
                for o in &level.queue {
                    if o.size <= Decimal::ZERO {
                        return Err(format!("non-positive queue entry {} at {price}", o.id));
                    }
                    match self.index.get(&o.id) {
                        Some((s, p)) if *s == side && p == price => {}
                        _ => return Err(format!("order {} missing from index", o.id)),
                    }
                    sum += o.size;
                    seen += 1;
                }
                if sum != level.total {
                    return Err(format!("level {price} total {} != queue sum {sum}", level.total));
                }
            }
        }
        if seen != self.index.len() {
            return Err(format!("index holds {} orders, queues hold {seen}", self.index.len()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orderflow::Pair;
    use std::str::FromStr;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    fn ev(t: i64, ty: EventType, side: Side, price: &str, size: &str, id: &str) -> OrderFlowEvent {
        OrderFlowEvent {
            timestamp: t,
            event_type: ty,
            side,
            price: d(price),
            size: d(size),
            order_id: id.into(),
            pair: Pair::PairA,
        }
    }

    #[test]
    fn single_insert_sets_best_bid() {
        let mut book = BookState::new(d("0.01"));
        book.apply(&ev(1, EventType::LimitPlace, Side::Buy, "99.00", "1", "b1")).unwrap();
        assert_eq!(book.best_bid(), Some(d("99.00")));
        assert_eq!(book.best_ask(), None);
        book.apply(&ev(2, EventType::Cancel, Side::Buy, "99.00", "1", "b1")).unwrap();
        assert!(book.is_empty());
        assert!(book.same_orders(&BookState::new(d("0.01"))));
    }

    #[test]
    fn open_buy_partially_consumes_ask() {
        let mut book = BookState::new(d("0.01"));
        book.apply(&ev(1, EventType::LimitPlace, Side::Sell, "101.00", "1.0", "s1")).unwrap();
        let out = book.apply(&ev(2, EventType::Open, Side::Buy, "101.00", "0.4", "m1")).unwrap();
        assert_eq!(out.fills.len(), 1);
        assert_eq!(book.levels(Side::Sell)[&d("101.00")].total, d("0.6"));
        book.check_invariants().unwrap();
    }

    #[test]
    fn open_walks_levels_in_price_time_order() {
        let mut book = BookState::new(d("0.01"));
        book.apply(&ev(1, EventType::LimitPlace, Side::Sell, "101.00", "1", "s1")).unwrap();
        book.apply(&ev(2, EventType::LimitPlace, Side::Sell, "101.00", "1", "s2")).unwrap();
        book.apply(&ev(3, EventType::LimitPlace, Side::Sell, "101.01", "1", "s3")).unwrap();
        let out = book.apply(&ev(4, EventType::Open, Side::Buy, "0", "2.5", "m1")).unwrap();
        let ids: Vec<_> = out.fills.iter().map(|f| f.maker_id.as_str()).collect();
        assert_eq!(ids, ["s1", "s2", "s3"]);
        assert_eq!(book.best_ask(), Some(d("101.01")));
        assert_eq!(book.top_size(Side::Sell), Some(d("0.5")));
        book.check_invariants().unwrap();
    }

    #[test]
    fn protected_open_stops_at_limit() {
        let mut book = BookState::new(d("0.01"));
        book.apply(&ev(1, EventType::LimitPlace, Side::Buy, "99.00", "1", "b1")).unwrap();
        book.apply(&ev(1, EventType::LimitPlace, Side::Buy, "98.99", "1", "b2")).unwrap();
        let out = book.apply(&ev(2, EventType::Open, Side::Sell, "99.00", "5", "m1")).unwrap();
        assert_eq!(out.fills.len(), 1);
        assert_eq!(book.best_bid(), Some(d("98.99")));
    }

    #[test]
    fn crossing_limit_trades_then_rests() {
        let mut book = BookState::new(d("0.01"));
        book.apply(&ev(1, EventType::LimitPlace, Side::Sell, "100.00", "1", "s1")).unwrap();
        let out = book.apply(&ev(2, EventType::LimitPlace, Side::Buy, "100.01", "1.5", "b1")).unwrap();
        assert_eq!(out.rested, d("0.5"));
        assert_eq!(book.best_bid(), Some(d("100.01")));
        assert_eq!(book.best_ask(), None);
        book.check_invariants().unwrap();
    }

    #[test]
    fn timestamp_regression_is_rejected() {
        let mut book = BookState::new(d("0.01"));
        book.apply(&ev(10, EventType::LimitPlace, Side::Buy, "1", "1", "a")).unwrap();
        let err = book.apply(&ev(9, EventType::LimitPlace, Side::Buy, "1", "1", "b")).unwrap_err();
        assert!(matches!(err, OrderFlowError::Ordering { previous: 10, got: 9 }));
    }

    #[test]
    fn unknown_cancel_is_noop() {
        let mut book = BookState::new(d("0.01"));
        book.apply(&ev(1, EventType::LimitPlace, Side::Buy, "1", "1", "a")).unwrap();
        let before = book.clone();
        let out = book.apply(&ev(2, EventType::Cancel, Side::Buy, "1", "1", "zz")).unwrap();
        assert!(out.unknown_cancel);
        assert!(book.same_orders(&before));
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut book = BookState::new(d("0.01"));
        book.apply(&ev(1, EventType::LimitPlace, Side::Buy, "1", "1", "a")).unwrap();
        assert!(book.apply(&ev(1, EventType::LimitPlace, Side::Buy, "2", "1", "a")).is_err());
    }

    #[test]
    fn mid_price_cases() {
        let mut book = BookState::new(d("0.01"));
        book.apply(&ev(1, EventType::LimitPlace, Side::Buy, "99", "1", "a")).unwrap();
        assert!(matches!(book.mid_price(), Err(OrderFlowError::NoMid)));
        book.apply(&ev(1, EventType::LimitPlace, Side::Sell, "101", "1", "b")).unwrap();
        assert_eq!(book.mid_price().unwrap(), d("100"));

        let mut book = BookState::new(d("0.01"));
        book.apply(&ev(1, EventType::LimitPlace, Side::Buy, "99.99", "1", "a")).unwrap();
        book.apply(&ev(1, EventType::LimitPlace, Side::Sell, "100.01", "1", "b")).unwrap();
        assert_eq!(book.mid_price().unwrap(), d("100.00"));
    }
}
