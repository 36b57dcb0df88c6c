//! Turning an event stream into model-ready samples.
//!
//! Each sample is anchored at one event. It carries the `m` most recent events
//! as a covariate window, the past tick moves of the window's events as
//! autoregressive inputs, two static covariates, and the tick move of the
//! reference price `tau` seconds after the anchor as its target.

mod normalize;
pub mod store;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orderflow::{tick_quantize, BookState, OrderFlowError, OrderFlowEvent, Pair};

pub use normalize::NormStats;

/// Number of temporal covariates per event.
pub const TEMPORAL_WIDTH: usize = 5;
/// Column of each temporal covariate inside a window row.
pub const COL_INTERARRIVAL: usize = 0;
pub const COL_SIZE: usize = 1;
pub const COL_TYPE: usize = 2;
pub const COL_SIDE: usize = 3;
pub const COL_PRICE: usize = 4;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Stream(#[from] OrderFlowError),
    #[error("invalid dataset config: {0}")]
    Config(String),
    #[error("dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PriceReference {
    #[default]
    Mid,
    LastTrade,
}

/// Half-open `[start, end)` timestamp interval in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: i64,
    pub end: i64,
}

impl TimeRange {
    pub fn new(start: i64, end: i64) -> Self {
        TimeRange { start, end }
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: TimeRange,
    pub validation: TimeRange,
    pub test: TimeRange,
}

impl SplitRanges {
    pub fn validate(&self) -> Result<(), FeatureError> {
        for (name, r) in [("train", self.train), ("validation", self.validation), ("test", self.test)] {
            if r.start >= r.end {
                return Err(FeatureError::Config(format!("{name} range is empty or reversed")));
            }
        }
        if self.train.end > self.validation.start || self.validation.end > self.test.start {
            return Err(FeatureError::Config("split ranges must be disjoint and ordered train < validation < test".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Window length in events.
    pub m: usize,
    /// Forecast horizon in seconds.
    pub tau: f64,
    pub tick_size: Decimal,
    pub price_reference: PriceReference,
    /// Keep every `stride`-th eligible anchor.
    pub stride: usize,
    /// Anchors earlier than this many seconds after the first event are skipped.
    pub warmup: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            m: 300,
            tau: 15.0,
            tick_size: Decimal::new(1, 2),
            price_reference: PriceReference::Mid,
            stride: 1,
            warmup: 0.0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.m < 2 {
            return Err(FeatureError::Config("m must be >= 2".into()));
        }
        if !(self.tau > 0.0) {
            return Err(FeatureError::Config("tau must be positive".into()));
        }
        if self.tick_size <= Decimal::ZERO {
            return Err(FeatureError::Config("tick size must be positive".into()));
        }
        if self.stride == 0 {
            return Err(FeatureError::Config("stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn tau_micros(&self) -> i64 {
        (self.tau * 1e6).round() as i64
    }
}

/// One training or test datapoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub anchor_timestamp: i64,
    /// Position of the anchor event within its pair's stream.
    pub anchor_seq: u64,
    pub pair: Pair,
    /// UTC hour of the anchor.
    pub hour: u8,
    /// `m` rows of [inter-arrival ms, size, type, side, price], oldest first.
    pub temporal: Vec<[f64; TEMPORAL_WIDTH]>,
    /// Tick move `tau` after each of the first `m - 1` window events.
    pub autoregressive: Vec<f64>,
    /// Entries whose horizon reaches past the anchor; their value is 0.
    pub ar_masked: Vec<bool>,
    pub target: i64,
    /// Reference price at the anchor.
    pub ref_price: f64,
}

impl Sample {
    pub fn window_len(&self) -> usize {
        self.temporal.len()
    }
}

pub fn hour_of_day(timestamp_us: i64) -> u8 {
    timestamp_us.div_euclid(3_600_000_000).rem_euclid(24) as u8
}

/// Reference price after each event, `None` while undefined.
fn replay_prices(events: &[&OrderFlowEvent], tick: Decimal, reference: PriceReference) -> Result<Vec<Option<Decimal>>, FeatureError> {
    let mut book = BookState::new(tick);
    let mut last_trade = None;
    let mut out = Vec::with_capacity(events.len());
    for ev in events {
        let outcome = book.apply(ev)?;
        if let Some(f) = outcome.fills.last() {
            last_trade = Some(f.price);
        }
        out.push(match reference {
            PriceReference::Mid => book.mid_price().ok(),
            PriceReference::LastTrade => last_trade,
        });
    }
    Ok(out)
}

fn build_pair(events: &[&OrderFlowEvent], config: &DatasetConfig, out: &mut Vec<Sample>) -> Result<(), FeatureError> {
    let n = events.len();
    let m = config.m;
    if n < m {
        log::warn!("stream of {n} events is shorter than the window m={m}; no samples");
        return Ok(());
    }
    let tau = config.tau_micros();
    let prices = replay_prices(events, config.tick_size, config.price_reference)?;
    let ts: Vec<i64> = events.iter().map(|e| e.timestamp).collect();
    let t_last = ts[n - 1];
    let warmup_end = ts[0] + (config.warmup * 1e6).round() as i64;

    // Tick move tau after each event: base price right after the event, horizon
    // price as of the last event at or before t + tau.
    let mut moves: Vec<Option<i64>> = Vec::with_capacity(n);
    let mut h = 0usize;
    for j in 0..n {
        let horizon = ts[j] + tau;
        if h < j {
            h = j;
        }
        while h + 1 < n && ts[h + 1] <= horizon {
            h += 1;
        }
        let mv = match (prices[j], prices[h]) {
            (Some(p0), Some(p1)) if horizon <= t_last => Some(tick_quantize(p1 - p0, config.tick_size)),
            _ => None,
        };
        moves.push(mv);
    }

    for j in (m - 1)..n {
        if (j - (m - 1)) % config.stride != 0 {
            continue;
        }
        let t_anchor = ts[j];
        if t_anchor < warmup_end || t_anchor + tau > t_last {
            continue;
        }
        let Some(target) = moves[j] else { continue };
        let first = j + 1 - m;
        let temporal = (first..=j)
            .map(|g| {
                let ev = events[g];
                let dt_ms = if g > 0 { (ts[g] - ts[g - 1]) as f64 / 1000.0 } else { 0.0 };
                [
                    dt_ms,
                    ev.size.to_f64().unwrap_or(0.0),
                    ev.event_type.category() as f64,
                    ev.side.category() as f64,
                    ev.price.to_f64().unwrap_or(0.0),
                ]
            })
            .collect();
        let mut autoregressive = Vec::with_capacity(m - 1);
        let mut ar_masked = Vec::with_capacity(m - 1);
        for g in first..j {
            match moves[g] {
                Some(v) if ts[g] + tau <= t_anchor => {
                    autoregressive.push(v as f64);
                    ar_masked.push(false);
                }
                _ => {
                    autoregressive.push(0.0);
                    ar_masked.push(true);
                }
            }
        }
        out.push(Sample {
            anchor_timestamp: t_anchor,
            anchor_seq: j as u64,
            pair: events[j].pair,
            hour: hour_of_day(t_anchor),
            temporal,
            autoregressive,
            ar_masked,
            target,
            ref_price: prices[j].and_then(|p| p.to_f64()).unwrap_or(0.0),
        });
    }
    Ok(())
}

/// Build samples from a chronological stream. Pairs are replayed through
/// separate emulators and their samples interleaved by anchor time.
pub fn build_dataset(stream: &[OrderFlowEvent], config: &DatasetConfig) -> Result<Vec<Sample>, FeatureError> {
    config.validate()?;
    let mut samples = Vec::new();
    for pair in [Pair::PairA, Pair::PairB] {
        let events: Vec<&OrderFlowEvent> = stream.iter().filter(|e| e.pair == pair).collect();
        if events.is_empty() {
            continue;
        }
        build_pair(&events, config, &mut samples)?;
    }
    sort_samples(&mut samples);
    Ok(samples)
}

pub fn sort_samples(samples: &mut [Sample]) {
    samples.sort_by_key(|s| (s.anchor_timestamp, s.pair, s.anchor_seq));
}

#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Assign samples to splits by anchor time; samples outside every range are dropped.
pub fn split_by_date(samples: Vec<Sample>, ranges: &SplitRanges) -> Result<Splits, FeatureError> {
    ranges.validate()?;
    let mut splits = Splits::default();
    for s in samples {
        let t = s.anchor_timestamp;
        if ranges.train.contains(t) {
            splits.train.push(s);
        } else if ranges.validation.contains(t) {
            splits.validation.push(s);
        } else if ranges.test.contains(t) {
            splits.test.push(s);
        }
    }
    sort_samples(&mut splits.train);
    sort_samples(&mut splits.validation);
    sort_samples(&mut splits.test);
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orderflow::{EventType, Side};
    use std::str::FromStr;

    fn ev(t_s: f64, ty: EventType, side: Side, price: &str, id: &str) -> OrderFlowEvent {
        OrderFlowEvent {
            timestamp: (t_s * 1e6) as i64,
            event_type: ty,
            side,
            price: Decimal::from_str(price).unwrap(),
            size: Decimal::ONE,
            order_id: id.into(),
            pair: Pair::PairA,
        }
    }

    /// Mid rises one tick per second from t=1 s onward.
    fn stepping_stream() -> Vec<OrderFlowEvent> {
        vec![
            ev(0.0, EventType::LimitPlace, Side::Sell, "110.00", "a"),
            ev(0.0, EventType::LimitPlace, Side::Buy, "90.00", "b0"),
            ev(1.0, EventType::LimitPlace, Side::Buy, "90.02", "b1"),
            ev(2.0, EventType::LimitPlace, Side::Buy, "90.04", "b2"),
            ev(3.0, EventType::LimitPlace, Side::Buy, "90.06", "b3"),
            ev(4.0, EventType::LimitPlace, Side::Buy, "90.08", "b4"),
        ]
    }

    fn small_config() -> DatasetConfig {
        DatasetConfig { m: 3, tau: 2.0, ..DatasetConfig::default() }
    }

    #[test]
    fn stepping_prices_give_plus_two() {
        let samples = build_dataset(&stepping_stream(), &small_config()).unwrap();
        // Hand walk: anchors need index >= 2 and t + 2 <= 4, so t = 1 and t = 2.
        assert_eq!(samples.len(), 2);
        assert!(samples.iter().all(|s| s.target == 2));
        assert_eq!(samples[0].anchor_seq, 2);
        assert_eq!(samples[1].anchor_seq, 3);
        // Window of anchor at t=2: events at 0 (b0), 1, 2.
        let s = &samples[1];
        assert_eq!(s.temporal[0][COL_INTERARRIVAL], 0.0);
        assert_eq!(s.temporal[1][COL_INTERARRIVAL], 1000.0);
        assert_eq!(s.temporal[2][COL_PRICE], 90.04);
        assert_eq!(s.temporal[2][COL_TYPE], 1.0);
        assert_eq!(s.temporal[2][COL_SIDE], 1.0);
        // AR entries for events at t=0 (b0) and t=1: horizons 2 <= 2 and 3 > 2.
        assert_eq!(s.autoregressive, vec![2.0, 0.0]);
        assert_eq!(s.ar_masked, vec![false, true]);
        assert!((s.ref_price - 100.02).abs() < 1e-12);
    }

    #[test]
    fn constant_price_targets_zero() {
        let mut events = vec![
            ev(0.0, EventType::LimitPlace, Side::Sell, "101.00", "a"),
            ev(0.0, EventType::LimitPlace, Side::Buy, "99.00", "b"),
        ];
        for i in 0..20 {
            events.push(ev(1.0 + i as f64, EventType::LimitPlace, Side::Buy, "98.00", &format!("x{i}")));
        }
        let samples = build_dataset(&events, &small_config()).unwrap();
        assert!(!samples.is_empty());
        assert!(samples.iter().all(|s| s.target == 0));
    }

    #[test]
    fn anchors_near_end_are_dropped() {
        let samples = build_dataset(&stepping_stream(), &small_config()).unwrap();
        let t_last = 4_000_000;
        assert!(samples.iter().all(|s| s.anchor_timestamp + 2_000_000 <= t_last));
    }

    #[test]
    fn short_stream_gives_empty_dataset() {
        let cfg = DatasetConfig { m: 50, ..small_config() };
        assert!(build_dataset(&stepping_stream(), &cfg).unwrap().is_empty());
    }

    #[test]
    fn stride_thins_anchors() {
        let mut events = vec![
            ev(0.0, EventType::LimitPlace, Side::Sell, "101.00", "a"),
            ev(0.0, EventType::LimitPlace, Side::Buy, "99.00", "b"),
        ];
        for i in 0..40 {
            events.push(ev(0.5 * (1 + i) as f64, EventType::LimitPlace, Side::Buy, "98.00", &format!("x{i}")));
        }
        let all = build_dataset(&events, &small_config()).unwrap();
        let thin = build_dataset(&events, &DatasetConfig { stride: 3, ..small_config() }).unwrap();
        assert_eq!(thin.len(), all.len().div_ceil(3));
    }

    #[test]
    fn hour_uses_utc() {
        assert_eq!(hour_of_day(0), 0);
        assert_eq!(hour_of_day(3_600_000_000 * 25 + 5), 1);
        assert_eq!(hour_of_day(-1), 23);
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(DatasetConfig { m: 1, ..DatasetConfig::default() }.validate().is_err());
        assert!(DatasetConfig { tau: 0.0, ..DatasetConfig::default() }.validate().is_err());
        let r = SplitRanges {
            train: TimeRange::new(0, 10),
            validation: TimeRange::new(5, 20),
            test: TimeRange::new(20, 30),
        };
        assert!(r.validate().is_err());
    }

    fn dummy(t: i64) -> Sample {
        Sample {
            anchor_timestamp: t,
            anchor_seq: t as u64,
            pair: Pair::PairA,
            hour: 0,
            temporal: vec![[0.0; 5]; 2],
            autoregressive: vec![0.0],
            ar_masked: vec![true],
            target: 0,
            ref_price: 1.0,
        }
    }

    #[test]
    fn split_boundaries_are_half_open() {
        let ranges = SplitRanges {
            train: TimeRange::new(0, 10),
            validation: TimeRange::new(10, 20),
            test: TimeRange::new(20, 30),
        };
        let s = split_by_date((0..30).map(dummy).collect(), &ranges).unwrap();
        assert_eq!(s.train.len(), 10);
        assert_eq!(s.validation.first().unwrap().anchor_timestamp, 10);
        assert_eq!(s.test.first().unwrap().anchor_timestamp, 20);

        let all_train = split_by_date((0..8).map(dummy).collect(), &ranges).unwrap();
        assert_eq!(all_train.train.len(), 8);
        assert!(all_train.validation.is_empty() && all_train.test.is_empty());
    }
}
