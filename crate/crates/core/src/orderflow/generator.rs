//! Zero-intelligence order-flow simulation.
//!
//! Every (type, side, level) pair owns an exponential clock; the engine draws
//! the next firing with the usual competing-exponentials construction. Limit
//! levels are measured in ticks from the opposite best quote (level 0 is one
//! tick inside it), market orders are immediate-or-cancel at the opposite best
//! quote, and cancellations hit individual resting orders.
//!
//! With `signal_strength > 0` the two market-order clocks are tilted by an
//! imbalance signal: a time-decayed, signed sum of limit-order arrivals into the
//! book, squashed through `tanh`. Buy pressure in recent arrivals raises the
//! buy-side market rate and lowers the sell-side one, so mid-price drift over
//! the next few seconds can be read off recent events.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::book::BookState;
use super::event::{EventType, OrderFlowEvent, Pair, Side};
use super::OrderFlowError;

/// Clock intensities and size laws driving a [`ZiEngine`].
pub trait ArrivalModel {
    fn levels(&self) -> usize;
    /// Limit arrivals per second at `level` ticks behind the opposite quote.
    fn limit_rate(&self, side: Side, level: usize) -> f64;
    /// Market arrivals per second given the current imbalance signal in [-1, 1].
    fn market_rate(&self, side: Side, imbalance: f64) -> f64;
    /// Per-order cancellation intensity for orders resting in `level`'s bucket.
    fn cancel_rate(&self, side: Side, level: usize) -> f64;
    fn limit_size<R: Rng + ?Sized>(&self, rng: &mut R) -> Decimal;
    fn market_size<R: Rng + ?Sized>(&self, rng: &mut R) -> Decimal;
    /// `(half_life_secs, scale)` of the imbalance signal, if the model uses one.
    fn imbalance_params(&self) -> Option<(f64, f64)> {
        None
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Number of active limit levels per side.
    pub levels: usize,
    /// Buy limit arrivals per second, one entry per level.
    pub limit_rates_buy: Vec<f64>,
    /// Sell limit arrivals per second, one entry per level.
    pub limit_rates_sell: Vec<f64>,
    pub market_rate_buy: f64,
    pub market_rate_sell: f64,
    /// Cancellation intensity of each resting order, per second.
    pub cancel_rate: f64,
    /// Limit sizes are log-normal with these log-space parameters.
    pub size_log_mean: f64,
    pub size_log_sd: f64,
    /// Market sizes are limit-law draws times this factor.
    pub market_size_scale: f64,
    pub size_decimals: u32,
    /// Coupling of market intensities to the imbalance signal, in [0, 1].
    pub signal_strength: f64,
    pub imbalance_half_life: f64,
    /// Signed arrival volume that maps to `tanh(1)` imbalance.
    pub imbalance_scale: f64,
    pub tick_size: Decimal,
    pub initial_price: Decimal,
    /// Orders seeded at each level on each side at the start of a stream.
    pub initial_depth: usize,
    /// Stream origin, microseconds since the epoch.
    pub start_time: i64,
    pub pair: Pair,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            levels: 5,
            limit_rates_buy: vec![1.6, 1.3, 1.1, 0.9, 0.7],
            limit_rates_sell: vec![1.6, 1.3, 1.1, 0.9, 0.7],
            market_rate_buy: 1.0,
            market_rate_sell: 1.0,
            cancel_rate: 0.25,
            size_log_mean: -0.2,
            size_log_sd: 0.6,
            market_size_scale: 2.0,
            size_decimals: 4,
            signal_strength: 0.0,
            imbalance_half_life: 5.0,
            imbalance_scale: 4.0,
            tick_size: Decimal::new(1, 2),
            initial_price: Decimal::new(10_000, 2),
            initial_depth: 2,
            start_time: 1_510_000_000_000_000,
            pair: Pair::PairA,
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), OrderFlowError> {
        let bad = |reason: String| Err(OrderFlowError::Config(reason));
        if self.levels < 1 {
            return bad("levels must be >= 1".into());
        }
        if self.limit_rates_buy.len() != self.levels || self.limit_rates_sell.len() != self.levels {
            return bad(format!("limit rate vectors must have {} entries", self.levels));
        }
        let all_rates = self
            .limit_rates_buy
            .iter()
            .chain(&self.limit_rates_sell)
            .chain([&self.market_rate_buy, &self.market_rate_sell, &self.cancel_rate]);
        for &r in all_rates {
            if !(r >= 0.0 && r.is_finite()) {
                return bad(format!("rates must be finite and >= 0, got {r}"));
            }
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad("signal_strength must lie in [0, 1]".into());
        }
        if self.signal_strength > 0.0 && !(self.imbalance_half_life > 0.0 && self.imbalance_scale > 0.0) {
            return bad("imbalance half-life and scale must be positive".into());
        }
        if !(self.size_log_sd >= 0.0 && self.market_size_scale > 0.0) {
            return bad("size parameters out of range".into());
        }
        if self.tick_size <= Decimal::ZERO || self.initial_price <= Decimal::ZERO {
            return bad("tick size and initial price must be positive".into());
        }
        Ok(())
    }

    fn total_rate(&self) -> f64 {
        self.limit_rates_buy.iter().sum::<f64>()
            + self.limit_rates_sell.iter().sum::<f64>()
            + self.market_rate_buy
            + self.market_rate_sell
            + self.cancel_rate
    }
}

/// [`ArrivalModel`] view of a generator configuration.
pub struct GeneratorModel<'a> {
    config: &'a GeneratorConfig,
    sizes: LogNormal<f64>,
    unit: Decimal,
}

impl<'a> GeneratorModel<'a> {
    pub fn new(config: &'a GeneratorConfig) -> Result<Self, OrderFlowError> {
        config.validate()?;
        let sizes = LogNormal::new(config.size_log_mean, config.size_log_sd)
            .map_err(|e| OrderFlowError::Config(format!("size law: {e}")))?;
        Ok(GeneratorModel { config, sizes, unit: Decimal::new(1, config.size_decimals) })
    }

    fn quantize_size(&self, x: f64) -> Decimal {
        let scale = 10f64.powi(self.config.size_decimals as i32);
        let units = (x * scale).round().max(1.0) as i64;
        Decimal::new(units, self.config.size_decimals).max(self.unit)
    }
}

impl ArrivalModel for GeneratorModel<'_> {
    fn levels(&self) -> usize {
        self.config.levels
    }

    fn limit_rate(&self, side: Side, level: usize) -> f64 {
        match side {
            Side::Buy => self.config.limit_rates_buy[level],
            Side::Sell => self.config.limit_rates_sell[level],
        }
    }

    fn market_rate(&self, side: Side, imbalance: f64) -> f64 {
        let s = self.config.signal_strength;
        match side {
            Side::Buy => self.config.market_rate_buy * (1.0 + s * imbalance),
            Side::Sell => self.config.market_rate_sell * (1.0 - s * imbalance),
        }
    }

    fn cancel_rate(&self, _side: Side, _level: usize) -> f64 {
        self.config.cancel_rate
    }

    fn limit_size<R: Rng + ?Sized>(&self, rng: &mut R) -> Decimal {
        self.quantize_size(self.sizes.sample(rng))
    }

    fn market_size<R: Rng + ?Sized>(&self, rng: &mut R) -> Decimal {
        self.quantize_size(self.sizes.sample(rng) * self.config.market_size_scale)
    }

    fn imbalance_params(&self) -> Option<(f64, f64)> {
        (self.config.signal_strength > 0.0).then_some((self.config.imbalance_half_life, self.config.imbalance_scale))
    }
}

/// Reference quotes used to place level-relative orders. When a side is empty
/// the opposite quote (or `anchor` for an empty book) stands in one tick away.
pub fn reference_quotes(book: &BookState, anchor: Decimal) -> (Decimal, Decimal) {
    let tick = book.tick_size();
    let bid = book.best_bid();
    let ask = book.best_ask();
    let bid_ref = bid.or(ask.map(|a| a - tick)).unwrap_or(anchor);
    let ask_ref = ask.or(bid.map(|b| b + tick)).unwrap_or(anchor + tick);
    (bid_ref, ask_ref)
}

/// Bucket of a resting order: ticks behind the opposite reference quote minus
/// one, clamped to `[0, levels - 1]`.
pub fn level_bucket(side: Side, price: Decimal, refs: (Decimal, Decimal), tick: Decimal, levels: usize) -> usize {
    let dist = match side {
        Side::Buy => (refs.1 - price) / tick,
        Side::Sell => (price - refs.0) / tick,
    };
    let k = dist.to_i64().unwrap_or(i64::MAX) - 1;
    k.clamp(0, levels as i64 - 1) as usize
}

/// Per-bucket resting-order counts for one side (last bucket collects the rest).
pub(crate) fn bucket_counts(book: &BookState, side: Side, refs: (Decimal, Decimal), levels: usize, out: &mut [usize]) {
    out.iter_mut().for_each(|c| *c = 0);
    let tick = book.tick_size();
    let total = book.side_order_count(side);
    let mut counted = 0usize;
    let mut visit = |price: &Decimal, n: usize| -> bool {
        let k = level_bucket(side, *price, refs, tick, levels);
        if k + 1 >= levels {
            return false;
        }
        out[k] += n;
        counted += n;
        true
    };
    match side {
        Side::Buy => {
            for (p, l) in book.levels(side).iter().rev() {
                if !visit(p, l.queue.len()) {
                    break;
                }
            }
        }
        Side::Sell => {
            for (p, l) in book.levels(side).iter() {
                if !visit(p, l.queue.len()) {
                    break;
                }
            }
        }
    }
    out[levels - 1] += total - counted;
}

/// The `j`-th resting order (in best-to-worst, FIFO order) of `side` within bucket `k`.
fn nth_in_bucket(book: &BookState, side: Side, refs: (Decimal, Decimal), levels: usize, k: usize, mut j: usize) -> (Decimal, String, Decimal) {
    let tick = book.tick_size();
    let iter: Box<dyn Iterator<Item = (&Decimal, &super::book::Level)>> = match side {
        Side::Buy => Box::new(book.levels(side).iter().rev()),
        Side::Sell => Box::new(book.levels(side).iter()),
    };
    for (p, l) in iter {
        if level_bucket(side, *p, refs, tick, levels) != k {
            continue;
        }
        if j < l.queue.len() {
            let o = &l.queue[j];
            return (*p, o.id.clone(), o.size);
        }
        j -= l.queue.len();
    }
    unreachable!("bucket count out of sync with book")
}

/// Stateful simulator: owns a book and advances it one clock firing at a time.
#[derive(Debug, Clone)]
pub struct ZiEngine {
    book: BookState,
    origin: i64,
    clock: f64,
    flow: f64,
    anchor: Decimal,
    next_id: u64,
    id_prefix: String,
    pair: Pair,
    counts: [Vec<usize>; 2],
    last_trade: Option<Decimal>,
}

impl ZiEngine {
    /// `origin` is the wall time (µs) of clock zero; it must not precede the
    /// book's last event.
    pub fn new(book: BookState, origin: i64, anchor: Decimal, pair: Pair, id_prefix: &str) -> Self {
        ZiEngine {
            book,
            origin,
            clock: 0.0,
            flow: 0.0,
            anchor,
            next_id: 0,
            id_prefix: id_prefix.to_owned(),
            pair,
            counts: [Vec::new(), Vec::new()],
            last_trade: None,
        }
    }

    /// Seed the last-trade price, e.g. from a replayed history.
    pub fn with_last_trade(mut self, price: Option<Decimal>) -> Self {
        self.last_trade = price;
        self
    }

    /// Price of the most recent fill, if any.
    pub fn last_trade(&self) -> Option<Decimal> {
        self.last_trade
    }

    pub fn book(&self) -> &BookState {
        &self.book
    }

    pub fn into_book(self) -> BookState {
        self.book
    }

    /// Seconds elapsed since the origin.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn imbalance_flow(&self) -> f64 {
        self.flow
    }

    fn fresh_id(&mut self) -> String {
        let id = format!("{}{}", self.id_prefix, self.next_id);
        self.next_id += 1;
        id
    }

    fn now_us(&self) -> i64 {
        let t = self.origin + (self.clock * 1e6).floor() as i64;
        t.max(self.book.last_event_time().unwrap_or(i64::MIN))
    }

    fn absorb<M: ArrivalModel>(&mut self, model: &M, event: &OrderFlowEvent) -> Result<(), OrderFlowError> {
        let outcome = self.book.apply(event)?;
        if let Some(f) = outcome.fills.last() {
            self.last_trade = Some(f.price);
        }
        if event.event_type == EventType::LimitPlace && model.imbalance_params().is_some() {
            let v = event.size.to_f64().unwrap_or(0.0);
            self.flow += if event.side == Side::Buy { v } else { -v };
        }
        if let Some(b) = self.book.best_bid() {
            self.anchor = b;
        } else if let Some(a) = self.book.best_ask() {
            self.anchor = a - self.book.tick_size();
        }
        Ok(())
    }

    /// Place a limit order at the current clock without drawing a firing time.
    pub fn inject_limit<M: ArrivalModel>(&mut self, model: &M, side: Side, price: Decimal, size: Decimal) -> Result<OrderFlowEvent, OrderFlowError> {
        let event = OrderFlowEvent {
            timestamp: self.now_us(),
            event_type: EventType::LimitPlace,
            side,
            price,
            size,
            order_id: self.fresh_id(),
            pair: self.pair,
        };
        self.absorb(model, &event)?;
        Ok(event)
    }

    /// Advance to the next clock firing. Returns `None` once the next firing
    /// would fall past `horizon` seconds, or when every clock is idle.
    pub fn step<M: ArrivalModel, R: Rng + ?Sized>(&mut self, model: &M, rng: &mut R, horizon: f64) -> Result<Option<OrderFlowEvent>, OrderFlowError> {
        let levels = model.levels();
        let tick = self.book.tick_size();
        let refs = reference_quotes(&self.book, self.anchor);
        let imbalance = match model.imbalance_params() {
            Some((_, scale)) => (self.flow / scale).tanh(),
            None => 0.0,
        };

        for side in [Side::Buy, Side::Sell] {
            let mut buf = std::mem::take(&mut self.counts[side.index()]);
            buf.resize(levels, 0);
            bucket_counts(&self.book, side, refs, levels, &mut buf);
            self.counts[side.index()] = buf;
        }

        let mut limit_total = 0.0;
        for side in [Side::Buy, Side::Sell] {
            for k in 0..levels {
                limit_total += model.limit_rate(side, k);
            }
        }
        let market = [
            if self.book.best_ask().is_some() { model.market_rate(Side::Buy, imbalance).max(0.0) } else { 0.0 },
            if self.book.best_bid().is_some() { model.market_rate(Side::Sell, imbalance).max(0.0) } else { 0.0 },
        ];
        let mut cancel_total = 0.0;
        for side in [Side::Buy, Side::Sell] {
            for k in 0..levels {
                cancel_total += model.cancel_rate(side, k) * self.counts[side.index()][k] as f64;
            }
        }
        let total = limit_total + market[0] + market[1] + cancel_total;
        if !(total > 0.0) {
            return Ok(None);
        }

        let u: f64 = rng.random();
        let dt = -(1.0 - u).ln() / total;
        if self.clock + dt > horizon {
            return Ok(None);
        }
        self.clock += dt;
        if let Some((half_life, _)) = model.imbalance_params() {
            self.flow *= (-dt * std::f64::consts::LN_2 / half_life).exp();
        }

        let mut pick = rng.random::<f64>() * total;
        let timestamp = self.now_us();

        for side in [Side::Buy, Side::Sell] {
            for k in 0..levels {
                let r = model.limit_rate(side, k);
                if pick < r {
                    let offset = tick * Decimal::from(k as u64 + 1);
                    let price = match side {
                        Side::Buy => (refs.1 - offset).max(tick),
                        Side::Sell => refs.0 + offset,
                    };
                    let size = model.limit_size(rng);
                    let event = OrderFlowEvent {
                        timestamp,
                        event_type: EventType::LimitPlace,
                        side,
                        price,
                        size,
                        order_id: self.fresh_id(),
                        pair: self.pair,
                    };
                    self.absorb(model, &event)?;
                    return Ok(Some(event));
                }
                pick -= r;
            }
        }
        for side in [Side::Buy, Side::Sell] {
            let r = market[side.index()];
            if pick < r {
                let price = match side {
                    Side::Buy => self.book.best_ask(),
                    Side::Sell => self.book.best_bid(),
                }
                .expect("market clock only runs against a non-empty side");
                let size = model.market_size(rng);
                let event = OrderFlowEvent {
                    timestamp,
                    event_type: EventType::Open,
                    side,
                    price,
                    size,
                    order_id: self.fresh_id(),
                    pair: self.pair,
                };
                self.absorb(model, &event)?;
                return Ok(Some(event));
            }
            pick -= r;
        }
        // Cancellation: pick a bucket by weight, then an order uniformly inside it.
        let mut chosen = None;
        'outer: for side in [Side::Buy, Side::Sell] {
            for k in 0..levels {
                let n = self.counts[side.index()][k];
                let w = model.cancel_rate(side, k) * n as f64;
                if n > 0 && w > 0.0 {
                    chosen = Some((side, k, n));
                    if pick < w {
                        break 'outer;
                    }
                    pick -= w;
                }
            }
        }
        let (side, k, n) = chosen.expect("positive cancel mass implies a populated bucket");
        let j = rng.random_range(0..n);
        let (price, order_id, size) = nth_in_bucket(&self.book, side, refs, levels, k, j);
        let event = OrderFlowEvent { timestamp, event_type: EventType::Cancel, side, price, size, order_id, pair: self.pair };
        self.absorb(model, &event)?;
        Ok(Some(event))
    }
}

/// Synthesize `duration` seconds of order flow, starting from a seeded book.
///
/// Deterministic in `config.seed`. A zero duration yields an empty stream.
pub fn generate_stream(config: &GeneratorConfig, duration: f64) -> Result<Vec<OrderFlowEvent>, OrderFlowError> {
    let model = GeneratorModel::new(config)?;
    if config.total_rate() <= 0.0 {
        return Err(OrderFlowError::DegenerateConfig);
    }
    if !(duration > 0.0) {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let book = BookState::new(config.tick_size);
    let mut engine = ZiEngine::new(book, config.start_time, config.initial_price - config.tick_size, config.pair, "o");
    let mut events = Vec::new();
    for k in 0..config.levels {
        let offset = config.tick_size * Decimal::from(k as u64 + 1);
        for _ in 0..config.initial_depth {
            let size = model.limit_size(&mut rng);
            events.push(engine.inject_limit(&model, Side::Buy, config.initial_price - offset, size)?);
            let size = model.limit_size(&mut rng);
            events.push(engine.inject_limit(&model, Side::Sell, config.initial_price + offset, size)?);
        }
    }
    while let Some(ev) = engine.step(&model, &mut rng, duration)? {
        events.push(ev);
    }
    Ok(events)
}
