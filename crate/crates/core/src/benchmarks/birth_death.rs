//! Constant-rate birth-death book model.
//!
//! Limit arrivals are counted per side and per distance from the opposite
//! quote, using the same level convention as the generator, market orders per
//! side, and cancellations per resting order and level bucket. Each rate is the
//! exponential MLE: event count over the time the clock was exposed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::BenchmarkError;
use crate::features::{PriceReference, Sample};
use crate::forecast::{EmpiricalForecast, Forecast};
use crate::orderflow::generator::{bucket_counts, level_bucket, reference_quotes};
use crate::orderflow::{tick_quantize, ArrivalModel, BookState, EventType, OrderFlowEvent, Pair, Side, ZiEngine};
use crate::seed::mix_seed;

/// Default number of simulated continuations per forecast.
pub const DEFAULT_PATHS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthDeathRates {
    pub levels: usize,
    pub tick_size: Decimal,
    /// Limit arrivals per second, indexed `[side][level]`.
    pub limit: [Vec<f64>; 2],
    pub market: [f64; 2],
    /// Per-order cancellation intensity, indexed `[side][level]`.
    pub cancel: [Vec<f64>; 2],
    pub limit_sizes: Vec<Decimal>,
    pub market_sizes: Vec<Decimal>,
    /// Event counts behind each rate, kept for standard errors.
    pub limit_counts: [Vec<u64>; 2],
    pub market_counts: [u64; 2],
    pub cancel_counts: [Vec<u64>; 2],
    /// Seconds observed, summed over pairs.
    pub observation_secs: f64,
    /// Order-seconds resting in each cancel bucket.
    pub cancel_exposure: [Vec<f64>; 2],
}

impl BirthDeathRates {
    /// A model with every clock stopped.
    pub fn frozen(levels: usize, tick_size: Decimal) -> Self {
        BirthDeathRates {
            levels,
            tick_size,
            limit: [vec![0.0; levels], vec![0.0; levels]],
            market: [0.0; 2],
            cancel: [vec![0.0; levels], vec![0.0; levels]],
            limit_sizes: vec![Decimal::ONE],
            market_sizes: vec![Decimal::ONE],
            limit_counts: [vec![0; levels], vec![0; levels]],
            market_counts: [0; 2],
            cancel_counts: [vec![0; levels], vec![0; levels]],
            observation_secs: 0.0,
            cancel_exposure: [vec![0.0; levels], vec![0.0; levels]],
        }
    }

    pub fn validate(&self) -> Result<(), BenchmarkError> {
        let bad = |m: &str| Err(BenchmarkError::Fit(m.into()));
        if self.levels == 0 {
            return bad("levels must be >= 1");
        }
        for s in 0..2 {
            if self.limit[s].len() != self.levels || self.cancel[s].len() != self.levels {
                return bad("rate vectors must have one entry per level");
            }
        }
        let rates = self.limit.iter().chain(&self.cancel).flatten().chain(&self.market);
        if rates.clone().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("rates must be finite and >= 0");
        }
        let limit_on = self.limit.iter().flatten().any(|r| *r > 0.0);
        if limit_on && self.limit_sizes.is_empty() {
            return bad("limit size pool is empty");
        }
        if self.market.iter().any(|r| *r > 0.0) && self.market_sizes.is_empty() {
            return bad("market size pool is empty");
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<(), BenchmarkError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, BenchmarkError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let r: BirthDeathRates = serde_json::from_reader(f)?;
        r.validate()?;
        Ok(r)
    }
}

fn draw<R: Rng + ?Sized>(pool: &[Decimal], rng: &mut R) -> Decimal {
    pool[rng.random_range(0..pool.len())]
}

impl ArrivalModel for BirthDeathRates {
    fn levels(&self) -> usize {
        self.levels
    }

    fn limit_rate(&self, side: Side, level: usize) -> f64 {
        self.limit[side.index()][level]
    }

    fn market_rate(&self, side: Side, _imbalance: f64) -> f64 {
        self.market[side.index()]
    }

    fn cancel_rate(&self, side: Side, level: usize) -> f64 {
        self.cancel[side.index()][level]
    }

    fn limit_size<R: Rng + ?Sized>(&self, rng: &mut R) -> Decimal {
        draw(&self.limit_sizes, rng)
    }

    fn market_size<R: Rng + ?Sized>(&self, rng: &mut R) -> Decimal {
        draw(&self.market_sizes, rng)
    }
}

/// Anchor of an empty-book fallback, tracked the same way the engine does.
fn next_anchor(book: &BookState, prev: Decimal) -> Decimal {
    match (book.best_bid(), book.best_ask()) {
        (Some(b), _) => b,
        (None, Some(a)) => a - book.tick_size(),
        _ => prev,
    }
}

/// Fit constant rates by replaying `stream` through the emulator.
///
/// Limit placements farther than `levels` ticks from the opposite quote, and
/// marketable limits, are outside the model and are not counted (their sizes
/// still enter the pool).
pub fn fit_birth_death(stream: &[OrderFlowEvent], tick_size: Decimal, levels: usize) -> Result<BirthDeathRates, BenchmarkError> {
    if levels == 0 {
        return Err(BenchmarkError::Fit("levels must be >= 1".into()));
    }
    let mut r = BirthDeathRates::frozen(levels, tick_size);
    r.limit_sizes.clear();
    r.market_sizes.clear();
    let mut market_exposure = [0.0f64; 2];
    let mut skipped = 0usize;
    let mut counts = vec![0usize; levels];

    for pair in [Pair::PairA, Pair::PairB] {
        let events: Vec<&OrderFlowEvent> = stream.iter().filter(|e| e.pair == pair).collect();
        let Some(first) = events.first() else { continue };
        let mut book = BookState::new(tick_size);
        let mut anchor = first.price;
        let mut prev_t = first.timestamp;
        for ev in events {
            let dt = (ev.timestamp - prev_t) as f64 / 1e6;
            prev_t = ev.timestamp;
            let refs = reference_quotes(&book, anchor);
            if dt > 0.0 {
                r.observation_secs += dt;
                for side in [Side::Buy, Side::Sell] {
                    bucket_counts(&book, side, refs, levels, &mut counts);
                    for (e, c) in r.cancel_exposure[side.index()].iter_mut().zip(&counts) {
                        *e += *c as f64 * dt;
                    }
                }
                if book.best_ask().is_some() {
                    market_exposure[0] += dt;
                }
                if book.best_bid().is_some() {
                    market_exposure[1] += dt;
                }
            }
            let s = ev.side.index();
            match ev.event_type {
                EventType::LimitPlace => {
                    r.limit_sizes.push(ev.size);
                    let dist = match ev.side {
                        Side::Buy => (refs.1 - ev.price) / tick_size,
                        Side::Sell => (ev.price - refs.0) / tick_size,
                    };
                    let k = dist.round().to_i64().unwrap_or(i64::MAX) - 1;
                    if (0..levels as i64).contains(&k) {
                        r.limit_counts[s][k as usize] += 1;
                    } else {
                        skipped += 1;
                    }
                }
                EventType::Open => {
                    r.market_sizes.push(ev.size);
                    r.market_counts[s] += 1;
                }
                EventType::Cancel => {
                    if let Some((side, price)) = book.order_location(&ev.order_id) {
                        let k = level_bucket(side, price, refs, tick_size, levels);
                        r.cancel_counts[side.index()][k] += 1;
                    }
                }
            }
            book.apply(ev)?;
            anchor = next_anchor(&book, anchor);
        }
    }
    if !(r.observation_secs > 0.0) {
        return Err(BenchmarkError::Fit("stream spans zero observation time".into()));
    }
    if skipped > 0 {
        log::info!("{skipped} limit placements fell outside the {levels} modelled levels");
    }
    let t = r.observation_secs;
    for s in 0..2 {
        for k in 0..levels {
            r.limit[s][k] = r.limit_counts[s][k] as f64 / t;
            let e = r.cancel_exposure[s][k];
            r.cancel[s][k] = if e > 0.0 { r.cancel_counts[s][k] as f64 / e } else { 0.0 };
        }
        r.market[s] = if market_exposure[s] > 0.0 { r.market_counts[s] as f64 / market_exposure[s] } else { 0.0 };
    }
    if r.limit_sizes.is_empty() {
        r.limit_sizes.push(Decimal::ONE);
    }
    if r.market_sizes.is_empty() {
        r.market_sizes.clone_from(&r.limit_sizes);
    }
    Ok(r)
}

/// Book and trade history as of a sample's anchor event.
#[derive(Debug, Clone)]
pub struct AnchorState {
    pub book: BookState,
    pub timestamp: i64,
    pub pair: Pair,
    pub last_trade: Option<Decimal>,
}

/// Replay `stream` once per pair and snapshot the book at every sample anchor.
/// The result is aligned with `samples`.
pub fn anchor_states(stream: &[OrderFlowEvent], samples: &[Sample], tick_size: Decimal) -> Result<Vec<AnchorState>, BenchmarkError> {
    let mut out: Vec<Option<AnchorState>> = vec![None; samples.len()];
    for pair in [Pair::PairA, Pair::PairB] {
        let mut wanted: Vec<(u64, usize)> =
            samples.iter().enumerate().filter(|(_, s)| s.pair == pair).map(|(i, s)| (s.anchor_seq, i)).collect();
        if wanted.is_empty() {
            continue;
        }
        wanted.sort_unstable();
        let mut next = 0usize;
        let mut book = BookState::new(tick_size);
        let mut last_trade = None;
        for (seq, ev) in stream.iter().filter(|e| e.pair == pair).enumerate() {
            if next == wanted.len() {
                break;
            }
            let outcome = book.apply(ev)?;
            if let Some(f) = outcome.fills.last() {
                last_trade = Some(f.price);
            }
            while next < wanted.len() && wanted[next].0 == seq as u64 {
                out[wanted[next].1] =
                    Some(AnchorState { book: book.clone(), timestamp: ev.timestamp, pair, last_trade });
                next += 1;
            }
        }
        if next < wanted.len() {
            return Err(BenchmarkError::MissingAnchor { seq: wanted[next].0 });
        }
    }
    Ok(out.into_iter().map(|s| s.expect("every sample matched")).collect())
}

fn reference_price(book: &BookState, last_trade: Option<Decimal>, reference: PriceReference) -> Option<Decimal> {
    match reference {
        PriceReference::Mid => book.mid_price().ok(),
        PriceReference::LastTrade => last_trade,
    }
}

/// Simulate one continuation and return its tick move. When the reference
/// price becomes undefined along the path, the last defined value is kept.
fn simulate_path(
    rates: &BirthDeathRates,
    state: &AnchorState,
    start: Decimal,
    tau: f64,
    reference: PriceReference,
    seed: u64,
) -> Result<i64, BenchmarkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor = next_anchor(&state.book, start - rates.tick_size);
    let mut engine = ZiEngine::new(state.book.clone(), state.timestamp, anchor, state.pair, "bd")
        .with_last_trade(state.last_trade);
    let mut price = start;
    while engine.step(rates, &mut rng, tau)?.is_some() {
        if let Some(p) = reference_price(engine.book(), engine.last_trade(), reference) {
            price = p;
        }
    }
    Ok(tick_quantize(price - start, rates.tick_size))
}

/// Empirical tick-move forecast from `n_paths` simulated continuations of
/// length `tau` seconds. Path `i` draws from its own stream keyed by
/// `(seed, i)`, so the result does not depend on scheduling.
pub fn forecast_birth_death(
    rates: &BirthDeathRates,
    state: &AnchorState,
    tau: f64,
    reference: PriceReference,
    n_paths: usize,
    seed: u64,
) -> Result<EmpiricalForecast, BenchmarkError> {
    let n_paths = n_paths.max(1);
    let Some(start) = reference_price(&state.book, state.last_trade, reference) else {
        return Ok(EmpiricalForecast::from_moves(&[]));
    };
    let moves: Vec<i64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(rates, state, start, tau, reference, mix_seed(&[seed, i])))
        .collect::<Result<_, _>>()?;
    Ok(EmpiricalForecast::from_moves(&moves))
}

/// One forecast per anchor; anchor `j` uses seed `(seed, j)`.
pub fn forecast_birth_death_batch(
    rates: &BirthDeathRates,
    states: &[AnchorState],
    tau: f64,
    reference: PriceReference,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Forecast>, BenchmarkError> {
    rates.validate()?;
    states
        .iter()
        .enumerate()
        .map(|(j, st)| {
            forecast_birth_death(rates, st, tau, reference, n_paths, mix_seed(&[seed, j as u64])).map(Forecast::Empirical)
        })
        .collect()
}
