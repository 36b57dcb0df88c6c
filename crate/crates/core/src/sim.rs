//! Kelly-sized trading over monotonically sampled test points.
//!
//! Every model in an experiment trades the same per-scenario sequence of
//! sample indices, so per-scenario results pair up across models. Final
//! capitals are reported raw and divided by what a perfect forecaster made on
//! the same draws.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::features::Sample;
use crate::forecast::Forecast;
use crate::seed::mix_seed;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("degenerate forecast: {0}")]
    DegenerateForecast(String),
    #[error("degenerate test: {0}")]
    Degenerate(String),
    #[error("forecaster {model} has {got} forecasts for {want} samples")]
    Shape { model: String, got: usize, want: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub initial_capital: f64,
    /// Trades per scenario, T.
    pub iterations: usize,
    /// Number of scenarios, K.
    pub scenarios: usize,
    /// Risk-aversion multiplier ε.
    pub epsilon: f64,
    /// Holding period in seconds; must match the dataset horizon.
    pub tau: f64,
    /// Allow |f| > 1. Without leverage fractions are clipped to [-1, 1].
    pub leverage: bool,
    pub tick_size: f64,
    pub seed: u64,
    /// Scenarios whose full trajectories are kept.
    pub trajectory_scenarios: Vec<usize>,
    pub histogram_bins: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            initial_capital: 10_000.0,
            iterations: 500,
            scenarios: 10_000,
            epsilon: 0.1,
            tau: 15.0,
            leverage: true,
            tick_size: 0.01,
            seed: 0,
            trajectory_scenarios: vec![0],
            histogram_bins: 40,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if !(self.initial_capital > 0.0 && self.initial_capital.is_finite()) {
            return bad("initial capital must be positive");
        }
        if self.iterations == 0 || self.scenarios == 0 {
            return bad("iterations and scenarios must be >= 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.tick_size > 0.0) {
            return bad("tick size must be positive");
        }
        if self.histogram_bins == 0 {
            return bad("histogram needs at least one bin");
        }
        Ok(())
    }
}

/// Kelly fraction of capital to put on a trade: positive is long.
///
/// Expected down/up magnitudes are converted to price units before dividing.
/// A direction with zero probability contributes nothing.
pub fn kelly_fraction(price: f64, forecast: &Forecast, epsilon: f64, tick_size: f64) -> Result<f64, SimError> {
    let pi = forecast.direction_probs();
    let y = forecast.expected_magnitudes();
    let term = |k: usize| -> Result<f64, SimError> {
        if pi[k] == 0.0 {
            return Ok(0.0);
        }
        let yk = y[k] * tick_size;
        if !(yk > 0.0 && yk.is_finite()) {
            return Err(SimError::DegenerateForecast(format!("expected move {yk} with probability {}", pi[k])));
        }
        Ok(pi[k] / yk)
    };
    Ok(price * (term(1)? - term(0)?) * epsilon)
}

/// Next index after `prev`, uniform over the rest of the set. `None` once the
/// set is exhausted.
pub fn monotone_sample<R: Rng + ?Sized>(n: usize, prev: Option<usize>, rng: &mut R) -> Option<usize> {
    let lo = prev.map_or(0, |p| p + 1);
    (lo < n).then(|| rng.random_range(lo..n))
}

/// The index sequence a scenario trades: at most `t` strictly increasing draws.
pub fn draw_sequence(n: usize, t: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(t.min(64));
    let mut prev = None;
    while out.len() < t {
        let Some(i) = monotone_sample(n, prev, &mut rng) else { break };
        out.push(i);
        prev = Some(i);
    }
    out
}

/// Anything that can forecast the samples of a test set by position.
pub trait Forecaster: Sync {
    fn forecast(&self, index: usize, sample: &Sample) -> Forecast;
}

impl Forecaster for [Forecast] {
    fn forecast(&self, index: usize, _sample: &Sample) -> Forecast {
        self[index].clone()
    }
}

impl Forecaster for Vec<Forecast> {
    fn forecast(&self, index: usize, _sample: &Sample) -> Forecast {
        self[index].clone()
    }
}

/// Knows every realized move.
pub struct PerfectForecaster;

impl Forecaster for PerfectForecaster {
    fn forecast(&self, _index: usize, sample: &Sample) -> Forecast {
        Forecast::PointMass { move_ticks: sample.target }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub sample_index: usize,
    pub anchor_timestamp: i64,
    pub fraction: f64,
    /// Sign of the position: 1 long, -1 short, 0 flat.
    pub direction: i8,
    pub move_ticks: i64,
    /// Realized change in capital.
    pub pnl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    /// Capital before the first trade and after each one.
    pub trajectory: Vec<f64>,
    pub trades: Vec<Trade>,
    pub final_capital: f64,
    pub bankrupt: bool,
}

/// Trade `draws` in order. Capital compounds; a loss that wipes out the
/// capital ends the scenario at zero.
pub fn run_draws<F: Forecaster + ?Sized>(
    forecaster: &F,
    test: &[Sample],
    draws: &[usize],
    config: &SimConfig,
) -> Result<ScenarioResult, SimError> {
    let mut capital = config.initial_capital;
    let mut trajectory = vec![capital];
    let mut trades = Vec::with_capacity(draws.len());
    let mut bankrupt = false;
    for &i in draws {
        let s = &test[i];
        let forecast = forecaster.forecast(i, s);
        let mut f = kelly_fraction(s.ref_price, &forecast, config.epsilon, config.tick_size)?;
        if !config.leverage {
            f = f.clamp(-1.0, 1.0);
        }
        let ret = s.target as f64 * config.tick_size / s.ref_price;
        let mut next = capital + f * capital * ret;
        if !(next > 0.0) {
            next = 0.0;
            bankrupt = true;
        }
        let direction = if f > 0.0 { 1 } else if f < 0.0 { -1 } else { 0 };
        trades.push(Trade {
            sample_index: i,
            anchor_timestamp: s.anchor_timestamp,
            fraction: f,
            direction,
            move_ticks: s.target,
            pnl: next - capital,
        });
        capital = next;
        trajectory.push(capital);
        if bankrupt {
            break;
        }
    }
    Ok(ScenarioResult { trajectory, trades, final_capital: capital, bankrupt })
}

/// Seed of scenario `k`; model-independent so every model sees the same draws.
pub fn scenario_seed(master: u64, k: usize) -> u64 {
    mix_seed(&[master, 0x51, k as u64])
}

pub fn run_scenario<F: Forecaster + ?Sized>(
    forecaster: &F,
    test: &[Sample],
    config: &SimConfig,
    scenario_seed: u64,
) -> Result<ScenarioResult, SimError> {
    config.validate()?;
    let draws = draw_sequence(test.len(), config.iterations, scenario_seed);
    run_draws(forecaster, test, &draws, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model: String,
    pub finals: Vec<f64>,
    /// `finals` divided by the perfect forecaster's final on the same draws.
    pub scaled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptTrajectory {
    pub model: String,
    pub scenario: usize,
    pub result: ScenarioResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub baseline_finals: Vec<f64>,
    pub models: Vec<ModelRun>,
    pub trajectories: Vec<KeptTrajectory>,
}

impl ExperimentResult {
    pub fn model(&self, name: &str) -> Option<&ModelRun> {
        self.models.iter().find(|m| m.model == name)
    }
}

pub const BASELINE_NAME: &str = "perfect";

/// K scenarios per model on shared draws, plus the perfect baseline.
pub fn run_experiment(
    models: &[(String, &dyn Forecaster)],
    test: &[Sample],
    config: &SimConfig,
) -> Result<ExperimentResult, SimError> {
    config.validate()?;
    if models.is_empty() {
        return Err(SimError::Config("no models to simulate".into()));
    }
    if test.is_empty() {
        return Err(SimError::Config("empty test set".into()));
    }
    let per_scenario: Vec<Result<(f64, Vec<ScenarioResult>), SimError>> = (0..config.scenarios)
        .into_par_iter()
        .map(|k| {
            let draws = draw_sequence(test.len(), config.iterations, scenario_seed(config.seed, k));
            let base = run_draws(&PerfectForecaster, test, &draws, config)?;
            let runs = models.iter().map(|(_, f)| run_draws(*f, test, &draws, config)).collect::<Result<Vec<_>, _>>()?;
            let mut kept = runs;
            kept.push(base.clone());
            Ok((base.final_capital, kept))
        })
        .collect();

    let mut out = ExperimentResult {
        baseline_finals: Vec::with_capacity(config.scenarios),
        models: models.iter().map(|(n, _)| ModelRun { model: n.clone(), finals: vec![], scaled: vec![] }).collect(),
        trajectories: Vec::new(),
    };
    for (k, r) in per_scenario.into_iter().enumerate() {
        let (base, runs) = r?;
        out.baseline_finals.push(base);
        let keep = config.trajectory_scenarios.contains(&k);
        for (j, run) in runs.into_iter().enumerate() {
            if j < models.len() {
                let m = &mut out.models[j];
                m.finals.push(run.final_capital);
                m.scaled.push(run.final_capital / base);
            }
            if keep {
                let model = models.get(j).map_or(BASELINE_NAME.to_string(), |(n, _)| n.clone());
                out.trajectories.push(KeptTrajectory { model, scenario: k, result: run });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
}

/// Paired Student t-test on `a - b`, two-sided.
///
/// Identical inputs give t = 0, p = 1. Differences that are constant but not
/// all zero have no variance and are reported as degenerate.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, SimError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(SimError::Degenerate("paired samples need equal lengths >= 2".into()));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = a.len() - 1;
    if diffs.iter().all(|d| *d == 0.0) {
        return Ok(TTest { t: 0.0, p: 1.0, df, mean_diff: 0.0 });
    }
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(SimError::Degenerate("differences have zero variance".into()));
    }
    let t = mean / (var / n).sqrt();
    let dfv = df as f64;
    let p = beta_reg(dfv / 2.0, 0.5, dfv / (dfv + t * t)).clamp(0.0, 1.0);
    Ok(TTest { t, p, df, mean_diff: mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub benchmark: String,
    pub model: String,
    #[serde(flatten)]
    pub test: TTest,
}

/// One test per (benchmark, model) pair on scaled final capital.
pub fn t_test_table(result: &ExperimentResult, benchmarks: &[String], models: &[String]) -> Result<Vec<TTestRow>, SimError> {
    let mut rows = Vec::new();
    for b in benchmarks {
        let rb = result.model(b).ok_or_else(|| SimError::Config(format!("unknown benchmark {b}")))?;
        for m in models {
            let rm = result.model(m).ok_or_else(|| SimError::Config(format!("unknown model {m}")))?;
            rows.push(TTestRow { benchmark: b.clone(), model: m.clone(), test: paired_t_test(&rm.scaled, &rb.scaled)? });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Counts per model, one per bin.
    pub counts: Vec<(String, Vec<u64>)>,
}

/// Shared-edge histograms of scaled final capital.
pub fn histogram(result: &ExperimentResult, bins: usize) -> Histogram {
    let all = result.models.iter().flat_map(|m| m.scaled.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, if hi > lo { hi } else { lo + 1.0 }) } else { (0.0, 1.0) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let counts = result
        .models
        .iter()
        .map(|m| {
            let mut c = vec![0u64; bins];
            for v in m.scaled.iter().filter(|v| v.is_finite()) {
                let i = (((v - lo) / width) as usize).min(bins - 1);
                c[i] += 1;
            }
            (m.model.clone(), c)
        })
        .collect();
    Histogram { edges, counts }
}

fn write_header<W: Write>(w: &mut W, header: &[String]) -> std::io::Result<()> {
    for h in header {
        writeln!(w, "# {h}")?;
    }
    Ok(())
}

/// Per-scenario finals: model, scenario, final, scaled_final.
pub fn write_scenarios_csv<W: Write>(mut w: W, header: &[String], result: &ExperimentResult) -> std::io::Result<()> {
    write_header(&mut w, header)?;
    writeln!(w, "model,scenario,final,scaled_final")?;
    for m in &result.models {
        for (k, (f, s)) in m.finals.iter().zip(&m.scaled).enumerate() {
            writeln!(w, "{},{k},{f},{s}", m.model)?;
        }
    }
    for (k, f) in result.baseline_finals.iter().enumerate() {
        writeln!(w, "{BASELINE_NAME},{k},{f},1")?;
    }
    Ok(())
}

/// Kept trajectories: model, scenario, step, capital.
pub fn write_trajectories_csv<W: Write>(mut w: W, header: &[String], result: &ExperimentResult) -> std::io::Result<()> {
    write_header(&mut w, header)?;
    writeln!(w, "model,scenario,step,capital")?;
    for t in &result.trajectories {
        for (i, c) in t.result.trajectory.iter().enumerate() {
            writeln!(w, "{},{},{i},{c}", t.model, t.scenario)?;
        }
    }
    Ok(())
}
