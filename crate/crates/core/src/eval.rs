//! Directional accuracy by multiclass MCC and size accuracy by pinball loss
//! on correctly called directions, scaled to a baseline model.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::Forecast;
use crate::mixtures::{MixtureError, MoveClass};

pub const QUANTILE_LEVELS: [f64; 2] = [0.5, 0.9];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty confusion matrix")]
    Empty,
    #[error("misaligned inputs: {0}")]
    Shape(String),
    #[error("unknown baseline model {0:?}")]
    UnknownBaseline(String),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
}

/// Square matrix of counts indexed [truth][prediction].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let c = rows.len();
        assert!(rows.iter().all(|r| r.len() == c), "confusion matrix must be square");
        ConfusionMatrix { classes: c, counts: rows.concat() }
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.classes + pred] += 1;
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Gorodkin's multiclass Matthews correlation coefficient; 0 when either
/// marginal is concentrated on a single class.
pub fn mcc(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let s = cm.total() as f64;
    if s == 0.0 {
        return Err(EvalError::Empty);
    }
    let c = cm.classes;
    let correct: f64 = (0..c).map(|k| cm.get(k, k) as f64).sum();
    let t: Vec<f64> = (0..c).map(|k| (0..c).map(|j| cm.get(k, j) as f64).sum()).collect();
    let p: Vec<f64> = (0..c).map(|k| (0..c).map(|i| cm.get(i, k) as f64).sum()).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|a| a * a).sum();
    let tt: f64 = t.iter().map(|a| a * a).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((correct * s - pt) / denom)
}

/// Pinball loss of predicting `q` for outcome `y` at level ρ.
pub fn quantile_loss(y: u64, q: u64, rho: f64) -> f64 {
    let (y, q) = (y as f64, q as f64);
    if y >= q {
        rho * (y - q)
    } else {
        (1.0 - rho) * (q - y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodMetrics {
    pub period: String,
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub mcc: f64,
    /// Samples whose non-zero direction was called correctly.
    pub n_scored: usize,
    /// Mean pinball loss per level in `QUANTILE_LEVELS`; `None` when nothing was scored.
    pub losses: Vec<Option<f64>>,
    /// `losses` divided by the baseline's; `None` when unavailable.
    pub scaled_losses: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub periods: Vec<PeriodMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub baseline: String,
    pub quantile_levels: Vec<f64>,
    pub models: Vec<ModelReport>,
}

fn period_order(labels: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        if !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

fn score_period(period: &str, forecasts: &[&Forecast], truths: &[i64]) -> Result<PeriodMetrics, EvalError> {
    let mut cm = ConfusionMatrix::new(3);
    let mut sums = vec![0.0; QUANTILE_LEVELS.len()];
    let mut scored = 0usize;
    for (f, &y) in forecasts.iter().zip(truths) {
        let truth = MoveClass::of(y);
        let pred = f.point_direction();
        cm.add(truth.index(), pred.index());
        if pred != truth || truth == MoveClass::Zero {
            continue;
        }
        let mut qs = Vec::with_capacity(QUANTILE_LEVELS.len());
        for &rho in &QUANTILE_LEVELS {
            match f.magnitude_quantile(truth, rho)? {
                Some(q) => qs.push(q),
                None => break,
            }
        }
        if qs.len() != QUANTILE_LEVELS.len() {
            continue;
        }
        scored += 1;
        for (i, (&q, &rho)) in qs.iter().zip(&QUANTILE_LEVELS).enumerate() {
            sums[i] += quantile_loss(y.unsigned_abs(), q, rho);
        }
    }
    let losses = sums.iter().map(|s| (scored > 0).then(|| s / scored as f64)).collect();
    Ok(PeriodMetrics {
        period: period.to_string(),
        n: truths.len(),
        mcc: mcc(&cm)?,
        confusion: cm,
        n_scored: scored,
        losses,
        scaled_losses: vec![None; QUANTILE_LEVELS.len()],
    })
}

/// Score every model on every period and scale size losses to `baseline`.
pub fn evaluate(
    models: &[(String, Vec<Forecast>)],
    truths: &[i64],
    periods: &[String],
    baseline: &str,
) -> Result<EvalReport, EvalError> {
    if periods.len() != truths.len() {
        return Err(EvalError::Shape(format!("{} period labels for {} truths", periods.len(), truths.len())));
    }
    for (name, f) in models {
        if f.len() != truths.len() {
            return Err(EvalError::Shape(format!("model {name} has {} forecasts for {} truths", f.len(), truths.len())));
        }
    }
    let order = period_order(periods);
    let mut reports = Vec::with_capacity(models.len());
    for (name, forecasts) in models {
        let mut per = Vec::with_capacity(order.len());
        for p in &order {
            let idx: Vec<usize> = (0..truths.len()).filter(|&i| &periods[i] == p).collect();
            let fs: Vec<&Forecast> = idx.iter().map(|&i| &forecasts[i]).collect();
            let ys: Vec<i64> = idx.iter().map(|&i| truths[i]).collect();
            per.push(score_period(p, &fs, &ys)?);
        }
        reports.push(ModelReport { model: name.clone(), periods: per });
    }
    let base = reports
        .iter()
        .find(|r| r.model == baseline)
        .ok_or_else(|| EvalError::UnknownBaseline(baseline.to_string()))?
        .clone();
    for r in &mut reports {
        for (pm, bm) in r.periods.iter_mut().zip(&base.periods) {
            pm.scaled_losses = pm
                .losses
                .iter()
                .zip(&bm.losses)
                .map(|(l, b)| match (l, b) {
                    (Some(l), Some(b)) if *b > 0.0 => Some(l / b),
                    _ => None,
                })
                .collect();
        }
    }
    Ok(EvalReport { baseline: baseline.to_string(), quantile_levels: QUANTILE_LEVELS.to_vec(), models: reports })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl EvalReport {
    /// Rows of (model, period, metric, value, scaled_value).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,period,metric,value,scaled_value\n");
        for m in &self.models {
            for p in &m.periods {
                let _ = writeln!(out, "{},{},mcc,{},", m.model, p.period, p.mcc);
                for (i, rho) in self.quantile_levels.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},quantile_loss_{rho},{},{}",
                        m.model,
                        p.period,
                        opt(p.losses[i]),
                        opt(p.scaled_losses[i])
                    );
                }
            }
        }
        out
    }

    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == name)
    }
}
