//! Two-component Poisson mixture GLM fitted by EM.
//!
//! Component 0 models down-move magnitudes and component 1 up-move
//! magnitudes, exactly like the Poisson mixture head: a zero move is shared by
//! both components. The weight of the up component is `sigmoid(v · x_static)`
//! and each rate is `exp(β_k · x)`. The M-step runs damped Newton iterations
//! on each concave sub-problem, so the observed log-likelihood never drops.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::BenchmarkError;
use crate::features::{Sample, COL_INTERARRIVAL, COL_SIDE, COL_TYPE};
use crate::mixtures::pmf::ln_factorial;
use crate::mixtures::{sigmoid, Family, MixtureForecast, MIN_PARAM};
use crate::orderflow::{EventType, Side};

/// Names of the sample covariates, in design-matrix order. The first
/// `STATIC_COLS` enter the mixture weights, all of them enter the rates.
pub const COVARIATES: [&str; 8] =
    ["intercept", "hour_sin", "hour_cos", "pair", "limit_frac", "open_frac", "buy_frac", "mean_interarrival"];
pub const STATIC_COLS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Stop once the mean log-likelihood gains less than this in one iteration.
    pub tol: f64,
    /// Newton iterations per sub-problem per M-step.
    pub newton_steps: usize,
    /// Hold the mixture weights fixed instead of fitting them.
    pub pinned_weights: Option<[f64; 2]>,
    /// Use only the intercept column.
    pub intercept_only: bool,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions { max_iter: 500, tol: 1e-8, newton_steps: 5, pinned_weights: None, intercept_only: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmParams {
    pub covariates: Vec<String>,
    /// Standardization applied to the raw covariates (the intercept keeps 0/1).
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Mixture-score coefficients over the static columns.
    pub mix: Vec<f64>,
    pub pinned_weights: Option<[f64; 2]>,
    /// Log-rate coefficients for the down and up components.
    pub rate: [Vec<f64>; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Observed log-likelihood after each EM iteration.
    #[serde(default)]
    pub trace: Vec<f64>,
}

impl GlmParams {
    pub fn save_json(&self, path: &Path) -> Result<(), BenchmarkError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, BenchmarkError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }

    fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(self.center.iter().zip(&self.scale)).map(|(x, (c, s))| (x - c) / s).collect()
    }

    /// Forecast from an already standardized covariate vector.
    pub fn forecast_design(&self, x: &[f64]) -> MixtureForecast {
        let up = match self.pinned_weights {
            Some(w) => w[1],
            None => sigmoid(dot(&self.mix, &x[..self.mix.len()])),
        };
        let rate = [
            dot(&self.rate[0], x).exp().max(MIN_PARAM),
            dot(&self.rate[1], x).exp().max(MIN_PARAM),
        ];
        MixtureForecast { family: Family::Poisson, pi: vec![1.0 - up, up], rate, shape: [0.0; 2] }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raw (unstandardized) covariates of a sample, in `COVARIATES` order.
pub fn glm_covariates(s: &Sample) -> Vec<f64> {
    let m = s.temporal.len().max(1) as f64;
    let angle = 2.0 * PI * s.hour as f64 / 24.0;
    let is = |v: f64, code: u8| (v - code as f64).abs() < 0.5;
    let count = |col: usize, code: u8| s.temporal.iter().filter(|r| is(r[col], code)).count() as f64 / m;
    let mean_dt = s.temporal.iter().map(|r| r[COL_INTERARRIVAL]).sum::<f64>() / m;
    vec![
        1.0,
        angle.sin(),
        angle.cos(),
        s.pair.category() as f64,
        count(COL_TYPE, EventType::LimitPlace.category()),
        count(COL_TYPE, EventType::Open.category()),
        count(COL_SIDE, Side::Buy.category()),
        mean_dt,
    ]
}

pub fn forecast_glm(params: &GlmParams, sample: &Sample) -> MixtureForecast {
    let mut raw = glm_covariates(sample);
    raw.truncate(params.center.len());
    params.forecast_design(&params.standardize(&raw))
}

/// Fit on dataset samples: builds and standardizes the covariates, then runs EM.
pub fn fit_glm(samples: &[Sample], options: &GlmOptions) -> Result<GlmParams, BenchmarkError> {
    if samples.is_empty() {
        return Err(BenchmarkError::Fit("empty training set".into()));
    }
    let width = if options.intercept_only { 1 } else { COVARIATES.len() };
    let raw: Vec<Vec<f64>> = samples.iter().map(|s| glm_covariates(s)[..width].to_vec()).collect();
    let n = raw.len() as f64;
    let mut center = vec![0.0; width];
    let mut scale = vec![1.0; width];
    for j in 1..width {
        let mean = raw.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = raw.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        center[j] = mean;
        if var.sqrt() > 1e-12 {
            scale[j] = var.sqrt();
        }
    }
    let x: Vec<Vec<f64>> =
        raw.iter().map(|r| r.iter().zip(center.iter().zip(&scale)).map(|(v, (c, s))| (v - c) / s).collect()).collect();
    let y: Vec<i64> = samples.iter().map(|s| s.target).collect();
    let static_cols = width.min(STATIC_COLS);
    let mut p = fit_glm_design(&x, static_cols, &y, options)?;
    p.covariates = COVARIATES[..width].iter().map(|s| s.to_string()).collect();
    p.center = center;
    p.scale = scale;
    Ok(p)
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [i64],
    lnfact: Vec<f64>,
}

impl Problem<'_> {
    /// Per-sample log π_k + log f_k(|y|), with -inf for inactive components.
    fn terms(&self, p: &GlmParams, i: usize) -> [f64; 2] {
        let f = p.forecast_design(&self.x[i]);
        let n = self.y[i].unsigned_abs() as f64;
        let lf = |k: usize| {
            let lam = f.rate[k];
            f.pi[k].ln() + n * lam.ln() - lam - self.lnfact[i]
        };
        match self.y[i].signum() {
            -1 => [lf(0), f64::NEG_INFINITY],
            1 => [f64::NEG_INFINITY, lf(1)],
            _ => [lf(0), lf(1)],
        }
    }

    fn log_likelihood(&self, p: &GlmParams) -> f64 {
        (0..self.y.len())
            .map(|i| {
                let [a, b] = self.terms(p, i);
                let m = a.max(b);
                if m == f64::NEG_INFINITY {
                    return m;
                }
                m + ((a - m).exp() + (b - m).exp()).ln()
            })
            .sum()
    }

    fn responsibilities(&self, p: &GlmParams) -> Vec<[f64; 2]> {
        (0..self.y.len())
            .map(|i| {
                let [a, b] = self.terms(p, i);
                match self.y[i].signum() {
                    -1 => [1.0, 0.0],
                    1 => [0.0, 1.0],
                    _ => {
                        let r1 = sigmoid(b - a);
                        if r1.is_nan() {
                            [0.5, 0.5]
                        } else {
                            [1.0 - r1, r1]
                        }
                    }
                }
            })
            .collect()
    }
}

/// Weighted sums for one concave sub-problem: value, gradient, and the
/// negated Hessian (row-major), accumulated from per-row terms.
struct Accum {
    f: f64,
    g: Vec<f64>,
    h: Vec<f64>,
}

impl Accum {
    fn new(d: usize) -> Self {
        Accum { f: 0.0, g: vec![0.0; d], h: vec![0.0; d * d] }
    }

    /// Add `f`, `a·x` to the gradient and `c·x xᵀ` to the negated Hessian.
    fn add(&mut self, f: f64, a: f64, c: f64, x: &[f64]) {
        let d = x.len();
        self.f += f;
        for j in 0..d {
            self.g[j] += a * x[j];
            let cx = c * x[j];
            for l in 0..d {
                self.h[j * d + l] += cx * x[l];
            }
        }
    }
}

/// Maximize a smooth concave objective by Newton steps with step halving.
fn newton<V, D>(beta: &mut [f64], steps: usize, value: V, derivs: D)
where
    V: Fn(&[f64]) -> f64,
    D: Fn(&[f64]) -> Accum,
{
    let d = beta.len();
    for _ in 0..steps {
        let acc = derivs(beta);
        let g = DVector::from_vec(acc.g);
        if g.norm() < 1e-12 {
            return;
        }
        let mut h = DMatrix::from_row_slice(d, d, &acc.h);
        let ridge = 1e-10 * (1.0 + h.diagonal().abs().max());
        for j in 0..d {
            h[(j, j)] += ridge;
        }
        let Some(chol) = h.cholesky() else { return };
        let step = chol.solve(&g);
        let f0 = acc.f;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let f1 = value(&cand);
            if f1 >= f0 {
                beta.copy_from_slice(&cand);
                accepted = f1 - f0 > 1e-14 * (1.0 + f0.abs());
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return;
        }
    }
}

fn poisson_term(w: f64, y: f64, eta: f64) -> f64 {
    w * (y * eta - eta.exp())
}

/// ln σ(s) weighted by t plus ln(1 - σ(s)) weighted by 1 - t, written stably.
fn logistic_term(t: f64, s: f64) -> f64 {
    t * s - (s.max(0.0) + (-s.abs()).exp().ln_1p())
}

/// EM on a ready design matrix. The first `static_cols` columns of each row
/// feed the mixture weights.
pub fn fit_glm_design(x: &[Vec<f64>], static_cols: usize, y: &[i64], options: &GlmOptions) -> Result<GlmParams, BenchmarkError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(BenchmarkError::Fit("design and targets must be non-empty and aligned".into()));
    }
    let d = x[0].len();
    if d == 0 || static_cols > d || x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(BenchmarkError::Fit("design rows must share a finite, non-empty width".into()));
    }
    if let Some(w) = options.pinned_weights {
        if (w[0] + w[1] - 1.0).abs() > 1e-12 || w.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(BenchmarkError::Fit("pinned weights must be a probability vector".into()));
        }
    }
    let n = y.len() as f64;
    let prob = Problem { x, y, lnfact: y.iter().map(|v| ln_factorial(v.unsigned_abs())).collect() };

    // Start from the marginal direction split and mean magnitudes.
    let mean_mag = |sign: i64| {
        let v: Vec<f64> = y.iter().filter(|t| t.signum() == sign || **t == 0).map(|t| t.unsigned_abs() as f64).collect();
        (v.iter().sum::<f64>() / v.len().max(1) as f64).max(0.1)
    };
    let ups = y.iter().filter(|t| **t > 0).count() as f64;
    let downs = y.iter().filter(|t| **t < 0).count() as f64;
    let up0 = ((ups + 1.0) / (ups + downs + 2.0)).clamp(1e-3, 1.0 - 1e-3);
    let mut p = GlmParams {
        covariates: (0..d).map(|j| format!("x{j}")).collect(),
        center: vec![0.0; d],
        scale: vec![1.0; d],
        mix: vec![0.0; static_cols],
        pinned_weights: options.pinned_weights,
        rate: [vec![0.0; d], vec![0.0; d]],
        log_likelihood: f64::NEG_INFINITY,
        iterations: 0,
        converged: false,
        trace: Vec::new(),
    };
    if static_cols > 0 {
        p.mix[0] = (up0 / (1.0 - up0)).ln();
    }
    p.rate[0][0] = mean_mag(-1).ln();
    p.rate[1][0] = mean_mag(1).ln();

    let mut ll = prob.log_likelihood(&p);
    for it in 0..options.max_iter {
        let r = prob.responsibilities(&p);
        for k in 0..2 {
            let weight: f64 = r.iter().map(|ri| ri[k]).sum();
            if weight < 1e-12 {
                continue;
            }
            let rk = |i: usize| r[i][k];
            let value = |beta: &[f64]| {
                x.iter().enumerate().filter(|(i, _)| rk(*i) > 0.0).map(|(i, xi)| {
                    poisson_term(rk(i), y[i].unsigned_abs() as f64, dot(beta, xi))
                }).sum::<f64>()
            };
            let derivs = |beta: &[f64]| {
                let mut acc = Accum::new(d);
                for (i, xi) in x.iter().enumerate() {
                    let w = rk(i);
                    if w == 0.0 {
                        continue;
                    }
                    let eta = dot(beta, xi);
                    let mu = eta.exp();
                    let yi = y[i].unsigned_abs() as f64;
                    acc.add(poisson_term(w, yi, eta), w * (yi - mu), w * mu, xi);
                }
                acc
            };
            newton(&mut p.rate[k], options.newton_steps, value, derivs);
        }
        if options.pinned_weights.is_none() && static_cols > 0 {
            let value = |v: &[f64]| {
                x.iter().enumerate().map(|(i, xi)| logistic_term(r[i][1], dot(v, &xi[..static_cols]))).sum::<f64>()
            };
            let derivs = |v: &[f64]| {
                let mut acc = Accum::new(static_cols);
                for (i, xi) in x.iter().enumerate() {
                    let xs = &xi[..static_cols];
                    let s = dot(v, xs);
                    let q = sigmoid(s);
                    acc.add(logistic_term(r[i][1], s), r[i][1] - q, q * (1.0 - q), xs);
                }
                acc
            };
            newton(&mut p.mix, options.newton_steps, value, derivs);
        }
        let new_ll = prob.log_likelihood(&p);
        p.iterations = it + 1;
        if new_ll < ll - 1e-9 * (1.0 + ll.abs()) {
            return Err(BenchmarkError::Fit(format!("EM decreased the log-likelihood at iteration {it}: {ll} -> {new_ll}")));
        }
        p.trace.push(new_ll);
        let gain = (new_ll - ll) / n;
        ll = new_ll;
        if gain < options.tol {
            p.converged = true;
            break;
        }
    }
    if !p.converged {
        log::warn!("GLM EM stopped at {} iterations without converging", options.max_iter);
    }
    p.log_likelihood = ll;
    if !ll.is_finite() || p.rate.iter().flatten().chain(&p.mix).any(|c| !c.is_finite()) {
        return Err(BenchmarkError::Fit("EM produced non-finite parameters".into()));
    }
    Ok(p)
}
