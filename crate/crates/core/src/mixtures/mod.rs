//! Mixture-density output heads over signed tick moves.
//!
//! Component 0 models downward moves and component 1 upward moves, each over
//! the magnitude |y|. The zero-truncated head adds a third component that is
//! a point mass at y = 0. Raw head scores are laid out as the K mixture
//! scores followed by one rate score per directional component and, for the
//! negative binomial, one shape score per directional component.

pub mod pmf;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use pmf::{nb_log_pmf_grad, poisson_dlambda, poisson_log_pmf, ztp_dlambda, ztp_log_pmf};

#[derive(Debug, Error, PartialEq)]
pub enum MixtureError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// Smallest admissible rate, mean or shape.
pub const MIN_PARAM: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Poisson,
    NegBinomial,
    ZeroTruncPoisson,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Poisson, Family::NegBinomial, Family::ZeroTruncPoisson];

    pub fn components(self) -> usize {
        match self {
            Family::ZeroTruncPoisson => 3,
            _ => 2,
        }
    }

    /// Width of the raw score vector the head produces.
    pub fn n_scores(self) -> usize {
        match self {
            Family::Poisson => 4,
            Family::NegBinomial => 6,
            Family::ZeroTruncPoisson => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::NegBinomial => "neg_binomial",
            Family::ZeroTruncPoisson => "zero_trunc_poisson",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" => Some(Family::Poisson),
            "neg_binomial" | "negbinomial" | "nb" => Some(Family::NegBinomial),
            "zero_trunc_poisson" | "zerotruncpoisson" | "ztp" => Some(Family::ZeroTruncPoisson),
            _ => None,
        }
    }
}

/// Direction of a price move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MoveClass {
    Down,
    Up,
    Zero,
}

impl MoveClass {
    pub const ALL: [MoveClass; 3] = [MoveClass::Down, MoveClass::Up, MoveClass::Zero];

    pub fn of(y: i64) -> MoveClass {
        match y.signum() {
            -1 => MoveClass::Down,
            1 => MoveClass::Up,
            _ => MoveClass::Zero,
        }
    }

    pub fn index(self) -> usize {
        match self {
            MoveClass::Down => 0,
            MoveClass::Up => 1,
            MoveClass::Zero => 2,
        }
    }

    pub fn from_index(i: usize) -> MoveClass {
        MoveClass::ALL[i]
    }

    pub fn sign(self) -> i64 {
        match self {
            MoveClass::Down => -1,
            MoveClass::Up => 1,
            MoveClass::Zero => 0,
        }
    }
}

/// Which mixture components explain an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentAssignment {
    Single(usize),
    /// y = 0 under a two-component head: both components put mass on 0.
    BothComponents,
}

pub fn direction_class(y: i64, family: Family) -> ComponentAssignment {
    match (MoveClass::of(y), family) {
        (MoveClass::Down, _) => ComponentAssignment::Single(0),
        (MoveClass::Up, _) => ComponentAssignment::Single(1),
        (MoveClass::Zero, Family::ZeroTruncPoisson) => ComponentAssignment::Single(2),
        (MoveClass::Zero, _) => ComponentAssignment::BothComponents,
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of `softplus` for y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    scores.iter().map(|s| (s - lse).exp()).collect()
}

fn affine(w_row: &[f64], b: f64, z: &[f64]) -> f64 {
    w_row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + b
}

/// π = softmax(W z + b), W stored row-major with one row per component.
pub fn mixture_probs(z: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n = z.len();
    let scores: Vec<f64> = b.iter().enumerate().map(|(k, &bk)| affine(&w[k * n..(k + 1) * n], bk, z)).collect();
    softmax(&scores)
}

pub fn positive_link(z: &[f64], w_row: &[f64], b: f64) -> f64 {
    softplus(affine(w_row, b, z))
}

/// A fully specified mixture over signed tick moves.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureForecast {
    pub family: Family,
    pub pi: Vec<f64>,
    /// λ for the Poisson families, μ for the negative binomial.
    pub rate: [f64; 2],
    /// α for the negative binomial; unused otherwise.
    pub shape: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct ForecastJson {
    family: Family,
    pi: Vec<f64>,
    params: ParamsJson,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ParamsJson {
    NegBinomial { mu: [f64; 2], alpha: [f64; 2] },
    Poisson { lambda: [f64; 2] },
}

impl Serialize for MixtureForecast {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let params = match self.family {
            Family::NegBinomial => ParamsJson::NegBinomial { mu: self.rate, alpha: self.shape },
            _ => ParamsJson::Poisson { lambda: self.rate },
        };
        ForecastJson { family: self.family, pi: self.pi.clone(), params }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MixtureForecast {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = ForecastJson::deserialize(d)?;
        let (rate, shape) = match (j.family, j.params) {
            (Family::NegBinomial, ParamsJson::NegBinomial { mu, alpha }) => (mu, alpha),
            (Family::Poisson | Family::ZeroTruncPoisson, ParamsJson::Poisson { lambda }) => (lambda, [0.0; 2]),
            _ => return Err(serde::de::Error::custom("params do not match family")),
        };
        let f = MixtureForecast { family: j.family, pi: j.pi, rate, shape };
        f.validate().map_err(serde::de::Error::custom)?;
        Ok(f)
    }
}

impl MixtureForecast {
    pub fn validate(&self) -> Result<(), MixtureError> {
        if self.pi.len() != self.family.components() {
            return Err(MixtureError::Domain("mixture weight count does not match family".into()));
        }
        let sum: f64 = self.pi.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.pi.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(MixtureError::Domain("mixture weights must form a probability vector".into()));
        }
        let shape_ok = self.family != Family::NegBinomial || self.shape.iter().all(|a| *a > 0.0 && a.is_finite());
        if !self.rate.iter().all(|r| *r > 0.0 && r.is_finite()) || !shape_ok {
            return Err(MixtureError::Domain("component parameters must be positive and finite".into()));
        }
        Ok(())
    }

    /// Log pmf of magnitude `n` under directional component `k` (0 or 1).
    pub fn component_log_pmf(&self, k: usize, n: u64) -> Result<f64, MixtureError> {
        component_log_pmf(self.family, self.rate[k], self.shape[k], n)
    }

    pub fn log_likelihood(&self, y: i64) -> f64 {
        log_likelihood(y, self)
    }

    pub fn expected_move(&self) -> [f64; 2] {
        expected_move(self)
    }

    pub fn component_quantile(&self, k: usize, rho: f64) -> Result<u64, MixtureError> {
        component_quantile(self.family, self.rate[k], self.shape[k], rho)
    }
}

pub fn component_log_pmf(family: Family, rate: f64, shape: f64, n: u64) -> Result<f64, MixtureError> {
    Ok(match family {
        Family::Poisson => poisson_log_pmf(n, rate),
        Family::NegBinomial => nb_log_pmf_grad(n, rate, shape).0,
        Family::ZeroTruncPoisson => {
            if n == 0 {
                return Err(MixtureError::Domain("zero-truncated component has no mass at 0".into()));
            }
            ztp_log_pmf(n, rate)
        }
    })
}

/// Map raw head scores to a forecast.
pub fn forecast_from_scores(family: Family, scores: &[f64]) -> MixtureForecast {
    let k = family.components();
    debug_assert_eq!(scores.len(), family.n_scores());
    let pi = softmax(&scores[..k]);
    let rate = [softplus(scores[k]).max(MIN_PARAM), softplus(scores[k + 1]).max(MIN_PARAM)];
    let shape = if family == Family::NegBinomial {
        [softplus(scores[k + 2]).max(MIN_PARAM), softplus(scores[k + 3]).max(MIN_PARAM)]
    } else {
        [0.0; 2]
    };
    MixtureForecast { family, pi, rate, shape }
}

/// Log weight of each active component: ln π_j + ln f_j(|y|).
fn active_terms(y: i64, f: &MixtureForecast) -> Vec<(usize, f64)> {
    let n = y.unsigned_abs();
    let term = |j: usize| -> f64 {
        let lp = if j == 2 { 0.0 } else { f.component_log_pmf(j, n).expect("component admits this magnitude") };
        f.pi[j].ln() + lp
    };
    match direction_class(y, f.family) {
        ComponentAssignment::Single(j) => vec![(j, term(j))],
        ComponentAssignment::BothComponents => vec![(0, term(0)), (1, term(1))],
    }
}

pub fn log_likelihood(y: i64, forecast: &MixtureForecast) -> f64 {
    let terms: Vec<f64> = active_terms(y, forecast).into_iter().map(|(_, a)| a).collect();
    log_sum_exp(&terms)
}

/// Negative log-likelihood of `y` and its gradient with respect to the raw scores.
pub fn nll_score_gradient(y: i64, family: Family, scores: &[f64]) -> (f64, Vec<f64>) {
    let k = family.components();
    let lse_pi = log_sum_exp(&scores[..k]);
    let pi: Vec<f64> = scores[..k].iter().map(|s| (s - lse_pi).exp()).collect();
    let fc = forecast_from_scores(family, scores);
    let n = y.unsigned_abs();

    let mut comps: Vec<(usize, f64, f64, f64)> = Vec::with_capacity(2);
    let mut push = |j: usize| {
        let (lp, drate, dshape) = if j == 2 {
            (0.0, 0.0, 0.0)
        } else {
            let r = fc.rate[j];
            match family {
                Family::Poisson => (poisson_log_pmf(n, r), poisson_dlambda(n, r), 0.0),
                Family::ZeroTruncPoisson => (ztp_log_pmf(n, r), ztp_dlambda(n, r), 0.0),
                Family::NegBinomial => nb_log_pmf_grad(n, r, fc.shape[j]),
            }
        };
        comps.push((j, scores[j] - lse_pi + lp, drate, dshape));
    };
    match direction_class(y, family) {
        ComponentAssignment::Single(j) => push(j),
        ComponentAssignment::BothComponents => {
            push(0);
            push(1);
        }
    }
    let logs: Vec<f64> = comps.iter().map(|c| c.1).collect();
    let ll = log_sum_exp(&logs);

    let mut grad = vec![0.0; scores.len()];
    grad[..k].copy_from_slice(&pi);
    for &(j, a, drate, dshape) in &comps {
        let r = (a - ll).exp();
        grad[j] -= r;
        if j < 2 {
            grad[k + j] = -r * drate * sigmoid(scores[k + j]);
            if family == Family::NegBinomial {
                grad[k + 2 + j] = -r * dshape * sigmoid(scores[k + 2 + j]);
            }
        }
    }
    (-ll, grad)
}

/// Output-layer weights mapping the last dense activation to raw scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    pub family: Family,
    pub width: usize,
    /// Row-major, one row per score.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub nll: f64,
    pub dz: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

pub fn head_scores(w: &[f64], b: &[f64], z: &[f64]) -> Vec<f64> {
    let n = z.len();
    b.iter().enumerate().map(|(r, &br)| affine(&w[r * n..(r + 1) * n], br, z)).collect()
}

impl HeadWeights {
    pub fn zeros(family: Family, width: usize) -> Self {
        HeadWeights { family, width, w: vec![0.0; family.n_scores() * width], b: vec![0.0; family.n_scores()] }
    }

    pub fn scores(&self, z: &[f64]) -> Vec<f64> {
        head_scores(&self.w, &self.b, z)
    }

    pub fn forecast(&self, z: &[f64]) -> MixtureForecast {
        forecast_from_scores(self.family, &self.scores(z))
    }

    /// Gradient of −log_likelihood at z and at the weights.
    pub fn loss_gradient(&self, y: i64, z: &[f64]) -> HeadGradient {
        let scores = self.scores(z);
        let (nll, ds) = nll_score_gradient(y, self.family, &scores);
        let n = self.width;
        let mut dz = vec![0.0; n];
        let mut dw = vec![0.0; self.w.len()];
        for (r, &g) in ds.iter().enumerate() {
            for c in 0..n {
                dw[r * n + c] = g * z[c];
                dz[c] += g * self.w[r * n + c];
            }
        }
        HeadGradient { nll, dz, dw, db: ds }
    }
}

/// Smallest q with CDF(q) ≥ ρ, for one magnitude component.
pub fn component_quantile(family: Family, rate: f64, shape: f64, rho: f64) -> Result<u64, MixtureError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(MixtureError::Domain(format!("quantile level {rho} outside (0, 1)")));
    }
    let mean = match family {
        Family::ZeroTruncPoisson => rate / (-(-rate).exp_m1()),
        _ => rate,
    };
    let mut q = if family == Family::ZeroTruncPoisson { 1 } else { 0 };
    let mut cdf = 0.0;
    loop {
        let p = component_log_pmf(family, rate, shape, q)?.exp();
        let next = cdf + p;
        if next >= rho {
            return Ok(q);
        }
        // Floating saturation in the far tail: the remaining mass is below resolution.
        if next == cdf && q as f64 > mean {
            log::warn!("quantile search saturated at q={q} (rho={rho})");
            return Ok(q);
        }
        cdf = next;
        q += 1;
    }
}

/// Conditional expected magnitude of the down and up components, in ticks.
pub fn expected_move(forecast: &MixtureForecast) -> [f64; 2] {
    let m = |r: f64| match forecast.family {
        Family::ZeroTruncPoisson => r / (-(-r).exp_m1()),
        _ => r,
    };
    [m(forecast.rate[0]), m(forecast.rate[1])]
}

/// Unconditional mean of the signed move.
pub fn mixture_mean(forecast: &MixtureForecast) -> f64 {
    let e = expected_move(forecast);
    forecast.pi[1] * e[1] - forecast.pi[0] * e[0]
}

fn draw_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    match Poisson::new(lambda) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => 0,
    }
}

fn draw_ztp<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda >= 1.0 {
        loop {
            let n = draw_poisson(lambda, rng);
            if n >= 1 {
                return n;
            }
        }
    }
    let mut u: f64 = rng.random::<f64>() * -(-lambda).exp_m1();
    let mut n = 1u64;
    let mut p = (-lambda).exp() * lambda;
    loop {
        if u <= p || p == 0.0 {
            return n;
        }
        u -= p;
        n += 1;
        p *= lambda / n as f64;
    }
}

pub fn sample_magnitude<R: Rng + ?Sized>(family: Family, rate: f64, shape: f64, rng: &mut R) -> u64 {
    match family {
        Family::Poisson => draw_poisson(rate, rng),
        Family::ZeroTruncPoisson => draw_ztp(rate, rng),
        Family::NegBinomial => {
            let g = Gamma::new(1.0 / shape, shape * rate).map(|d| d.sample(rng)).unwrap_or(0.0);
            if g > 0.0 {
                draw_poisson(g, rng)
            } else {
                0
            }
        }
    }
}

pub fn sample_move<R: Rng + ?Sized>(forecast: &MixtureForecast, rng: &mut R) -> i64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = forecast.pi.len() - 1;
    for (j, p) in forecast.pi.iter().enumerate() {
        acc += p;
        if u < acc {
            k = j;
            break;
        }
    }
    if k == 2 {
        return 0;
    }
    let mag = sample_magnitude(forecast.family, forecast.rate[k], forecast.shape[k], rng) as i64;
    if k == 0 {
        -mag
    } else {
        mag
    }
}
