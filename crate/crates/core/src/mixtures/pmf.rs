//! Component log-pmfs over magnitudes and their parameter derivatives.

use statrs::function::gamma::{digamma, ln_gamma};

/// Below this magnitude the negative binomial uses an exact finite sum
/// instead of differences of log-gamma values.
const NB_SUM_LIMIT: u64 = 2048;

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

pub fn poisson_log_pmf(n: u64, lambda: f64) -> f64 {
    let nf = n as f64;
    let lead = if n == 0 { 0.0 } else { nf * lambda.ln() };
    lead - lambda - ln_factorial(n)
}

/// d/dλ of `poisson_log_pmf`.
pub fn poisson_dlambda(n: u64, lambda: f64) -> f64 {
    n as f64 / lambda - 1.0
}

/// ln(e^λ − 1) without overflow.
pub fn ln_expm1(lambda: f64) -> f64 {
    lambda + (-(-lambda).exp_m1()).ln()
}

/// Zero-truncated Poisson; `n` must be at least 1.
pub fn ztp_log_pmf(n: u64, lambda: f64) -> f64 {
    debug_assert!(n >= 1);
    n as f64 * lambda.ln() - ln_factorial(n) - ln_expm1(lambda)
}

pub fn ztp_dlambda(n: u64, lambda: f64) -> f64 {
    n as f64 / lambda - 1.0 / (-(-lambda).exp_m1())
}

/// Negative binomial in mean/shape form: mean μ, variance μ + αμ².
/// Returns (log pmf, d/dμ, d/dα).
pub fn nb_log_pmf_grad(n: u64, mu: f64, alpha: f64) -> (f64, f64, f64) {
    let nf = n as f64;
    let am = alpha * mu;
    let l1p = am.ln_1p();
    let (sum_log, sum_frac) = if n <= NB_SUM_LIMIT {
        let mut s = 0.0;
        let mut f = 0.0;
        for j in 1..n {
            let ja = j as f64 * alpha;
            s += ja.ln_1p();
            f += j as f64 / (1.0 + ja);
        }
        (s, f)
    } else {
        let r = 1.0 / alpha;
        let s = ln_gamma(nf + r) - ln_gamma(r) + nf * alpha.ln();
        let f = nf / alpha - (digamma(nf + r) - digamma(r)) / (alpha * alpha);
        (s, f)
    };
    let lead = if n == 0 { 0.0 } else { nf * mu.ln() };
    let logp = sum_log - ln_factorial(n) + lead - nf * l1p - l1p / alpha;
    let dmu = (nf - mu) / (mu * (1.0 + am));
    let dalpha = sum_frac - nf * mu / (1.0 + am) + l1p / (alpha * alpha) - mu / (alpha * (1.0 + am));
    (logp, dmu, dalpha)
}

pub fn nb_log_pmf(n: u64, mu: f64, alpha: f64) -> f64 {
    nb_log_pmf_grad(n, mu, alpha).0
}
