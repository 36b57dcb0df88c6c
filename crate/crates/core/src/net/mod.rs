//! Recurrent network with categorical embeddings, stacked LSTM layers, a
//! dense stack, and a mixture-density head, with hand-written reverse-mode
//! gradients through time.
//!
//! All parameters live in one flat vector; [`Layout`] names the blocks.

pub mod adam;
pub mod checkpoint;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Sample, COL_INTERARRIVAL, COL_PRICE, COL_SIDE, COL_SIZE, COL_TYPE};
use crate::mixtures::{self, head_scores, nll_score_gradient, softplus_inv, Family, MixtureForecast};

pub use adam::AdamState;
pub use train::{batch_loss_and_grad, mean_nll, train, EpochLog, TrainConfig, TrainOutcome, TrainState};

pub const CARD_TYPE: usize = 3;
pub const CARD_SIDE: usize = 2;
pub const CARD_HOUR: usize = 24;
pub const CARD_PAIR: usize = 2;

/// Continuous per-step inputs: inter-arrival, size, price, previous move, mask flag.
const CONTINUOUS_INPUTS: usize = 5;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("category {category} out of range for {table} (cardinality {cardinality})")]
    Index { table: &'static str, category: usize, cardinality: usize },
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("empty {0} set")]
    EmptySplit(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticMode {
    /// Embed hour and pair and append them to every step's input.
    Repeat,
    /// Project the raw static values through one dense layer joined to the last hidden state.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub layers: usize,
    pub state_size: usize,
    pub dense_layers: usize,
    pub dense_width: usize,
    pub emb_type: usize,
    pub emb_side: usize,
    pub emb_hour: usize,
    pub emb_pair: usize,
    pub static_mode: StaticMode,
    pub static_dense_width: usize,
    pub keep_prob: f64,
    pub embed_activation: Activation,
    pub dense_activation: Activation,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            layers: 1,
            state_size: 32,
            dense_layers: 1,
            dense_width: 32,
            emb_type: 4,
            emb_side: 4,
            emb_hour: 4,
            emb_pair: 4,
            static_mode: StaticMode::Repeat,
            static_dense_width: 4,
            keep_prob: 0.9,
            embed_activation: Activation::Tanh,
            dense_activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let err = |m: &str| Err(NetError::Config(m.into()));
        if self.layers == 0 || self.dense_layers == 0 {
            return err("need at least one recurrent and one dense layer");
        }
        if self.state_size == 0 || self.dense_width == 0 {
            return err("layer widths must be positive");
        }
        if self.emb_type == 0 || self.emb_side == 0 {
            return err("embedding dimensions must be positive");
        }
        match self.static_mode {
            StaticMode::Repeat if self.emb_hour == 0 || self.emb_pair == 0 => return err("static embeddings must be positive"),
            StaticMode::Dense if self.static_dense_width == 0 => return err("static dense width must be positive"),
            _ => {}
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return err("keep probability must lie in (0, 1]");
        }
        Ok(())
    }
}

/// A weight matrix (row-major, `rows × cols`) and bias of length `b_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub w: usize,
    pub b: usize,
    pub rows: usize,
    pub cols: usize,
    pub b_len: usize,
}

impl Block {
    pub fn w_range(&self) -> std::ops::Range<usize> {
        self.w..self.w + self.rows * self.cols
    }

    pub fn b_range(&self) -> std::ops::Range<usize> {
        self.b..self.b + self.b_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Embedding tables: `rows` is the cardinality, `cols` the dimension.
    pub emb_type: Block,
    pub emb_side: Block,
    pub emb_hour: Option<Block>,
    pub emb_pair: Option<Block>,
    pub static_dense: Option<Block>,
    /// One block per layer with `4H × (in + H)` weights, gate rows ordered i, f, o, g.
    pub lstm: Vec<Block>,
    pub dense: Vec<Block>,
    pub head: Block,
    pub step_input: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(config: &NetConfig, family: Family) -> Result<Layout, NetError> {
        config.validate()?;
        let mut off = 0usize;
        let mut alloc = |rows: usize, cols: usize, b_len: usize| {
            let b = Block { w: off, b: off + rows * cols, rows, cols, b_len };
            off += rows * cols + b_len;
            b
        };
        let emb_type = alloc(CARD_TYPE, config.emb_type, config.emb_type);
        let emb_side = alloc(CARD_SIDE, config.emb_side, config.emb_side);
        let (emb_hour, emb_pair, static_dense) = match config.static_mode {
            StaticMode::Repeat => (
                Some(alloc(CARD_HOUR, config.emb_hour, config.emb_hour)),
                Some(alloc(CARD_PAIR, config.emb_pair, config.emb_pair)),
                None,
            ),
            StaticMode::Dense => (None, None, Some(alloc(config.static_dense_width, 2, config.static_dense_width))),
        };
        let repeat_width = emb_hour.map_or(0, |b| b.cols) + emb_pair.map_or(0, |b| b.cols);
        let step_input = config.emb_type + config.emb_side + CONTINUOUS_INPUTS + repeat_width;
        let h = config.state_size;
        let mut lstm = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let input = if l == 0 { step_input } else { h };
            lstm.push(alloc(4 * h, input + h, 4 * h));
        }
        let mut dense = Vec::with_capacity(config.dense_layers);
        for d in 0..config.dense_layers {
            let input = if d == 0 { h + static_dense.map_or(0, |b| b.rows) } else { config.dense_width };
            dense.push(alloc(config.dense_width, input, config.dense_width));
        }
        let head = alloc(family.n_scores(), config.dense_width, family.n_scores());
        Ok(Layout { emb_type, emb_side, emb_hour, emb_pair, static_dense, lstm, dense, head, step_input, total: off })
    }
}

/// Activated embedding lookup: g(row + b).
pub fn embed(category: usize, w: &[f64], b: &[f64], activation: Activation, table: &'static str) -> Result<Vec<f64>, NetError> {
    let dim = b.len();
    let cardinality = w.len() / dim.max(1);
    if category >= cardinality {
        return Err(NetError::Index { table, category, cardinality });
    }
    Ok(w[category * dim..(category + 1) * dim].iter().zip(b).map(|(x, bb)| activation.apply(x + bb)).collect())
}

fn logistic(x: f64) -> f64 {
    mixtures::sigmoid(x)
}

/// One LSTM step. `w` is `4H × (in + H)` with gate rows ordered i, f, o, g.
/// Returns (hidden, cell, activated gates).
pub fn lstm_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    w: &[f64],
    b: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), NetError> {
    if x.iter().chain(h_prev).chain(c_prev).any(|v| !v.is_finite()) {
        return Err(NetError::Numeric("LSTM input".into()));
    }
    let h = h_prev.len();
    let cols = x.len() + h;
    if w.len() != 4 * h * cols || b.len() != 4 * h || c_prev.len() != h {
        return Err(NetError::Config("LSTM shape mismatch".into()));
    }
    let mut xh = Vec::with_capacity(cols);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);
    let mut gates = vec![0.0; 4 * h];
    let mut c = vec![0.0; h];
    let mut hn = vec![0.0; h];
    lstm_cell(&xh, c_prev, w, b, &mut gates, &mut c, &mut hn);
    Ok((hn, c, gates))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Core cell arithmetic on a pre-concatenated [x; h_prev].
fn lstm_cell(xh: &[f64], c_prev: &[f64], w: &[f64], b: &[f64], gates: &mut [f64], c: &mut [f64], h: &mut [f64]) {
    let hs = c.len();
    let cols = xh.len();
    for r in 0..4 * hs {
        let a = dot(&w[r * cols..(r + 1) * cols], xh) + b[r];
        gates[r] = if r < 3 * hs { logistic(a) } else { a.tanh() };
    }
    for k in 0..hs {
        let (i, f, o, g) = (gates[k], gates[hs + k], gates[2 * hs + k], gates[3 * hs + k]);
        c[k] = f * c_prev[k] + i * g;
        h[k] = o * c[k].tanh();
    }
}

/// Inverted-dropout mask: each entry is 1/keep with probability `keep`, else 0.
pub fn inverted_dropout_mask<R: Rng + ?Sized>(rng: &mut R, n: usize, keep: f64) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
}

fn dropout_mask(rng: &mut Option<ChaCha8Rng>, n: usize, keep: f64) -> Vec<f64> {
    match rng {
        Some(r) if keep < 1.0 => inverted_dropout_mask(r, n, keep),
        _ => Vec::new(),
    }
}

fn apply_mask(v: &mut [f64], mask: &[f64]) {
    if !mask.is_empty() {
        v.iter_mut().zip(mask).for_each(|(x, m)| *x *= m);
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: usize,
    /// Per step [x (after dropout); h_prev].
    xh: Vec<f64>,
    mask: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Vec<f64>,
    mask: Vec<f64>,
    out: Vec<f64>,
}

/// Intermediates of one forward pass, consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    steps: usize,
    type_cat: Vec<usize>,
    side_cat: Vec<usize>,
    hour: usize,
    pair: usize,
    emb_type: Vec<f64>,
    emb_side: Vec<f64>,
    emb_hour: Vec<f64>,
    emb_pair: Vec<f64>,
    static_raw: [f64; 2],
    static_out: Vec<f64>,
    layers: Vec<LayerCache>,
    dense: Vec<DenseCache>,
    head_in: Vec<f64>,
    head_mask: Vec<f64>,
    /// Output of the last dense layer.
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetConfig,
    pub family: Family,
    pub layout: Layout,
    pub params: Vec<f64>,
}

fn category(v: f64, table: &'static str, cardinality: usize) -> Result<usize, NetError> {
    let c = v.round();
    if !(c >= 1.0 && c <= cardinality as f64) {
        return Err(NetError::Index { table, category: c.max(0.0) as usize, cardinality });
    }
    Ok(c as usize - 1)
}

impl Network {
    /// Fresh network with fan-in scaled uniform weights and forget-gate bias 1.
    pub fn new(config: NetConfig, family: Family) -> Result<Network, NetError> {
        let layout = Layout::new(&config, family)?;
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::mix_seed(&[config.seed, 0x1417]));
        let mut uniform = |p: &mut [f64], fan_in: usize| {
            let a = 1.0 / (fan_in.max(1) as f64).sqrt();
            p.iter_mut().for_each(|x| *x = rng.random_range(-a..a));
        };
        for blk in [layout.emb_type, layout.emb_side].into_iter().chain(layout.emb_hour).chain(layout.emb_pair) {
            uniform(&mut params[blk.w_range()], blk.rows);
        }
        if let Some(blk) = layout.static_dense {
            uniform(&mut params[blk.w_range()], blk.cols);
        }
        let h = config.state_size;
        for blk in &layout.lstm {
            uniform(&mut params[blk.w_range()], blk.cols);
            params[blk.b + h..blk.b + 2 * h].iter_mut().for_each(|x| *x = 1.0);
        }
        for blk in layout.dense.iter().chain(std::iter::once(&layout.head)) {
            uniform(&mut params[blk.w_range()], blk.cols);
        }
        let mut net = Network { config, family, layout, params };
        net.init_head_bias(1.0, 1.5);
        Ok(net)
    }

    /// Set head biases so initial rates match the given mean magnitudes.
    /// `mean_abs` covers all targets, `mean_abs_nonzero` only non-zero ones.
    pub fn init_head_bias(&mut self, mean_abs: f64, mean_abs_nonzero: f64) {
        let k = self.family.components();
        let b = self.layout.head.b;
        let rate = match self.family {
            Family::ZeroTruncPoisson => {
                // Solve λ / (1 − e^−λ) = mean by fixed-point iteration.
                let m = mean_abs_nonzero.max(1.0 + 1e-6);
                let mut lambda = m;
                for _ in 0..200 {
                    lambda = m * -(-lambda).exp_m1();
                }
                lambda.max(1e-3)
            }
            _ => mean_abs.max(0.05),
        };
        for j in 0..k {
            self.params[b + j] = 0.0;
        }
        self.params[b + k] = softplus_inv(rate);
        self.params[b + k + 1] = softplus_inv(rate);
        if self.family == Family::NegBinomial {
            self.params[b + k + 2] = softplus_inv(0.5);
            self.params[b + k + 3] = softplus_inv(0.5);
        }
    }

    pub fn init_head_from_targets(&mut self, targets: &[i64]) {
        if targets.is_empty() {
            return;
        }
        let mean_abs = targets.iter().map(|y| y.unsigned_abs() as f64).sum::<f64>() / targets.len() as f64;
        let nz: Vec<f64> = targets.iter().filter(|y| **y != 0).map(|y| y.unsigned_abs() as f64).collect();
        let mean_nz = if nz.is_empty() { 1.0 } else { nz.iter().sum::<f64>() / nz.len() as f64 };
        self.init_head_bias(mean_abs, mean_nz);
    }

    fn slice(&self, r: std::ops::Range<usize>) -> &[f64] {
        &self.params[r]
    }

    /// Forward pass. `mask_seed` switches on training mode with dropout masks
    /// drawn from that seed; `None` is evaluation mode.
    pub fn forward(&self, sample: &Sample, mask_seed: Option<u64>) -> Result<ForwardCache, NetError> {
        let cfg = &self.config;
        let lay = &self.layout;
        let steps = sample.temporal.len();
        if steps == 0 || sample.autoregressive.len() + 1 != steps || sample.ar_masked.len() + 1 != steps {
            return Err(NetError::Config("sample window shape mismatch".into()));
        }
        let mut rng = mask_seed.map(ChaCha8Rng::seed_from_u64);
        let keep = cfg.keep_prob;
        let ea = cfg.embed_activation;

        let mut type_cat = Vec::with_capacity(steps);
        let mut side_cat = Vec::with_capacity(steps);
        let mut emb_type = Vec::with_capacity(steps * cfg.emb_type);
        let mut emb_side = Vec::with_capacity(steps * cfg.emb_side);
        for row in &sample.temporal {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(NetError::Numeric("sample covariate".into()));
            }
            let t = category(row[COL_TYPE], "order type", CARD_TYPE)?;
            let s = category(row[COL_SIDE], "side", CARD_SIDE)?;
            emb_type.extend(embed(t, self.slice(lay.emb_type.w_range()), self.slice(lay.emb_type.b_range()), ea, "order type")?);
            emb_side.extend(embed(s, self.slice(lay.emb_side.w_range()), self.slice(lay.emb_side.b_range()), ea, "side")?);
            type_cat.push(t);
            side_cat.push(s);
        }
        let hour = sample.hour as usize;
        let pair = sample.pair.category() as usize - 1;
        let (emb_hour, emb_pair) = match (lay.emb_hour, lay.emb_pair) {
            (Some(hb), Some(pb)) => (
                embed(hour, self.slice(hb.w_range()), self.slice(hb.b_range()), ea, "hour")?,
                embed(pair, self.slice(pb.w_range()), self.slice(pb.b_range()), ea, "pair")?,
            ),
            _ => (Vec::new(), Vec::new()),
        };
        let static_raw = [hour as f64 / (CARD_HOUR - 1) as f64, pair as f64];
        let static_out = match lay.static_dense {
            Some(sb) => {
                if hour >= CARD_HOUR {
                    return Err(NetError::Index { table: "hour", category: hour, cardinality: CARD_HOUR });
                }
                let w = self.slice(sb.w_range());
                let b = self.slice(sb.b_range());
                (0..sb.rows).map(|r| ea.apply(dot(&w[r * 2..r * 2 + 2], &static_raw) + b[r])).collect()
            }
            None => Vec::new(),
        };

        // Layer-0 inputs.
        let in0 = lay.step_input;
        let mut inputs = Vec::with_capacity(steps * in0);
        for g in 0..steps {
            let row = &sample.temporal[g];
            inputs.extend_from_slice(&emb_type[g * cfg.emb_type..(g + 1) * cfg.emb_type]);
            inputs.extend_from_slice(&emb_side[g * cfg.emb_side..(g + 1) * cfg.emb_side]);
            let (y_prev, masked) = if g == 0 {
                (0.0, 1.0)
            } else {
                let m = sample.ar_masked[g - 1];
                (if m { 0.0 } else { sample.autoregressive[g - 1] }, if m { 1.0 } else { 0.0 })
            };
            if !y_prev.is_finite() {
                return Err(NetError::Numeric("autoregressive input".into()));
            }
            inputs.extend_from_slice(&[row[COL_INTERARRIVAL], row[COL_SIZE], row[COL_PRICE], y_prev, masked]);
            inputs.extend_from_slice(&emb_hour);
            inputs.extend_from_slice(&emb_pair);
        }

        let hs = cfg.state_size;
        let mut layers = Vec::with_capacity(cfg.layers);
        for (l, blk) in lay.lstm.iter().enumerate() {
            let input = if l == 0 { in0 } else { hs };
            let w = self.slice(blk.w_range());
            let b = self.slice(blk.b_range());
            let mask = dropout_mask(&mut rng, steps * input, keep);
            let cols = input + hs;
            let mut xh = vec![0.0; steps * cols];
            let mut gates = vec![0.0; steps * 4 * hs];
            let mut c = vec![0.0; steps * hs];
            let mut h = vec![0.0; steps * hs];
            let zeros = vec![0.0; hs];
            for t in 0..steps {
                let row = &mut xh[t * cols..(t + 1) * cols];
                row[..input].copy_from_slice(&inputs[t * input..(t + 1) * input]);
                if !mask.is_empty() {
                    apply_mask(&mut row[..input], &mask[t * input..(t + 1) * input]);
                }
                if t > 0 {
                    row[input..].copy_from_slice(&h[(t - 1) * hs..t * hs]);
                }
                let (c_done, c_rest) = c.split_at_mut(t * hs);
                let c_prev = if t > 0 { &c_done[(t - 1) * hs..] } else { &zeros[..] };
                lstm_cell(
                    &xh[t * cols..(t + 1) * cols],
                    c_prev,
                    w,
                    b,
                    &mut gates[t * 4 * hs..(t + 1) * 4 * hs],
                    &mut c_rest[..hs],
                    &mut h[t * hs..(t + 1) * hs],
                );
            }
            inputs = h.clone();
            layers.push(LayerCache { input, xh, mask, gates, c, h });
        }

        let last_h = &layers.last().expect("at least one layer").h[(steps - 1) * hs..];
        let mut x: Vec<f64> = last_h.iter().chain(&static_out).copied().collect();
        let da = cfg.dense_activation;
        let mut dense = Vec::with_capacity(cfg.dense_layers);
        for blk in &lay.dense {
            let mask = dropout_mask(&mut rng, x.len(), keep);
            apply_mask(&mut x, &mask);
            let w = self.slice(blk.w_range());
            let b = self.slice(blk.b_range());
            let out: Vec<f64> = (0..blk.rows).map(|r| da.apply(dot(&w[r * blk.cols..(r + 1) * blk.cols], &x) + b[r])).collect();
            dense.push(DenseCache { input: x, mask, out: out.clone() });
            x = out;
        }
        let z = x.clone();
        let head_mask = dropout_mask(&mut rng, x.len(), keep);
        apply_mask(&mut x, &head_mask);
        Ok(ForwardCache {
            steps,
            type_cat,
            side_cat,
            hour,
            pair,
            emb_type,
            emb_side,
            emb_hour,
            emb_pair,
            static_raw,
            static_out,
            layers,
            dense,
            head_in: x,
            head_mask,
            z,
        })
    }

    /// Raw head scores for a cached forward pass.
    pub fn head_scores(&self, cache: &ForwardCache) -> Vec<f64> {
        let hb = self.layout.head;
        head_scores(self.slice(hb.w_range()), self.slice(hb.b_range()), &cache.head_in)
    }

    pub fn forecast(&self, sample: &Sample) -> Result<MixtureForecast, NetError> {
        let cache = self.forward(sample, None)?;
        Ok(mixtures::forecast_from_scores(self.family, &self.head_scores(&cache)))
    }

    /// Forecasts for many samples, computed in parallel, in input order.
    pub fn forecast_all(&self, samples: &[Sample]) -> Result<Vec<MixtureForecast>, NetError> {
        samples.par_iter().map(|s| self.forecast(s)).collect()
    }

    pub fn nll(&self, sample: &Sample) -> Result<f64, NetError> {
        let cache = self.forward(sample, None)?;
        Ok(nll_score_gradient(sample.target, self.family, &self.head_scores(&cache)).0)
    }

    /// Negative log-likelihood of one sample; its gradient is added into `grad`.
    pub fn loss_and_grad(&self, sample: &Sample, mask_seed: Option<u64>, grad: &mut [f64]) -> Result<f64, NetError> {
        let cache = self.forward(sample, mask_seed)?;
        let scores = self.head_scores(&cache);
        let (nll, ds) = nll_score_gradient(sample.target, self.family, &scores);
        let hb = self.layout.head;
        let w = self.slice(hb.w_range());
        let n = hb.cols;
        let mut dz = vec![0.0; n];
        for (r, &g) in ds.iter().enumerate() {
            grad[hb.b + r] += g;
            let row = &mut grad[hb.w + r * n..hb.w + (r + 1) * n];
            for c in 0..n {
                row[c] += g * cache.head_in[c];
                dz[c] += g * w[r * n + c];
            }
        }
        apply_mask(&mut dz, &cache.head_mask);
        self.backward(&cache, &dz, grad);
        Ok(nll)
    }

    /// Reverse-mode pass: adds d(loss)/d(params) into `grad` given d(loss)/dz.
    pub fn backward(&self, cache: &ForwardCache, dz: &[f64], grad: &mut [f64]) {
        let cfg = &self.config;
        let lay = &self.layout;
        let hs = cfg.state_size;
        let steps = cache.steps;

        // Dense stack.
        let da = cfg.dense_activation;
        let mut dout = dz.to_vec();
        for (blk, dc) in lay.dense.iter().zip(&cache.dense).rev() {
            let w = &self.params[blk.w_range()];
            let mut din = vec![0.0; blk.cols];
            for r in 0..blk.rows {
                let dpre = dout[r] * da.deriv_from_output(dc.out[r]);
                if dpre == 0.0 {
                    continue;
                }
                grad[blk.b + r] += dpre;
                let grow = &mut grad[blk.w + r * blk.cols..blk.w + (r + 1) * blk.cols];
                let wrow = &w[r * blk.cols..(r + 1) * blk.cols];
                for c in 0..blk.cols {
                    grow[c] += dpre * dc.input[c];
                    din[c] += dpre * wrow[c];
                }
            }
            apply_mask(&mut din, &dc.mask);
            dout = din;
        }
        // dout is now d/d[h_last; static_out].
        let ea = cfg.embed_activation;
        if let Some(sb) = lay.static_dense {
            for r in 0..sb.rows {
                let dpre = dout[hs + r] * ea.deriv_from_output(cache.static_out[r]);
                grad[sb.b + r] += dpre;
                grad[sb.w + r * 2] += dpre * cache.static_raw[0];
                grad[sb.w + r * 2 + 1] += dpre * cache.static_raw[1];
            }
        }

        // LSTM stack, top layer first. `dh_ext` holds gradients arriving at
        // each step's hidden output from above.
        let mut dh_ext = vec![0.0; steps * hs];
        dh_ext[(steps - 1) * hs..].copy_from_slice(&dout[..hs]);
        for (blk, lc) in lay.lstm.iter().zip(&cache.layers).rev() {
            let w = &self.params[blk.w_range()];
            let cols = blk.cols;
            let input = lc.input;
            let mut dx_all = vec![0.0; steps * input];
            let mut dh_next = vec![0.0; hs];
            let mut dc_next = vec![0.0; hs];
            let mut da_g = vec![0.0; 4 * hs];
            for t in (0..steps).rev() {
                let gates = &lc.gates[t * 4 * hs..(t + 1) * 4 * hs];
                let c = &lc.c[t * hs..(t + 1) * hs];
                for k in 0..hs {
                    let (i, f, o, g) = (gates[k], gates[hs + k], gates[2 * hs + k], gates[3 * hs + k]);
                    let c_prev = if t > 0 { lc.c[(t - 1) * hs + k] } else { 0.0 };
                    let tc = c[k].tanh();
                    let dh = dh_ext[t * hs + k] + dh_next[k];
                    let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                    da_g[k] = dc * g * i * (1.0 - i);
                    da_g[hs + k] = dc * c_prev * f * (1.0 - f);
                    da_g[2 * hs + k] = dh * tc * o * (1.0 - o);
                    da_g[3 * hs + k] = dc * i * (1.0 - g * g);
                    dc_next[k] = dc * f;
                }
                let xh = &lc.xh[t * cols..(t + 1) * cols];
                let mut dxh = vec![0.0; cols];
                for r in 0..4 * hs {
                    let d = da_g[r];
                    if d == 0.0 {
                        continue;
                    }
                    grad[blk.b + r] += d;
                    let grow = &mut grad[blk.w + r * cols..blk.w + (r + 1) * cols];
                    let wrow = &w[r * cols..(r + 1) * cols];
                    for c in 0..cols {
                        grow[c] += d * xh[c];
                        dxh[c] += d * wrow[c];
                    }
                }
                dh_next.copy_from_slice(&dxh[input..]);
                let dx = &mut dx_all[t * input..(t + 1) * input];
                dx.copy_from_slice(&dxh[..input]);
                if !lc.mask.is_empty() {
                    apply_mask(dx, &lc.mask[t * input..(t + 1) * input]);
                }
            }
            dh_ext = dx_all;
        }

        // Layer-0 input gradients flow into the embedding tables.
        let in0 = lay.step_input;
        let (dt, ds) = (cfg.emb_type, cfg.emb_side);
        let off_hour = dt + ds + CONTINUOUS_INPUTS;
        let dh_dim = lay.emb_hour.map_or(0, |b| b.cols);
        let mut d_hour = vec![0.0; dh_dim];
        let mut d_pair = vec![0.0; lay.emb_pair.map_or(0, |b| b.cols)];
        for t in 0..steps {
            let dx = &dh_ext[t * in0..(t + 1) * in0];
            let tb = lay.emb_type;
            let cat = cache.type_cat[t];
            for j in 0..dt {
                let d = dx[j] * ea.deriv_from_output(cache.emb_type[t * dt + j]);
                grad[tb.w + cat * dt + j] += d;
                grad[tb.b + j] += d;
            }
            let sbk = lay.emb_side;
            let cat = cache.side_cat[t];
            for j in 0..ds {
                let d = dx[dt + j] * ea.deriv_from_output(cache.emb_side[t * ds + j]);
                grad[sbk.w + cat * ds + j] += d;
                grad[sbk.b + j] += d;
            }
            for j in 0..d_hour.len() {
                d_hour[j] += dx[off_hour + j];
            }
            for j in 0..d_pair.len() {
                d_pair[j] += dx[off_hour + dh_dim + j];
            }
        }
        for (blk, dvec, out, cat) in [
            (lay.emb_hour, &d_hour, &cache.emb_hour, cache.hour),
            (lay.emb_pair, &d_pair, &cache.emb_pair, cache.pair),
        ] {
            if let Some(b) = blk {
                for j in 0..b.cols {
                    let d = dvec[j] * ea.deriv_from_output(out[j]);
                    grad[b.w + cat * b.cols + j] += d;
                    grad[b.b + j] += d;
                }
            }
        }
    }
}
