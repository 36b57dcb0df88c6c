use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::{NetConfig, NetError, Network};
use crate::features::Sample;
use crate::mixtures::Family;
use crate::seed::mix_seed;

/// Samples per reduction chunk. Fixed so sums do not depend on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Upper bound on epochs.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Validation evaluations without improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm cap; 0 disables it.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, batch_size: 64, lr: 1e-3, patience: 3, clip_norm: 5.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
    pub improved: bool,
}

/// Everything needed to continue training bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub network: Network,
    pub best_params: Vec<f64>,
    pub best_val: Option<f64>,
    pub since_improvement: usize,
    pub epoch: usize,
    pub adam: AdamState,
    pub history: Vec<EpochLog>,
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Network holding the best-validation parameters.
    pub network: Network,
    pub history: Vec<EpochLog>,
    pub state: TrainState,
}

/// Summed loss and summed gradient over `samples`. `mask_seeds[i]` turns on
/// dropout for sample i.
pub fn batch_loss_and_grad(
    net: &Network,
    samples: &[&Sample],
    mask_seeds: Option<&[u64]>,
) -> Result<(f64, Vec<f64>), NetError> {
    let n = net.params.len();
    let chunks: Vec<Result<(f64, Vec<f64>), NetError>> = samples
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut g = vec![0.0; n];
            let mut scratch = vec![0.0; n];
            let mut loss = 0.0;
            for (j, s) in chunk.iter().enumerate() {
                let seed = mask_seeds.map(|m| m[ci * CHUNK + j]);
                scratch.iter_mut().for_each(|x| *x = 0.0);
                loss += net.loss_and_grad(s, seed, &mut scratch)?;
                g.iter_mut().zip(&scratch).for_each(|(a, b)| *a += b);
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; n];
    for c in chunks {
        let (l, g) = c?;
        total += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((total, grad))
}

/// Mean evaluation-mode NLL.
pub fn mean_nll(net: &Network, samples: &[Sample]) -> Result<f64, NetError> {
    if samples.is_empty() {
        return Err(NetError::EmptySplit("evaluation"));
    }
    let parts: Vec<Result<f64, NetError>> = samples
        .par_chunks(CHUNK)
        .map(|chunk| chunk.iter().try_fold(0.0, |acc, s| net.nll(s).map(|l| acc + l)))
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / samples.len() as f64)
}

impl TrainState {
    pub fn new(network: Network, config: &TrainConfig) -> Self {
        let n = network.params.len();
        TrainState {
            best_params: network.params.clone(),
            network,
            best_val: None,
            since_improvement: 0,
            epoch: 0,
            adam: AdamState::new(n, config.lr),
            history: Vec::new(),
            finished: false,
        }
    }

    /// One pass over the training set followed by a validation evaluation.
    pub fn step_epoch(&mut self, train: &[Sample], val: &[Sample], config: &TrainConfig) -> Result<EpochLog, NetError> {
        if train.is_empty() {
            return Err(NetError::EmptySplit("training"));
        }
        if val.is_empty() {
            return Err(NetError::EmptySplit("validation"));
        }
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, 0x5f, epoch as u64])));
        let bs = config.batch_size.max(1);
        let mut sum_loss = 0.0;
        for (bi, idx) in order.chunks(bs).enumerate() {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let seeds: Vec<u64> =
                idx.iter().map(|&i| mix_seed(&[config.seed, epoch as u64, bi as u64, i as u64])).collect();
            let (loss, mut grad) = batch_loss_and_grad(&self.network, &batch, Some(&seeds))?;
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NetError::Divergence { epoch, batch: bi });
            }
            if config.clip_norm > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > config.clip_norm {
                    let s = config.clip_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam_step(&mut self.network.params, &grad, &mut self.adam);
            sum_loss += loss;
        }
        let val_nll = mean_nll(&self.network, val)?;
        if !val_nll.is_finite() {
            return Err(NetError::Divergence { epoch, batch: usize::MAX });
        }
        let improved = self.best_val.is_none_or(|b| val_nll < b);
        if improved {
            self.best_val = Some(val_nll);
            self.best_params.clone_from(&self.network.params);
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        self.epoch += 1;
        let log = EpochLog { epoch: self.epoch, train_nll: sum_loss / train.len() as f64, val_nll, improved };
        log::info!("epoch {} train nll {:.6} val nll {:.6}", log.epoch, log.train_nll, log.val_nll);
        self.history.push(log.clone());
        if self.epoch >= config.epochs || self.since_improvement >= config.patience {
            self.finished = true;
        }
        Ok(log)
    }

    pub fn best_network(&self) -> Network {
        let mut net = self.network.clone();
        net.params.clone_from(&self.best_params);
        net
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome { network: self.best_network(), history: self.history.clone(), state: self }
    }
}

/// Fit a fresh network by mini-batch Adam with early stopping on validation NLL.
pub fn train(
    train: &[Sample],
    val: &[Sample],
    net_config: &NetConfig,
    family: Family,
    config: &TrainConfig,
) -> Result<TrainOutcome, NetError> {
    if train.is_empty() {
        return Err(NetError::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(NetError::EmptySplit("validation"));
    }
    let mut net = Network::new(net_config.clone(), family)?;
    let targets: Vec<i64> = train.iter().map(|s| s.target).collect();
    net.init_head_from_targets(&targets);
    let mut state = TrainState::new(net, config);
    while !state.finished {
        state.step_epoch(train, val, config)?;
    }
    Ok(state.into_outcome())
}
