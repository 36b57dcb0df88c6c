use serde::{Deserialize, Serialize};

use super::{Sample, COL_INTERARRIVAL, COL_PRICE, COL_SIZE};

const CONTINUOUS: [usize; 3] = [COL_INTERARRIVAL, COL_SIZE, COL_PRICE];

/// Standardization statistics fitted on training samples.
///
/// Continuous temporal columns use one mean and sd each over every window row.
/// Autoregressive entries are standardized over unmasked entries only; masked
/// entries stay at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub temporal_mean: [f64; 3],
    pub temporal_sd: [f64; 3],
    pub ar_mean: f64,
    pub ar_sd: f64,
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats { temporal_mean: [0.0; 3], temporal_sd: [1.0; 3], ar_mean: 0.0, ar_sd: 1.0 }
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone, what: &str) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (0.0, 1.0);
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / n as f64).sqrt();
    if !(sd > 1e-12) {
        log::warn!("{what} has zero variance in the fitting set; leaving its scale at 1");
        return (mean, 1.0);
    }
    (mean, sd)
}

impl NormStats {
    pub fn fit(samples: &[Sample]) -> NormStats {
        let mut stats = NormStats::default();
        for (k, &col) in CONTINUOUS.iter().enumerate() {
            let it = samples.iter().flat_map(move |s| s.temporal.iter().map(move |row| row[col]));
            let (m, sd) = mean_sd(it, &format!("temporal column {col}"));
            stats.temporal_mean[k] = m;
            stats.temporal_sd[k] = sd;
        }
        let ar = samples.iter().flat_map(|s| {
            s.autoregressive.iter().zip(&s.ar_masked).filter(|(_, &masked)| !masked).map(|(&v, _)| v)
        });
        let (m, sd) = mean_sd(ar, "autoregressive moves");
        stats.ar_mean = m;
        stats.ar_sd = sd;
        stats
    }

    pub fn apply(&self, sample: &mut Sample) {
        for row in sample.temporal.iter_mut() {
            for (k, &col) in CONTINUOUS.iter().enumerate() {
                row[col] = (row[col] - self.temporal_mean[k]) / self.temporal_sd[k];
            }
        }
        for (v, &masked) in sample.autoregressive.iter_mut().zip(&sample.ar_masked) {
            *v = if masked { 0.0 } else { (*v - self.ar_mean) / self.ar_sd };
        }
    }

    pub fn apply_all(&self, samples: &mut [Sample]) {
        for s in samples {
            self.apply(s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orderflow::Pair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let temporal = (0..4)
                    .map(|_| {
                        [
                            rng.random_range(0.0..500.0),
                            rng.random_range(0.01..3.0),
                            rng.random_range(1..=3) as f64,
                            rng.random_range(1..=2) as f64,
                            100.0 + rng.random_range(-1.0..1.0),
                        ]
                    })
                    .collect();
                let ar_masked: Vec<bool> = (0..3).map(|_| rng.random_bool(0.3)).collect();
                let autoregressive =
                    ar_masked.iter().map(|&m| if m { 0.0 } else { rng.random_range(-4..=4) as f64 }).collect();
                Sample {
                    anchor_timestamp: i as i64,
                    anchor_seq: i as u64,
                    pair: Pair::PairA,
                    hour: 0,
                    temporal,
                    autoregressive,
                    ar_masked,
                    target: 0,
                    ref_price: 100.0,
                }
            })
            .collect()
    }

    #[test]
    fn standardized_training_set_has_zero_mean_unit_sd() {
        let mut samples = random_samples(500, 3);
        let stats = NormStats::fit(&samples);
        stats.apply_all(&mut samples);
        let refit = NormStats::fit(&samples);
        for k in 0..3 {
            assert!(refit.temporal_mean[k].abs() < 1e-9, "mean {k} = {}", refit.temporal_mean[k]);
            assert!((refit.temporal_sd[k] - 1.0).abs() < 1e-9);
        }
        assert!(refit.ar_mean.abs() < 1e-9);
        assert!((refit.ar_sd - 1.0).abs() < 1e-9);
        // Categorical columns and masked entries untouched.
        assert!(samples.iter().all(|s| s.temporal.iter().all(|r| r[2] >= 1.0 && r[3] >= 1.0)));
        assert!(samples
            .iter()
            .all(|s| s.autoregressive.iter().zip(&s.ar_masked).all(|(v, m)| !m || *v == 0.0)));
    }

    #[test]
    fn constant_column_keeps_unit_scale() {
        let mut samples = random_samples(20, 4);
        for s in &mut samples {
            for r in &mut s.temporal {
                r[COL_SIZE] = 2.5;
            }
        }
        let stats = NormStats::fit(&samples);
        assert_eq!(stats.temporal_sd[1], 1.0);
        stats.apply_all(&mut samples);
        assert!(samples.iter().all(|s| s.temporal.iter().all(|r| r[COL_SIZE] == 0.0)));
    }
}
