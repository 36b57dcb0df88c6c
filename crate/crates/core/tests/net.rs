use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tickmix::features::Sample;
use tickmix::mixtures::Family;
use tickmix::net::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use tickmix::net::{batch_loss_and_grad, inverted_dropout_mask, mean_nll, train, NetConfig, Network, StaticMode, TrainConfig, TrainState};
use tickmix::orderflow::Pair;

fn random_sample(m: usize, rng: &mut ChaCha8Rng) -> Sample {
    Sample {
        anchor_timestamp: rng.random_range(0..1_000_000),
        anchor_seq: 0,
        pair: if rng.random_bool(0.5) { Pair::PairA } else { Pair::PairB },
        hour: rng.random_range(0..24),
        temporal: (0..m)
            .map(|_| {
                [
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(1..=3) as f64,
                    rng.random_range(1..=2) as f64,
                    rng.random_range(-1.5..1.5),
                ]
            })
            .collect(),
        autoregressive: (0..m - 1).map(|_| rng.random_range(-2.0..2.0)).collect(),
        ar_masked: (0..m - 1).map(|_| rng.random_bool(0.3)).collect(),
        target: rng.random_range(-4..=4),
        ref_price: 100.0,
    }
}

fn small_net(family: Family, seed: u64, keep: f64) -> Network {
    let cfg = NetConfig { state_size: 8, dense_width: 8, keep_prob: keep, seed, ..NetConfig::default() };
    Network::new(cfg, family).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference gradients.
fn gradient_check(net: &Network, sample: &Sample, mask_seed: Option<u64>) -> f64 {
    let h = 1e-5;
    let mut grad = vec![0.0; net.params.len()];
    net.loss_and_grad(sample, mask_seed, &mut grad).unwrap();
    let mut probe = net.clone();
    let mut scratch = vec![0.0; net.params.len()];
    let mut worst = 0.0f64;
    for i in 0..net.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let up = probe.loss_and_grad(sample, mask_seed, &mut scratch).unwrap();
        probe.params[i] = orig - h;
        let down = probe.loss_and_grad(sample, mask_seed, &mut scratch).unwrap();
        probe.params[i] = orig;
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * h)));
    }
    worst
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for family in Family::ALL {
        for k in 0..10 {
            let net = small_net(family, k, 0.8);
            let s = random_sample(8, &mut rng);
            let worst = gradient_check(&net, &s, Some(1000 + k));
            assert!(worst < 1e-4, "{family:?} case {k}: {worst}");
        }
    }
}

#[test]
fn dense_static_mode_and_deeper_stack_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let cfg = NetConfig {
        layers: 2,
        state_size: 5,
        dense_layers: 2,
        dense_width: 6,
        static_mode: StaticMode::Dense,
        keep_prob: 0.9,
        dense_activation: tickmix::net::Activation::Tanh,
        ..NetConfig::default()
    };
    for family in Family::ALL {
        let net = Network::new(cfg.clone(), family).unwrap();
        let s = random_sample(6, &mut rng);
        let worst = gradient_check(&net, &s, Some(5));
        assert!(worst < 1e-4, "{family:?}: {worst}");
    }
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let net = small_net(Family::Poisson, 1, 0.7);
    let s = random_sample(6, &mut rng);
    let z = net.forward(&s, None).unwrap().z;
    let draws = 10_000;
    for keep in [0.5, 0.7, 0.9] {
        let mut mean = vec![0.0; z.len()];
        for _ in 0..draws {
            let mask = inverted_dropout_mask(&mut rng, z.len(), keep);
            for (m, (v, k)) in mean.iter_mut().zip(z.iter().zip(&mask)) {
                *m += v * k / draws as f64;
            }
        }
        for (m, v) in mean.iter().zip(&z) {
            if v.abs() > 1e-3 {
                assert!(((m - v) / v).abs() < 0.02 * (1.0 / keep), "keep {keep}: {m} vs {v}");
            }
        }
        let total: f64 = mean.iter().map(|x| x.abs()).sum();
        let want: f64 = z.iter().map(|x| x.abs()).sum();
        assert!(((total - want) / want).abs() < 0.02, "keep {keep}");
    }
}

#[test]
fn duplicated_sample_doubles_gradient_and_batch_loss_is_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let net = small_net(Family::NegBinomial, 3, 1.0);
    let a = random_sample(8, &mut rng);
    let (l1, g1) = batch_loss_and_grad(&net, &[&a], None).unwrap();
    let (l2, g2) = batch_loss_and_grad(&net, &[&a, &a], None).unwrap();
    assert_eq!(l2, 2.0 * l1);
    assert!(g1.iter().zip(&g2).all(|(x, y)| *y == 2.0 * x));

    let samples: Vec<Sample> = (0..40).map(|_| random_sample(8, &mut rng)).collect();
    let per: Vec<f64> = samples.iter().map(|s| net.nll(s).unwrap()).collect();
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    assert!((mean_nll(&net, &samples).unwrap() - mean).abs() < 1e-12);
}

#[test]
fn gradients_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let net = small_net(Family::ZeroTruncPoisson, 4, 0.8);
    let samples: Vec<Sample> = (0..70).map(|_| random_sample(8, &mut rng)).collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let seeds: Vec<u64> = (0..70).collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| batch_loss_and_grad(&net, &refs, Some(&seeds)).unwrap())
    };
    let (l1, g1) = run(1);
    let (l3, g3) = run(3);
    assert_eq!(l1.to_bits(), l3.to_bits());
    assert!(g1.iter().zip(&g3).all(|(a, b)| a.to_bits() == b.to_bits()));
}

fn tiny_data(seed: u64, n: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_sample(6, &mut rng)).collect()
}

#[test]
fn patience_zero_stops_after_first_validation() {
    let train_set = tiny_data(1, 32);
    let val = tiny_data(2, 16);
    let cfg = TrainConfig { epochs: 10, patience: 0, batch_size: 8, ..TrainConfig::default() };
    let net_cfg = NetConfig { state_size: 4, dense_width: 4, ..NetConfig::default() };
    let out = train(&train_set, &val, &net_cfg, Family::Poisson, &cfg).unwrap();
    assert_eq!(out.history.len(), 1);
}

#[test]
fn first_epoch_lowers_training_loss_in_most_seeds() {
    let mut ok = 0;
    let seeds = 20;
    for seed in 0..seeds {
        let data = tiny_data(100 + seed, 48);
        let net_cfg = NetConfig { state_size: 6, dense_width: 6, keep_prob: 1.0, seed, ..NetConfig::default() };
        let cfg = TrainConfig { epochs: 1, batch_size: 8, lr: 1e-3, seed, ..TrainConfig::default() };
        let mut net = Network::new(net_cfg, Family::Poisson).unwrap();
        net.init_head_from_targets(&data.iter().map(|s| s.target).collect::<Vec<_>>());
        let before = mean_nll(&net, &data).unwrap();
        let mut st = TrainState::new(net, &cfg);
        st.step_epoch(&data, &data, &cfg).unwrap();
        let after = mean_nll(&st.network, &data).unwrap();
        if after <= before {
            ok += 1;
        }
    }
    assert!(ok * 10 >= seeds * 9, "{ok}/{seeds}");
}

#[test]
fn resume_from_checkpoint_is_bit_exact() {
    let train_set = tiny_data(3, 40);
    let val = tiny_data(4, 12);
    let cfg = TrainConfig { epochs: 5, patience: 10, batch_size: 8, ..TrainConfig::default() };
    let net_cfg = NetConfig { state_size: 4, dense_width: 4, keep_prob: 0.8, ..NetConfig::default() };
    let net = Network::new(net_cfg, Family::NegBinomial).unwrap();
    let mut st = TrainState::new(net, &cfg);
    st.step_epoch(&train_set, &val, &cfg).unwrap();

    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &Checkpoint { state: st.clone(), norm: None, provenance: vec![] }).unwrap();
    let mut resumed = read_checkpoint(&buf[..]).unwrap().state;
    assert_eq!(resumed, st);

    let a = st.step_epoch(&train_set, &val, &cfg).unwrap();
    let b = resumed.step_epoch(&train_set, &val, &cfg).unwrap();
    assert_eq!(a.train_nll.to_bits(), b.train_nll.to_bits());
    assert_eq!(a.val_nll.to_bits(), b.val_nll.to_bits());
    assert_eq!(st.network.params, resumed.network.params);
}

#[test]
fn same_seed_training_is_identical() {
    let train_set = tiny_data(5, 30);
    let val = tiny_data(6, 10);
    let cfg = TrainConfig { epochs: 2, batch_size: 7, ..TrainConfig::default() };
    let net_cfg = NetConfig { state_size: 4, dense_width: 4, ..NetConfig::default() };
    let a = train(&train_set, &val, &net_cfg, Family::ZeroTruncPoisson, &cfg).unwrap();
    let b = train(&train_set, &val, &net_cfg, Family::ZeroTruncPoisson, &cfg).unwrap();
    assert_eq!(a.network.params, b.network.params);
}
