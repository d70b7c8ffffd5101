//! Structural invariants of the forecaster.

use proptest::prelude::*;
use proptest::test_runner::{Config, FileFailurePersistence, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlinear::model::layers::{revin_denormalize, revin_normalize, variate_gate};
use xlinear::model::{Ablation, GateActivation, ModelConfig, XLinear, XLinearParams};
use xlinear::tensor::{Tape, Tensor};

fn config() -> Config {
    Config {
        cases: 32,
        rng_seed: RngSeed::Fixed(7),
        failure_persistence: Some(Box::new(FileFailurePersistence::Off)),
        ..Config::default()
    }
}

fn small(m: usize, c: usize) -> ModelConfig {
    let mut cfg = ModelConfig::new(12, 5, m, c).without_dropout();
    cfg.d_model = 4;
    cfg.t_ff = 6;
    cfg.c_ff = 5;
    cfg
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-2.0..2.0))
}

/// `out[b, i, ..] = t[b, perm[i], ..]` for a `[B, V, K]` tensor.
fn permute_axis1(t: &Tensor, perm: &[usize]) -> Tensor {
    let (b, v, k) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut out = Vec::with_capacity(t.len());
    for bi in 0..b {
        for &p in perm {
            out.extend_from_slice(&t.data()[(bi * v + p) * k..(bi * v + p + 1) * k]);
        }
    }
    Tensor::new(t.shape(), out).unwrap()
}

/// `out[.., j] = t[.., perm[j]]` along the last axis.
fn permute_last(t: &Tensor, perm: &[usize]) -> Tensor {
    let k = *t.shape().last().unwrap();
    let out = t.data().chunks_exact(k).flat_map(|row| perm.iter().map(move |&p| row[p])).collect();
    Tensor::new(t.shape(), out).unwrap()
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn endogenous_channel_permutation_is_equivariant(
        (m, perm) in (2usize..6).prop_flat_map(|m| (Just(m), permutation(m))),
        c in 0usize..4,
        seed in any::<u64>(),
        act in prop::sample::select(GateActivation::ALL.to_vec()),
    ) {
        let mut cfg = small(m, c);
        cfg.ablation = Ablation::EndoOnly;
        cfg.gate_activation = act;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = XLinearParams::init(&cfg, &mut rng);
        if let Some((g, b)) = params.revin_affine.as_mut() {
            *g = random(&[m], &mut rng);
            *b = random(&[m], &mut rng);
        }
        let endo = random(&[3, m, cfg.lookback], &mut rng);
        let exo = random(&[3, c, cfg.lookback], &mut rng);

        let mut permuted = params.clone();
        permuted.global_tokens = Tensor::new(
            &[m, cfg.d_model],
            perm.iter()
                .flat_map(|&p| params.global_tokens.data()[p * cfg.d_model..(p + 1) * cfg.d_model].to_vec())
                .collect(),
        ).unwrap();
        if let Some((g, b)) = permuted.revin_affine.as_mut() {
            *g = Tensor::new(&[m], perm.iter().map(|&p| g.data()[p]).collect()).unwrap();
            *b = Tensor::new(&[m], perm.iter().map(|&p| b.data()[p]).collect()).unwrap();
        }

        let base = XLinear::from_params(cfg.clone(), params).unwrap();
        let moved = XLinear::from_params(cfg, permuted).unwrap();
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let (y, t) = base.forward(&endo, &exo, false, &mut unused).unwrap();
        let (y2, t2) = moved.forward(&permute_axis1(&endo, &perm), &exo, false, &mut unused).unwrap();
        prop_assert!(close(&y2, &permute_axis1(&y, &perm), 1e-12));
        prop_assert!(close(&t2.time_gate, &permute_axis1(&t.time_gate, &perm), 1e-12));
    }

    #[test]
    fn variate_gate_shares_weights_across_positions(
        perm in permutation(4),
        c in 0usize..4,
        seed in any::<u64>(),
    ) {
        let cfg = small(2, c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = XLinearParams::init(&cfg, &mut rng);
        let exo = random(&[2, c, 4], &mut rng);
        let global = random(&[2, 2, 4], &mut rng);
        let run = |exo: &Tensor, global: &Tensor| {
            let mut tape = Tape::new();
            let p = params.bind(&mut tape);
            let (e, g) = (tape.constant(exo.clone()), tape.constant(global.clone()));
            let mut unused = ChaCha8Rng::seed_from_u64(0);
            let out = variate_gate(&mut tape, &p, &cfg, e, g, false, &mut unused).unwrap();
            (tape.tensor(out.exo), tape.tensor(out.global))
        };
        let (e, g) = run(&exo, &global);
        let (e2, g2) = run(&permute_last(&exo, &perm), &permute_last(&global, &perm));
        prop_assert!(close(&e2, &permute_last(&e, &perm), 1e-12));
        prop_assert!(close(&g2, &permute_last(&g, &perm), 1e-12));
    }

    #[test]
    fn parameter_count_matches_tensor_sizes(
        l in 1usize..40, s in 1usize..30, m in 1usize..6, c in 0usize..6,
        d in 1usize..12, t_ff in 1usize..20, c_ff in 1usize..20,
        affine in any::<bool>(), share in any::<bool>(),
    ) {
        let mut cfg = ModelConfig::new(l, s, m, c);
        (cfg.d_model, cfg.t_ff, cfg.c_ff, cfg.revin_affine, cfg.share_embedding) = (d, t_ff, c_ff, affine, share);
        let stored: usize = XLinearParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1))
            .to_tensors()
            .iter()
            .map(Tensor::len)
            .sum();
        let ch = c + m;
        let formula = (l + 1) * d * if share { 1 } else { 2 }
            + m * d
            + (2 * d + 1) * t_ff
            + (t_ff + 1) * 2 * d
            + (ch + 1) * c_ff
            + (c_ff + 1) * ch
            + (2 * d + 1) * s
            + if affine { 2 * m } else { 0 };
        prop_assert_eq!(stored, formula);
        prop_assert_eq!(cfg.parameter_count(), formula);
    }

    #[test]
    fn revin_round_trip(b in 1usize..4, v in 1usize..5, l in 2usize..30, seed in any::<u64>(), offset in -50.0f64..50.0, spread in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn(&[b, v, l], |_| offset + spread * rng.random_range(-1.0..1.0));
        let mut tape = Tape::new();
        let (z, stats) = revin_normalize(&mut tape, &x, None).unwrap();
        let back = revin_denormalize(&mut tape, z, &stats, None).unwrap();
        prop_assert!(close(&tape.tensor(back), &x, 1e-9));
    }

    #[test]
    fn gate_ranges(seed in any::<u64>(), c in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for act in GateActivation::ALL {
            let mut cfg = small(3, c);
            cfg.gate_activation = act;
            let model = XLinear::new(cfg.clone(), &mut rng).unwrap();
            let endo = Tensor::from_fn(&[2, 3, cfg.lookback], |_| rng.random_range(-5.0..5.0));
            let exo = Tensor::from_fn(&[2, c, cfg.lookback], |_| rng.random_range(-5.0..5.0));
            let (_, t) = model.forward(&endo, &exo, false, &mut rng).unwrap();
            match act {
                GateActivation::Sigmoid => {
                    for g in [&t.time_gate, &t.variate_gate] {
                        prop_assert!(g.data().iter().all(|&x| x > 0.0 && x < 1.0));
                    }
                }
                GateActivation::Tanh => {
                    for g in [&t.time_gate, &t.variate_gate] {
                        prop_assert!(g.data().iter().all(|&x| x > -1.0 && x < 1.0));
                    }
                }
                GateActivation::Softmax => {
                    for row in t.time_gate.data().chunks_exact(2 * cfg.d_model) {
                        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    }
                    // Variate gate normalizes over the channel axis.
                    let (ch, d) = (c + 3, cfg.d_model);
                    for b in 0..2 {
                        for k in 0..d {
                            let sum: f64 = (0..ch).map(|i| t.variate_gate.at(&[b, i, k])).sum();
                            prop_assert!((sum - 1.0).abs() < 1e-9);
                        }
                    }
                }
                GateActivation::Swish => {}
            }
        }
    }

    #[test]
    fn eval_forward_is_pure(seed in any::<u64>()) {
        let mut cfg = small(2, 3);
        cfg.embed_dropout = 0.3;
        cfg.head_dropout = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = XLinear::new(cfg.clone(), &mut rng).unwrap();
        let endo = random(&[4, 2, cfg.lookback], &mut rng);
        let exo = random(&[4, 3, cfg.lookback], &mut rng);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let (a, _) = model.forward(&endo, &exo, false, &mut r1).unwrap();
        let (b, _) = model.forward(&endo, &exo, false, &mut r2).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
        prop_assert_eq!(r1, ChaCha8Rng::seed_from_u64(1));
    }
}

#[test]
fn full_and_endo_only_agree_when_global_path_is_silenced() {
    // With a zero head on the global half, the ablation cannot change anything.
    let cfg = small(2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut params = XLinearParams::init(&cfg, &mut rng);
    let d = cfg.d_model;
    let s = cfg.horizon;
    for i in d * s..2 * d * s {
        params.head.weight.data_mut()[i] = 0.0;
    }
    let endo = random(&[3, 2, cfg.lookback], &mut rng);
    let exo = random(&[3, 3, cfg.lookback], &mut rng);
    let full = XLinear::from_params(cfg.clone(), params.clone()).unwrap();
    let mut es_cfg = cfg;
    es_cfg.ablation = Ablation::EndoOnly;
    let es = XLinear::from_params(es_cfg, params).unwrap();
    assert!(close(&full.predict(&endo, &exo).unwrap(), &es.predict(&endo, &exo).unwrap(), 1e-12));
}
