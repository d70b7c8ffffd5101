//! Leakage, coverage and determinism of the windowing pipeline.

use proptest::prelude::*;
use proptest::test_runner::{Config, FileFailurePersistence, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlinear::data::{Split, SplitSpec, TargetMode, TimeSeriesDataset};

fn config() -> Config {
    Config {
        cases: 40,
        rng_seed: RngSeed::Fixed(3),
        failure_persistence: Some(Box::new(FileFailurePersistence::Off)),
        ..Config::default()
    }
}

fn raw(rows: usize, vars: usize, seed: u64) -> (Vec<String>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = (0..vars).map(|j| format!("v{j}")).collect();
    let values = (0..rows * vars).map(|i| (i % vars) as f64 * 3.0 + rng.random_range(-1.0..1.0)).collect();
    (names, values)
}

fn dataset(names: &[String], values: &[f64], mode: TargetMode) -> TimeSeriesDataset {
    TimeSeriesDataset::from_rows("rand", names.to_vec(), values.to_vec(), None, mode).unwrap()
}

fn mode() -> impl Strategy<Value = TargetMode> {
    prop_oneof![Just(TargetMode::Multivariate), Just(TargetMode::LastColumn)]
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn scaler_sees_only_training_rows(rows in 120usize..400, vars in 2usize..5, seed in any::<u64>(), mode in mode()) {
        let (names, values) = raw(rows, vars, seed);
        let spec = SplitSpec::Ratios([0.7, 0.1, 0.2]);
        let ds = dataset(&names, &values, mode).split_and_scale(&spec, 8, 4).unwrap();
        let train = ds.split_bounds().unwrap().train.clone();
        let scaler = ds.scaler().unwrap();
        let n = train.len() as f64;
        for j in 0..vars {
            let col: Vec<f64> = train.clone().map(|r| values[r * vars + j]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!((scaler.mean[j] - mean).abs() < 1e-12);
            prop_assert!((scaler.std[j] - std).abs() < 1e-12);
        }

        // Rewriting every non-training row leaves the fit untouched.
        let mut altered = values.clone();
        for v in &mut altered[train.end * vars..] {
            *v = *v * 10.0 + 100.0;
        }
        let ds2 = dataset(&names, &altered, mode).split_and_scale(&spec, 8, 4).unwrap();
        prop_assert_eq!(ds2.scaler().unwrap(), scaler);
    }

    #[test]
    fn scaling_round_trips(rows in 60usize..200, vars in 1usize..5, seed in any::<u64>()) {
        let (names, values) = raw(rows, vars, seed);
        let ds = dataset(&names, &values, TargetMode::Multivariate)
            .split_and_scale(&SplitSpec::Ratios([0.6, 0.2, 0.2]), 4, 2)
            .unwrap();
        let scaler = ds.scaler().unwrap();
        for r in 0..rows {
            for j in 0..vars {
                let x = values[r * vars + j];
                prop_assert!((ds.value(r, j) - scaler.scale(j, x)).abs() < 1e-12);
                prop_assert!((scaler.unscale(j, ds.value(r, j)) - x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn window_counts(rows in 150usize..400, l in 1usize..20, s in 1usize..10, vars in 1usize..4) {
        let (names, values) = raw(rows, vars, 1);
        let ds = dataset(&names, &values, TargetMode::Multivariate)
            .split_and_scale(&SplitSpec::Ratios([0.6, 0.2, 0.2]), l, s)
            .unwrap();
        let b = ds.split_bounds().unwrap().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for split in [Split::Train, Split::Val, Split::Test] {
            let range = b.get(split);
            // Val/test borrow up to L rows of history from the preceding split.
            let history = if split == Split::Train { 0 } else { l.min(range.start) };
            let expected = (range.len() + history + 1).saturating_sub(l + s);
            let origins: Vec<usize> = ds.window_origins(split, l, s).unwrap().collect();
            prop_assert_eq!(origins.len(), expected);
            for &t in &origins {
                prop_assert!(t + l + s <= range.end);
                prop_assert!(t + l >= range.start);
            }
            if expected > 0 {
                let mut seen: Vec<usize> = ds
                    .iter_batches(split, l, s, 7, true, &mut rng)
                    .unwrap()
                    .flat_map(|batch| batch.origins)
                    .collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, origins);
            }
        }
    }

    #[test]
    fn fixed_seed_fixes_batch_sequence(seed in any::<u64>(), batch in 1usize..20) {
        let (names, values) = raw(200, 3, 5);
        let ds = dataset(&names, &values, TargetMode::LastColumn)
            .split_and_scale(&SplitSpec::Ratios([0.7, 0.1, 0.2]), 12, 6)
            .unwrap();
        let run = || -> Vec<Vec<usize>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ds.iter_batches(Split::Train, 12, 6, batch, true, &mut rng)
                .unwrap()
                .map(|b| b.origins)
                .collect()
        };
        let first = run();
        prop_assert_eq!(&first, &run());
        let lens: Vec<usize> = first.iter().map(Vec::len).collect();
        prop_assert!(lens[..lens.len() - 1].iter().all(|&n| n == batch));
        prop_assert!(*lens.last().unwrap() >= 1 && *lens.last().unwrap() <= batch);
    }
}

#[test]
fn windows_read_the_right_rows() {
    let (names, values) = raw(100, 2, 9);
    let ds = dataset(&names, &values, TargetMode::LastColumn)
        .split_and_scale(&SplitSpec::Ratios([0.6, 0.2, 0.2]), 5, 3)
        .unwrap();
    let batch = ds.window_batch(&[10, 40], 5, 3).unwrap();
    assert_eq!(batch.endo_history.shape(), &[2, 1, 5]);
    assert_eq!(batch.exo_history.shape(), &[2, 1, 5]);
    assert_eq!(batch.endo_future.shape(), &[2, 1, 3]);
    assert_eq!(batch.endo_history.at(&[1, 0, 4]), ds.value(44, 1));
    assert_eq!(batch.exo_history.at(&[0, 0, 0]), ds.value(10, 0));
    assert_eq!(batch.endo_future.at(&[0, 0, 0]), ds.value(15, 1));
}
