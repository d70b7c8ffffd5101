//! Small generated datasets for tests, demos and smoke runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{TargetMode, TimeSeriesDataset};
use crate::error::Result;

/// Two columns `[x, y]` with `y_t = x_{t-1} + 0.1 sin(t / 10)`, where `x`
/// is a sum of sinusoids with periods 24, 16 and 12 steps. The target is the
/// last column. Any window of 48 steps covers whole periods of `x`, so its
/// mean and spread do not drift and the future is a fixed linear function of
/// the history even after per-window normalization.
pub fn lagged_exogenous(rows: usize) -> Result<TimeSeriesDataset> {
    use std::f64::consts::TAU;
    let x = |t: f64| (TAU * t / 24.0).sin() + 0.5 * (TAU * t / 16.0 + 1.0).sin() + 0.3 * (TAU * t / 12.0).cos();
    let mut values = Vec::with_capacity(rows * 2);
    for t in 0..rows {
        let t = t as f64;
        values.push(x(t));
        values.push(x(t - 1.0) + 0.1 * (t / 10.0).sin());
    }
    TimeSeriesDataset::from_rows(
        "lagged_exogenous",
        vec!["x".into(), "y".into()],
        values,
        None,
        TargetMode::LastColumn,
    )
}

/// Seven columns shaped like the electricity-transformer benchmarks (six
/// load series and an oil-temperature target): daily and weekly cycles,
/// slow drift, cross-correlation and Gaussian noise. Hourly timestamps are
/// attached.
pub fn ett_like(rows: usize, seed: u64) -> Result<TimeSeriesDataset> {
    let names = ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).expect("valid std");
    let phases: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let amps: Vec<f64> = (0..6).map(|_| rng.random_range(1.0..4.0)).collect();
    let mut drift = 0.0;
    let mut values = Vec::with_capacity(rows * names.len());
    let mut stamps = Vec::with_capacity(rows);
    for t in 0..rows {
        let tf = t as f64;
        drift += 0.02 * noise.sample(&mut rng);
        let day = (tf * std::f64::consts::TAU / 24.0).sin();
        let week = (tf * std::f64::consts::TAU / 168.0).sin();
        let mut loads = [0.0; 6];
        for (i, l) in loads.iter_mut().enumerate() {
            *l = 5.0 + amps[i] * (tf * std::f64::consts::TAU / 24.0 + phases[i]).sin() + 0.5 * week + drift + noise.sample(&mut rng);
        }
        let ot = 15.0 + 0.6 * loads[0] - 0.3 * loads[4] + 3.0 * day + 2.0 * drift + noise.sample(&mut rng);
        values.extend_from_slice(&loads);
        values.push(ot);
        let (d, h) = (t / 24, t % 24);
        stamps.push(format!("day{d:05} {h:02}:00:00"));
    }
    TimeSeriesDataset::from_rows(
        "ett_like",
        names.iter().map(|s| s.to_string()).collect(),
        values,
        Some(stamps),
        TargetMode::Multivariate,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagged_target_relation() {
        let d = lagged_exogenous(50).unwrap();
        for t in 1..50 {
            let expect = d.value(t - 1, 0) + 0.1 * (t as f64 / 10.0).sin();
            assert!((d.value(t, 1) - expect).abs() < 1e-12);
        }
        assert_eq!(d.n_endo(), 1);
        assert_eq!(d.n_exo(), 1);
    }

    #[test]
    fn ett_like_is_seeded() {
        let a = ett_like(100, 1).unwrap();
        let b = ett_like(100, 1).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.n_vars(), 7);
    }
}
