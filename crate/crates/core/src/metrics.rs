//! Point-forecast metrics pooled over every (window, step) per variable.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{Split, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::model::XLinear;
use crate::tensor::Tensor;

/// Targets with magnitude below this are left out of MAPE.
pub const MAPE_ZERO_GUARD: f64 = 1e-8;

fn check_pair(metric: &'static str, y: &[f64], yhat: &[f64], min_len: usize) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Usage(format!(
            "{metric}: {} targets but {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < min_len {
        return Err(Error::Usage(format!(
            "{metric} needs at least {min_len} points, got {}",
            y.len()
        )));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn undefined(metric: &'static str, reason: impl Into<String>) -> Error {
    Error::UndefinedMetric {
        metric,
        reason: reason.into(),
    }
}

pub fn mse_mae(y: &[f64], yhat: &[f64]) -> Result<(f64, f64)> {
    check_pair("mse/mae", y, yhat, 1)?;
    let (mut se, mut ae) = (0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        let e = a - b;
        se += e * e;
        ae += e.abs();
    }
    let n = y.len() as f64;
    Ok((se / n, ae / n))
}

/// Nash-Sutcliffe efficiency: `1 - Σ(y-ŷ)² / Σ(y-ȳ)²`.
pub fn nse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair("nse", y, yhat, 2)?;
    let m = mean(y);
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in y.iter().zip(yhat) {
        num += (a - b) * (a - b);
        den += (a - m) * (a - m);
    }
    if den == 0.0 {
        return Err(undefined("nse", "observations are constant"));
    }
    Ok(1.0 - num / den)
}

/// Kling-Gupta efficiency with population standard deviations.
pub fn kge(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair("kge", y, yhat, 2)?;
    let (my, mp) = (mean(y), mean(yhat));
    let (mut syy, mut spp, mut syp) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        let (da, db) = (a - my, b - mp);
        syy += da * da;
        spp += db * db;
        syp += da * db;
    }
    if syy == 0.0 {
        return Err(undefined("kge", "observations are constant"));
    }
    if spp == 0.0 {
        return Err(undefined("kge", "predictions are constant"));
    }
    if my == 0.0 {
        return Err(undefined("kge", "observations have zero mean"));
    }
    let r = syp / (syy * spp).sqrt();
    let alpha = (spp / syy).sqrt();
    let beta = mp / my;
    Ok(1.0 - ((r - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mape {
    /// Percent.
    pub percent: f64,
    /// Points skipped because `|y| < MAPE_ZERO_GUARD`.
    pub excluded: usize,
}

pub fn mape(y: &[f64], yhat: &[f64]) -> Result<Mape> {
    check_pair("mape", y, yhat, 1)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in y.iter().zip(yhat) {
        if a.abs() < MAPE_ZERO_GUARD {
            continue;
        }
        sum += ((a - b) / a).abs();
        n += 1;
    }
    if n == 0 {
        return Err(undefined("mape", "every observation is zero"));
    }
    Ok(Mape {
        percent: 100.0 * sum / n as f64,
        excluded: y.len() - n,
    })
}

/// Metric values; `None` where the metric is undefined for the data.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricSet {
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub nse: Option<f64>,
    pub kge: Option<f64>,
    /// Percent.
    pub mape: Option<f64>,
}

impl MetricSet {
    pub const NAMES: [&'static str; 5] = ["mse", "mae", "nse", "kge", "mape"];

    pub fn values(&self) -> [Option<f64>; 5] {
        [self.mse, self.mae, self.nse, self.kge, self.mape]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariableMetrics {
    pub name: String,
    pub metrics: MetricSet,
    pub mape_excluded: usize,
    /// Why any metric is missing.
    pub notes: Vec<String>,
}

impl VariableMetrics {
    pub fn compute(name: impl Into<String>, y: &[f64], yhat: &[f64]) -> Self {
        let mut notes = Vec::new();
        let mut keep = |r: Result<f64>| r.map_err(|e| notes.push(e.to_string())).ok();
        let (mse, mae) = match mse_mae(y, yhat) {
            Ok((a, b)) => (Some(a), Some(b)),
            Err(e) => {
                keep(Err(e));
                (None, None)
            }
        };
        let nse = keep(nse(y, yhat));
        let kge = keep(kge(y, yhat));
        let m = mape(y, yhat);
        let mape_excluded = m.as_ref().map_or(y.len(), |m| m.excluded);
        let mape = keep(m.map(|m| m.percent));
        Self {
            name: name.into(),
            metrics: MetricSet { mse, mae, nse, kge, mape },
            mape_excluded,
            notes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub split: Split,
    pub per_variable: Vec<VariableMetrics>,
    /// Mean over variables; `None` if any variable lacks the metric.
    pub aggregate: MetricSet,
    pub n_windows: usize,
    pub horizon: usize,
    pub scaled_space: bool,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl MetricsReport {
    /// `y[v]` / `yhat[v]` hold the pooled points of variable `v`.
    pub fn from_series(
        split: Split,
        names: &[String],
        y: &[Vec<f64>],
        yhat: &[Vec<f64>],
        n_windows: usize,
        horizon: usize,
        scaled_space: bool,
    ) -> Result<Self> {
        if names.len() != y.len() || y.len() != yhat.len() || names.is_empty() {
            return Err(Error::Usage(format!(
                "{} names, {} target series, {} prediction series",
                names.len(),
                y.len(),
                yhat.len()
            )));
        }
        let per_variable: Vec<VariableMetrics> = names
            .iter()
            .zip(y.iter().zip(yhat))
            .map(|(n, (a, b))| VariableMetrics::compute(n.clone(), a, b))
            .collect();
        let avg = |f: fn(&MetricSet) -> Option<f64>| -> Option<f64> {
            let vals: Option<Vec<f64>> = per_variable.iter().map(|v| f(&v.metrics)).collect();
            vals.map(|v| mean(&v))
        };
        let aggregate = MetricSet {
            mse: avg(|m| m.mse),
            mae: avg(|m| m.mae),
            nse: avg(|m| m.nse),
            kge: avg(|m| m.kge),
            mape: avg(|m| m.mape),
        };
        Ok(Self {
            split,
            per_variable,
            aggregate,
            n_windows,
            horizon,
            scaled_space,
        })
    }

    /// One row per variable plus an `aggregate` row. Missing values are `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable,mse,mae,nse,kge,mape_percent,mape_excluded\n");
        for v in &self.per_variable {
            let vals: Vec<String> = v.metrics.values().into_iter().map(fmt_opt).collect();
            let _ = writeln!(out, "{},{},{}", v.name, vals.join(","), v.mape_excluded);
        }
        let vals: Vec<String> = self.aggregate.values().into_iter().map(fmt_opt).collect();
        let excluded: usize = self.per_variable.iter().map(|v| v.mape_excluded).sum();
        let _ = writeln!(out, "aggregate,{},{excluded}", vals.join(","));
        out
    }

    pub fn to_table(&self) -> String {
        let space = if self.scaled_space { "scaled" } else { "original units" };
        let mut out = format!(
            "{} split: {} windows, horizon {}, {space}\n",
            self.split, self.n_windows, self.horizon
        );
        let width = self
            .per_variable
            .iter()
            .map(|v| v.name.len())
            .max()
            .unwrap_or(0)
            .max("aggregate".len());
        let _ = writeln!(
            out,
            "{:<width$}  {:>12} {:>12} {:>12} {:>12} {:>12}",
            "variable", "MSE", "MAE", "NSE", "KGE", "MAPE(%)"
        );
        let mut row = |name: &str, m: &MetricSet| {
            let cells: Vec<String> = m.values().into_iter().map(|v| format!("{:>12}", fmt_opt(v))).collect();
            let _ = writeln!(out, "{name:<width$}  {}", cells.join(" "));
        };
        for v in &self.per_variable {
            row(&v.name, &v.metrics);
        }
        row("aggregate", &self.aggregate);
        for v in &self.per_variable {
            for n in &v.notes {
                let _ = writeln!(out, "note ({}): {n}", v.name);
            }
        }
        out
    }
}

/// Targets and predictions for every window of a split, `[N, M, S]`.
pub struct SplitForecast {
    pub origins: Vec<usize>,
    pub truth: Tensor,
    pub prediction: Tensor,
}

/// Eval-mode forecasts over all stride-1 windows of `split`.
pub fn forecast_split(model: &XLinear, data: &TimeSeriesDataset, split: Split, batch_size: usize) -> Result<SplitForecast> {
    let cfg = model.config();
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut origins = Vec::new();
    let (mut truth, mut prediction) = (Vec::new(), Vec::new());
    for batch in data.iter_batches(split, cfg.lookback, cfg.horizon, batch_size, false, &mut unused)? {
        let yhat = model.predict(&batch.endo_history, &batch.exo_history)?;
        origins.extend_from_slice(&batch.origins);
        truth.extend_from_slice(batch.endo_future.data());
        prediction.extend_from_slice(yhat.data());
    }
    let shape = [origins.len(), cfg.n_endo, cfg.horizon];
    Ok(SplitForecast {
        origins,
        truth: Tensor::new(&shape, truth)?,
        prediction: Tensor::new(&shape, prediction)?,
    })
}

/// Pools `[N, M, S]` tensors into one series per variable.
pub fn pool_by_variable(t: &Tensor) -> Vec<Vec<f64>> {
    let (n, m, s) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut out = vec![Vec::with_capacity(n * s); m];
    for (i, chunk) in t.data().chunks_exact(s).enumerate() {
        out[i % m].extend_from_slice(chunk);
    }
    debug_assert!(out.iter().all(|v| v.len() == n * s));
    out
}

/// Runs the model over every window of `split` and scores it, in scaled
/// space or in original units.
pub fn evaluate(
    model: &XLinear,
    data: &TimeSeriesDataset,
    split: Split,
    scaled: bool,
    batch_size: usize,
) -> Result<MetricsReport> {
    let mut f = forecast_split(model, data, split, batch_size)?;
    if !scaled {
        f.truth = data.inverse_scale_forecast(&f.truth)?;
        f.prediction = data.inverse_scale_forecast(&f.prediction)?;
    }
    MetricsReport::from_series(
        split,
        &data.endo_names(),
        &pool_by_variable(&f.truth),
        &pool_by_variable(&f.prediction),
        f.origins.len(),
        model.config().horizon,
        scaled,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_examples() {
        assert_eq!(mse_mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        assert_eq!(mse_mae(&[1.0, 2.0], &[0.0, 3.0]).unwrap(), (1.0, 1.0));
        assert_eq!(nse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert_eq!(nse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        let y = [1.0, 2.0, 4.0];
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert!((kge(&y, &y2).unwrap() - (1.0 - 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(kge(&y, &y).unwrap(), 1.0);
        assert_eq!(mape(&[2.0], &[1.0]).unwrap().percent, 50.0);
    }

    #[test]
    fn undefined_cases() {
        assert!(matches!(nse(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedMetric { metric: "nse", .. })));
        assert!(matches!(kge(&[-1.0, 1.0], &[0.0, 1.0]), Err(Error::UndefinedMetric { .. })));
        assert!(matches!(kge(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::UndefinedMetric { .. })));
        assert!(matches!(mape(&[0.0, 1e-9], &[1.0, 1.0]), Err(Error::UndefinedMetric { .. })));
        assert!(matches!(mse_mae(&[], &[]), Err(Error::Usage(_))));
    }

    #[test]
    fn mape_exclusion_is_counted() {
        let m = mape(&[0.0, 2.0, 4.0], &[5.0, 1.0, 4.0]).unwrap();
        assert_eq!(m.excluded, 1);
        assert_eq!(m.percent, 25.0);
    }

    #[test]
    fn report_marks_undefined_without_aborting() {
        let names = vec!["a".to_string(), "b".to_string()];
        let y = vec![vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]];
        let yhat = vec![vec![1.0, 2.0, 4.0], vec![5.0, 5.0, 6.0]];
        let r = MetricsReport::from_series(Split::Test, &names, &y, &yhat, 3, 1, true).unwrap();
        assert_eq!(r.per_variable[1].metrics.nse, None);
        assert!(r.per_variable[1].metrics.mse.is_some());
        assert_eq!(r.aggregate.nse, None);
        assert_eq!(r.aggregate.mse, Some((1.0 / 3.0 + 1.0 / 3.0) / 2.0));
        let csv = r.to_csv();
        assert!(csv.lines().nth(2).unwrap().contains("NA"));
        assert!(csv.lines().last().unwrap().starts_with("aggregate,"));
        assert!(r.to_table().contains("observations are constant"));
    }

    #[test]
    fn pooling_groups_by_variable() {
        let t = Tensor::from_fn(&[2, 3, 2], |i| i as f64);
        let p = pool_by_variable(&t);
        assert_eq!(p[0], vec![0.0, 1.0, 6.0, 7.0]);
        assert_eq!(p[2], vec![4.0, 5.0, 10.0, 11.0]);
    }
}
