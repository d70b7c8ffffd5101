//! Loss, optimizer, learning-rate schedule and the epoch loop.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Split, TimeSeriesDataset, WindowBatch};
use crate::error::{Error, Result};
use crate::model::{build_graph, ModelConfig, XLinear, XLinearParams};
use crate::tensor::{Tape, Tensor, Var};

/// Independent generator streams derived from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RngStream {
    Init = 0,
    Shuffle = 1,
    Dropout = 2,
}

pub fn seeded_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Caps the optimizer steps per epoch; `None` uses every training window.
    pub max_batches_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 30,
            patience: 3,
            seed: 2025,
            adam: AdamConfig::default(),
            max_batches_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            issues.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            issues.push("batch_size must be at least 1".to_string());
        }
        if self.max_epochs == 0 {
            issues.push("max_epochs must be at least 1".to_string());
        }
        if self.patience == 0 {
            issues.push("patience must be at least 1".to_string());
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps <= 0.0 {
            issues.push(format!("invalid Adam constants {a:?}"));
        }
        if self.max_batches_per_epoch == Some(0) {
            issues.push("max_batches_per_epoch must be at least 1".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues.join("; ")))
        }
    }
}

/// Constant for the first three epochs, then decays by 0.9 per epoch.
/// `epoch` is 0-based.
pub fn lr_schedule(lr_init: f64, epoch: usize) -> f64 {
    if epoch < 3 {
        lr_init
    } else {
        lr_init * 0.9f64.powi((epoch - 3) as i32)
    }
}

/// Mean squared error over every entry.
pub fn mse_loss(tape: &mut Tape, yhat: Var, y: Var) -> Result<Var> {
    if tape.shape(yhat) != tape.shape(y) {
        return Err(Error::shape(
            "mse_loss",
            format!("prediction {:?} vs target {:?}", tape.shape(yhat), tape.shape(y)),
        ));
    }
    let diff = tape.sub(yhat, y)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let sizes: Vec<usize> = params.into_iter().map(Tensor::len).collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; gradients are zeroed afterwards.
pub fn adam_step(params: &mut [&mut Tensor], state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::Usage(format!(
            "optimizer tracks {} tensors, got {}",
            state.m.len(),
            params.len()
        )));
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        if p.len() != m.len() {
            return Err(Error::shape(
                "adam_step",
                format!("moment buffer of {} entries for a tensor of {}", m.len(), p.len()),
            ));
        }
        let (theta, grad) = p.data_and_grad_mut();
        let Some(grad) = grad else { continue };
        for i in 0..theta.len() {
            let g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            grad[i] = 0.0;
        }
    }
    Ok(())
}

/// Forward in training mode, MSE loss and backward. Gradients are added to
/// the model's parameter buffers; the loss value is returned.
pub fn accumulate_gradients(model: &mut XLinear, batch: &WindowBatch, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let g = build_graph(
        &mut tape,
        &bound,
        model.config(),
        &batch.endo_history,
        &batch.exo_history,
        true,
        rng,
    )?;
    let y = tape.constant(batch.endo_future.clone());
    let loss = mse_loss(&mut tape, g.prediction, y)?;
    let value = tape.scalar_value(loss)?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    let grads = tape.backward(loss)?;
    model.params_mut().accumulate_grads(&grads, &bound)?;
    Ok(value)
}

/// Pooled MSE over every window of `split` in eval mode (scaled space).
pub fn evaluate_loss(model: &XLinear, data: &TimeSeriesDataset, split: Split, batch_size: usize) -> Result<f64> {
    let cfg = model.config();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut sse, mut n) = (0.0, 0usize);
    for batch in data.iter_batches(split, cfg.lookback, cfg.horizon, batch_size, false, &mut rng)? {
        let yhat = model.predict(&batch.endo_history, &batch.exo_history)?;
        for (a, b) in yhat.data().iter().zip(batch.endo_future.data()) {
            sse += (a - b) * (a - b);
        }
        n += yhat.len();
    }
    Ok(sse / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,val_loss,seconds";

    pub fn csv_line(r: &EpochRecord) -> String {
        format!("{},{:e},{:e},{:e},{:.3}", r.epoch, r.lr, r.train_loss, r.val_loss, r.seconds)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.epochs {
            let _ = writeln!(out, "{}", Self::csv_line(r));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Tracks the best validation loss and counts epochs without improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    bad_epochs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            StopDecision::Improved
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: XLinear,
    pub log: TrainLog,
}

pub fn train(model_cfg: &ModelConfig, cfg: &TrainConfig, data: &TimeSeriesDataset) -> Result<TrainOutcome> {
    train_with(model_cfg, cfg, data, |_| {})
}

/// Like [`train`], calling `on_epoch` after every completed epoch.
pub fn train_with(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    data: &TimeSeriesDataset,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = XLinear::new(model_cfg.clone(), &mut seeded_rng(cfg.seed, RngStream::Init))?;
    train_model(model, cfg, data, on_epoch)
}

/// Trains an already-initialized model.
pub fn train_model(
    mut model: XLinear,
    cfg: &TrainConfig,
    data: &TimeSeriesDataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mc = model.config().clone();
    if data.n_endo() != mc.n_endo || data.n_exo() != mc.n_exo {
        return Err(Error::Config(format!(
            "model expects {} endogenous / {} exogenous variables, dataset has {} / {}",
            mc.n_endo,
            mc.n_exo,
            data.n_endo(),
            data.n_exo()
        )));
    }
    if data.window_origins(Split::Val, mc.lookback, mc.horizon)?.is_empty() {
        return Err(Error::Data("validation split has no complete windows".into()));
    }

    let mut shuffle_rng = seeded_rng(cfg.seed, RngStream::Shuffle);
    let mut dropout_rng = seeded_rng(cfg.seed, RngStream::Dropout);
    let mut adam = AdamState::new(model.params().named().into_iter().map(|(_, t)| t));
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: Option<XLinearParams> = None;
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    model.params_mut().zero_grad();

    for e in 0..cfg.max_epochs {
        let start = Instant::now();
        let lr = lr_schedule(cfg.learning_rate, e);
        let batches = data.iter_batches(Split::Train, mc.lookback, mc.horizon, cfg.batch_size, true, &mut shuffle_rng)?;
        let (mut sse, mut count) = (0.0, 0usize);
        for (b, batch) in batches.take(cfg.max_batches_per_epoch.unwrap_or(usize::MAX)).enumerate() {
            let loss = accumulate_gradients(&mut model, &batch, &mut dropout_rng).map_err(|err| match err {
                Error::Numeric(msg) => Error::Numeric(format!("epoch {}, batch {}: {msg}", e + 1, b + 1)),
                other => other,
            })?;
            adam_step(&mut model.params_mut().tensors_mut(), &mut adam, lr, &cfg.adam)?;
            let n = batch.endo_future.len();
            sse += loss * n as f64;
            count += n;
        }
        let val_loss = evaluate_loss(&model, data, Split::Val, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("epoch {}: validation loss is {val_loss}", e + 1)));
        }
        let record = EpochRecord {
            epoch: e + 1,
            lr,
            train_loss: sse / count as f64,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        epochs.push(record);
        match stopper.update(e + 1, val_loss) {
            StopDecision::Improved => best = Some(model.params().clone()),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = e + 1 < cfg.max_epochs;
                break;
            }
        }
    }

    let (best_epoch, best_val_loss) = stopper.best();
    let (config, _) = model.into_parts();
    let params = best.expect("the first epoch always improves on +inf");
    Ok(TrainOutcome {
        model: XLinear::from_params(config, params)?,
        log: TrainLog {
            epochs,
            best_epoch,
            best_val_loss,
            stopped_early,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(1e-3, 0), 1e-3);
        assert_eq!(lr_schedule(1e-3, 2), 1e-3);
        assert_eq!(lr_schedule(1e-4, 3), 1e-4);
        assert!((lr_schedule(1e-4, 5) - 8.1e-5).abs() < 1e-18);
    }

    #[test]
    fn mse_examples() {
        let mut tape = Tape::new();
        let y = tape.constant(Tensor::full(&[2, 3, 4], 1.0));
        let yhat = tape.constant(Tensor::full(&[2, 3, 4], 3.0));
        let l = mse_loss(&mut tape, yhat, y).unwrap();
        assert_eq!(tape.scalar_value(l).unwrap(), 4.0);
        let l0 = mse_loss(&mut tape, y, y).unwrap();
        assert_eq!(tape.scalar_value(l0).unwrap(), 0.0);
        let bad = tape.constant(Tensor::zeros(&[2, 3, 5]));
        assert!(matches!(mse_loss(&mut tape, yhat, bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn mse_matches_scalar_loop() {
        let mut s = 7u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = Tensor::from_fn(&[2, 3, 4], |_| next());
        let b = Tensor::from_fn(&[2, 3, 4], |_| next());
        let mut brute = 0.0;
        for i in 0..24 {
            brute += (a.data()[i] - b.data()[i]).powi(2);
        }
        let mut tape = Tape::new();
        let (va, vb) = (tape.constant(a), tape.constant(b));
        let l = mse_loss(&mut tape, va, vb).unwrap();
        assert!((tape.scalar_value(l).unwrap() - brute / 24.0).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = Tensor::full(&[3], 0.7).requires_grad();
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &mut st, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p.data(), &[0.7; 3]);
        assert!(st.m[0].iter().chain(&st.v[0]).all(|&x| x == 0.0));
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut p = Tensor::scalar(1.0).requires_grad();
        p.grad_mut().unwrap()[0] = 1.0;
        let mut st = AdamState::new([&p]);
        let cfg = AdamConfig::default();
        adam_step(&mut [&mut p], &mut st, 0.01, &cfg).unwrap();
        assert!((p.data()[0] - (1.0 - 0.01 / (1.0 + cfg.eps))).abs() < 1e-15);
        assert_eq!(p.grad().unwrap()[0], 0.0);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = Tensor::scalar(1.0).requires_grad();
        let mut st = AdamState::new([&p]);
        for _ in 0..100 {
            let theta = p.data()[0];
            p.grad_mut().unwrap()[0] = 2.0 * theta;
            adam_step(&mut [&mut p], &mut st, 0.1, &AdamConfig::default()).unwrap();
        }
        assert!(p.data()[0].abs() < 0.05, "{}", p.data()[0]);
    }

    #[test]
    fn adam_matches_scalar_simulation() {
        let cfg = AdamConfig::default();
        let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut p = Tensor::scalar(theta).requires_grad();
        let mut st = AdamState::new([&p]);
        for t in 1..=20 {
            let g = 2.0 * theta;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            theta -= 0.05 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            p.grad_mut().unwrap()[0] = 2.0 * p.data()[0];
            adam_step(&mut [&mut p], &mut st, 0.05, &cfg).unwrap();
            assert!((p.data()[0] - theta).abs() < 1e-14);
        }
    }

    #[test]
    fn early_stopping_patience_one() {
        let mut es = EarlyStopping::new(1);
        assert_eq!(es.update(1, 0.5), StopDecision::Improved);
        assert_eq!(es.update(2, 0.6), StopDecision::Stop);
        assert_eq!(es.best(), (1, 0.5));
    }

    #[test]
    fn early_stopping_resets_on_improvement() {
        let mut es = EarlyStopping::new(3);
        let vals = [1.0, 0.9, 0.95, 0.96, 0.8, 0.85, 0.86, 0.87];
        let decisions: Vec<_> = vals.iter().enumerate().map(|(i, &v)| es.update(i + 1, v)).collect();
        assert_eq!(decisions.last(), Some(&StopDecision::Stop));
        assert_eq!(decisions.iter().filter(|d| **d == StopDecision::Stop).count(), 1);
        assert_eq!(es.best(), (5, 0.8));
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            patience: 0,
            ..TrainConfig::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("learning_rate") && msg.contains("patience"));
    }

    #[test]
    fn streams_differ() {
        use rand::Rng;
        let a: u64 = seeded_rng(2025, RngStream::Init).random();
        let b: u64 = seeded_rng(2025, RngStream::Shuffle).random();
        assert_ne!(a, b);
    }
}
