//! The gated linear forecaster: instance normalization, per-series
//! embeddings, a time-wise gate over endogenous embeddings and global
//! tokens, a variate-wise gate mixing exogenous channels into the tokens,
//! and a shared linear head.

mod config;
mod export;
pub mod layers;
mod params;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{Ablation, GateActivation, ModelConfig, REVIN_EPS};
pub use export::{export_gating_weights, format_sig, GateLabels};
pub use layers::RevinStats;
pub use params::{BoundLinear, BoundParams, Linear, XLinearParams};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Tape handles of one forward pass.
#[derive(Clone, Debug)]
pub struct Graph {
    /// `[B, M, S]` in the input's (scaled) units.
    pub prediction: Var,
    pub time_gate: Var,
    pub variate_gate: Var,
    pub exo_gated: Var,
    pub stats: RevinStats,
}

/// Materialized intermediate values of a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub prediction: Tensor,
    /// `[B, M, 2d]`.
    pub time_gate: Tensor,
    /// `[B, C+M, d]`, exogenous channels first.
    pub variate_gate: Tensor,
    /// `[B, C, d]`.
    pub exo_gated: Tensor,
    pub revin: RevinStats,
}

fn check_input(name: &str, t: &Tensor, batch: Option<usize>, vars: usize, len: usize) -> Result<usize> {
    match *t.shape() {
        [b, v, l] if v == vars && l == len && batch.is_none_or(|bb| bb == b) => Ok(b),
        _ => Err(Error::shape(
            "forward",
            format!(
                "{name} input has shape {:?}, expected [{}, {vars}, {len}]",
                t.shape(),
                batch.map_or("B".to_string(), |b| b.to_string())
            ),
        )),
    }
}

/// Records the full forward pass on `tape`. Every stage is checked for
/// non-finite values and the first offender is reported by name.
pub fn build_graph(
    tape: &mut Tape,
    p: &BoundParams,
    cfg: &ModelConfig,
    endo: &Tensor,
    exo: &Tensor,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<Graph> {
    let b = check_input("endogenous", endo, None, cfg.n_endo, cfg.lookback)?;
    check_input("exogenous", exo, Some(b), cfg.n_exo, cfg.lookback)?;

    let (endo_n, stats) = layers::revin_normalize(tape, endo, p.revin_affine)?;
    let (exo_n, _) = layers::revin_normalize(tape, exo, None)?;
    tape.check_finite(endo_n, "revin")?;
    tape.check_finite(exo_n, "revin")?;

    let (endo_e, exo_e) = layers::embed(tape, p, cfg, endo_n, exo_n, training, rng)?;
    tape.check_finite(endo_e, "embed")?;
    tape.check_finite(exo_e, "embed")?;

    let tokens = layers::attach_global_tokens(tape, endo_e, p.global_tokens)?;
    let tg = layers::time_gate(tape, p, cfg, tokens, training, rng)?;
    tape.check_finite(tg.gate, "time_gate")?;

    let vg = layers::variate_gate(tape, p, cfg, exo_e, tg.global, training, rng)?;
    tape.check_finite(vg.gate, "variate_gate")?;

    let y = layers::head(tape, p, cfg, tg.endo, vg.global, training, rng)?;
    tape.check_finite(y, "head")?;
    let prediction = layers::revin_denormalize(tape, y, &stats, p.revin_affine)?;
    tape.check_finite(prediction, "denormalize")?;

    Ok(Graph {
        prediction,
        time_gate: tg.gate,
        variate_gate: vg.gate,
        exo_gated: vg.exo,
        stats,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct XLinear {
    config: ModelConfig,
    params: XLinearParams,
}

impl XLinear {
    pub fn new(config: ModelConfig, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let params = XLinearParams::init(&config, rng);
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: XLinearParams) -> Result<Self> {
        config.validate()?;
        let params = XLinearParams::from_tensors(&config, params.to_tensors())?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &XLinearParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut XLinearParams {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, XLinearParams) {
        (self.config, self.params)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    /// Runs the model. `rng` is only consumed by dropout in training mode.
    pub fn forward(
        &self,
        endo: &Tensor,
        exo: &Tensor,
        training: bool,
        rng: &mut dyn RngCore,
    ) -> Result<(Tensor, ForwardTrace)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let g = build_graph(&mut tape, &bound, &self.config, endo, exo, training, rng)?;
        let trace = ForwardTrace {
            prediction: tape.tensor(g.prediction),
            time_gate: tape.tensor(g.time_gate),
            variate_gate: tape.tensor(g.variate_gate),
            exo_gated: tape.tensor(g.exo_gated),
            revin: g.stats,
        };
        Ok((trace.prediction.clone(), trace))
    }

    /// Inference-mode forward pass.
    pub fn predict(&self, endo: &Tensor, exo: &Tensor) -> Result<Tensor> {
        // Dropout is inactive outside training, so this generator is never drawn from.
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        self.forward(endo, exo, false, &mut unused).map(|(y, _)| y)
    }
}
