//! Individual forward stages, each recorded on a [`Tape`].

use rand::RngCore;

use super::config::{Ablation, ModelConfig, REVIN_EPS};
use super::params::{BoundLinear, BoundParams};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Per-window, per-variable location and scale of a `[B, V, L]` input.
#[derive(Clone, Debug, PartialEq)]
pub struct RevinStats {
    pub batch: usize,
    pub vars: usize,
    /// `[B * V]`, row-major.
    pub mean: Vec<f64>,
    /// `sqrt(population variance + eps)`, `[B * V]`.
    pub std: Vec<f64>,
}

impl RevinStats {
    pub fn compute(x: &Tensor) -> Result<Self> {
        let &[batch, vars, len] = x.shape() else {
            return Err(Error::shape(
                "revin",
                format!("expected [batch, vars, time], got {:?}", x.shape()),
            ));
        };
        if len == 0 {
            return Err(Error::shape("revin", "empty time axis"));
        }
        let mut mean = Vec::with_capacity(batch * vars);
        let mut std = Vec::with_capacity(batch * vars);
        for row in x.data().chunks_exact(len) {
            let mu = row.iter().sum::<f64>() / len as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / len as f64;
            mean.push(mu);
            std.push((var + REVIN_EPS).sqrt());
        }
        Ok(Self { batch, vars, mean, std })
    }

    pub fn normalize(&self, x: &Tensor) -> Tensor {
        let len = x.len() / (self.batch * self.vars).max(1);
        Tensor::from_fn(x.shape(), |i| {
            let r = i / len;
            (x.data()[i] - self.mean[r]) / self.std[r]
        })
    }

    fn column(&self, values: &[f64]) -> Tensor {
        Tensor::new(&[self.batch, self.vars, 1], values.to_vec()).expect("stats sized B*V")
    }
}

/// Normalizes each series by its own window statistics, then applies the
/// optional per-variable affine `z * γ + β`.
pub fn revin_normalize(
    tape: &mut Tape,
    x: &Tensor,
    affine: Option<(Var, Var)>,
) -> Result<(Var, RevinStats)> {
    let stats = RevinStats::compute(x)?;
    let z = tape.constant(stats.normalize(x));
    let out = match affine {
        Some((gamma, beta)) => {
            let (g, b) = per_variable(tape, gamma, beta, stats.vars)?;
            let scaled = tape.mul(z, g)?;
            tape.add(scaled, b)?
        }
        None => z,
    };
    Ok((out, stats))
}

/// Inverse of [`revin_normalize`] for a `[B, V, S]` forecast:
/// `((y - β) / (γ + eps²)) * std + mean`.
pub fn revin_denormalize(
    tape: &mut Tape,
    y: Var,
    stats: &RevinStats,
    affine: Option<(Var, Var)>,
) -> Result<Var> {
    let mut y = y;
    if let Some((gamma, beta)) = affine {
        let (g, b) = per_variable(tape, gamma, beta, stats.vars)?;
        let eps = tape.constant(Tensor::full(&[1], REVIN_EPS * REVIN_EPS));
        let denom = tape.add(g, eps)?;
        let shifted = tape.sub(y, b)?;
        y = tape.div(shifted, denom)?;
    }
    let std = tape.constant(stats.column(&stats.std));
    let mean = tape.constant(stats.column(&stats.mean));
    let scaled = tape.mul(y, std)?;
    tape.add(scaled, mean)
}

fn per_variable(tape: &mut Tape, gamma: Var, beta: Var, vars: usize) -> Result<(Var, Var)> {
    Ok((tape.reshape(gamma, &[vars, 1])?, tape.reshape(beta, &[vars, 1])?))
}

fn linear(tape: &mut Tape, x: Var, l: BoundLinear) -> Result<Var> {
    tape.linear(x, l.weight, Some(l.bias))
}

/// Projects every series (endogenous `[B, M, L]`, exogenous `[B, C, L]`)
/// from the time axis to `d_model`.
pub fn embed(
    tape: &mut Tape,
    p: &BoundParams,
    cfg: &ModelConfig,
    endo: Var,
    exo: Var,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<(Var, Var)> {
    let e = linear(tape, endo, p.embed_endo)?;
    let e = tape.dropout(e, cfg.embed_dropout, training, rng)?;
    let x = linear(tape, exo, p.embed_exo)?;
    let x = tape.dropout(x, cfg.embed_dropout, training, rng)?;
    Ok((e, x))
}

/// Broadcasts the `[M, d]` tokens over the batch and appends them to the
/// endogenous embedding along the feature axis: `[B, M, 2d]`.
pub fn attach_global_tokens(tape: &mut Tape, endo_embed: Var, tokens: Var) -> Result<Var> {
    let shape = tape.shape(endo_embed).to_vec();
    let zeros = tape.zeros(&shape);
    let broadcast = tape.add(zeros, tokens)?;
    tape.concat(&[endo_embed, broadcast], 2)
}

/// Gated MLP along the last axis: `act(lin2(drop(relu(lin1(x))))) ⊙ x`.
/// Returns the gated tensor and the gate.
fn gated_mlp(
    tape: &mut Tape,
    x: Var,
    first: BoundLinear,
    second: BoundLinear,
    cfg: &ModelConfig,
    dropout: f64,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<(Var, Var)> {
    let h = linear(tape, x, first)?;
    let h = tape.relu(h);
    let h = tape.dropout(h, dropout, training, rng)?;
    let h = linear(tape, h, second)?;
    let gate = tape.activation(h, cfg.gate_activation.activation());
    Ok((tape.mul(gate, x)?, gate))
}

#[derive(Clone, Copy, Debug)]
pub struct TimeGateOutput {
    /// Gated endogenous half, `[B, M, d]`.
    pub endo: Var,
    /// Gated global-token half, `[B, M, d]`.
    pub global: Var,
    /// `[B, M, 2d]`.
    pub gate: Var,
}

/// Time-wise gating over the `[B, M, 2d]` token tensor.
pub fn time_gate(
    tape: &mut Tape,
    p: &BoundParams,
    cfg: &ModelConfig,
    tokens: Var,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<TimeGateOutput> {
    let (gated, gate) = gated_mlp(tape, tokens, p.tgm_in, p.tgm_out, cfg, cfg.t_dropout, training, rng)?;
    let halves = tape.split(gated, 2, &[cfg.d_model, cfg.d_model])?;
    Ok(TimeGateOutput {
        endo: halves[0],
        global: halves[1],
        gate,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct VariateGateOutput {
    /// Gated exogenous embeddings, `[B, C, d]`.
    pub exo: Var,
    /// Global tokens after mixing with the exogenous channels, `[B, M, d]`.
    pub global: Var,
    /// `[B, C+M, d]`, channels ordered exogenous first.
    pub gate: Var,
}

/// Variate-wise gating: the exogenous embeddings and the gated global tokens
/// are stacked along the channel axis and an MLP mixes across channels.
pub fn variate_gate(
    tape: &mut Tape,
    p: &BoundParams,
    cfg: &ModelConfig,
    exo_embed: Var,
    global: Var,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<VariateGateOutput> {
    let stacked = tape.concat(&[exo_embed, global], 1)?;
    let channels_last = tape.swap_axes(stacked, 1, 2)?;
    let (_, gate_t) = gated_mlp(tape, channels_last, p.vgm_in, p.vgm_out, cfg, cfg.c_dropout, training, rng)?;
    let gate = tape.swap_axes(gate_t, 1, 2)?;
    let gated = tape.mul(gate, stacked)?;
    let parts = tape.split(gated, 1, &[cfg.n_exo, cfg.n_endo])?;
    Ok(VariateGateOutput {
        exo: parts[0],
        global: parts[1],
        gate,
    })
}

/// Shared linear head on `[X'_endo ‖ X''_glob]`, producing `[B, M, S]` in
/// normalized space. Ablations replace the unused half with zeros.
pub fn head(
    tape: &mut Tape,
    p: &BoundParams,
    cfg: &ModelConfig,
    endo: Var,
    global: Var,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<Var> {
    let (endo, global) = match cfg.ablation {
        Ablation::Full => (endo, global),
        Ablation::EndoOnly => {
            let shape = tape.shape(global).to_vec();
            (endo, tape.zeros(&shape))
        }
        Ablation::GlobalOnly => {
            let shape = tape.shape(endo).to_vec();
            (tape.zeros(&shape), global)
        }
    };
    let features = tape.concat(&[endo, global], 2)?;
    let features = tape.dropout(features, cfg.head_dropout, training, rng)?;
    linear(tape, features, p.head)
}
