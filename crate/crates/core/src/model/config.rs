use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Activation;

/// Squashing function applied to the gating MLP outputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateActivation {
    #[default]
    Sigmoid,
    Swish,
    Tanh,
    /// Normalizes over the axis the gating MLP mixes.
    Softmax,
}

impl GateActivation {
    pub const ALL: [GateActivation; 4] = [
        GateActivation::Sigmoid,
        GateActivation::Swish,
        GateActivation::Tanh,
        GateActivation::Softmax,
    ];

    pub fn activation(self) -> Activation {
        match self {
            GateActivation::Sigmoid => Activation::Sigmoid,
            GateActivation::Swish => Activation::Swish,
            GateActivation::Tanh => Activation::Tanh,
            GateActivation::Softmax => Activation::Softmax,
        }
    }
}

impl fmt::Display for GateActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.activation().fmt(f)
    }
}

impl FromStr for GateActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<Activation>() {
            Ok(Activation::Sigmoid) => Ok(GateActivation::Sigmoid),
            Ok(Activation::Swish) => Ok(GateActivation::Swish),
            Ok(Activation::Tanh) => Ok(GateActivation::Tanh),
            Ok(Activation::Softmax) => Ok(GateActivation::Softmax),
            _ => Err(Error::Config(format!(
                "unknown gate activation `{s}` (expected sigmoid, swish, tanh or softmax)"
            ))),
        }
    }
}

/// Which features reach the prediction head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Gated endogenous embedding and exogenous-informed global tokens.
    #[default]
    Full,
    /// Endogenous half only; the global half of the head input is zeroed.
    #[serde(alias = "es")]
    EndoOnly,
    /// Global tokens only; the endogenous half of the head input is zeroed.
    #[serde(alias = "gt")]
    GlobalOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Full, Ablation::EndoOnly, Ablation::GlobalOnly];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::EndoOnly => "endo_only",
            Ablation::GlobalOnly => "global_only",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "xlinear" => Ok(Ablation::Full),
            "endo_only" | "es" => Ok(Ablation::EndoOnly),
            "global_only" | "gt" => Ok(Ablation::GlobalOnly),
            other => Err(Error::Config(format!(
                "unknown ablation `{other}` (expected full, endo_only or global_only)"
            ))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input window length L.
    pub lookback: usize,
    /// Forecast horizon S.
    pub horizon: usize,
    /// Endogenous variables M.
    pub n_endo: usize,
    /// Exogenous variables C.
    pub n_exo: usize,
    pub d_model: usize,
    pub t_ff: usize,
    pub c_ff: usize,
    pub embed_dropout: f64,
    pub t_dropout: f64,
    pub c_dropout: f64,
    pub head_dropout: f64,
    pub gate_activation: GateActivation,
    pub ablation: Ablation,
    pub revin_affine: bool,
    /// Reuse the endogenous embedding for exogenous series.
    pub share_embedding: bool,
}

pub const REVIN_EPS: f64 = 1e-5;

impl ModelConfig {
    /// Defaults for everything except the data-dependent sizes.
    pub fn new(lookback: usize, horizon: usize, n_endo: usize, n_exo: usize) -> Self {
        Self {
            lookback,
            horizon,
            n_endo,
            n_exo,
            d_model: 256,
            t_ff: 512,
            c_ff: 512,
            embed_dropout: 0.1,
            t_dropout: 0.1,
            c_dropout: 0.1,
            head_dropout: 0.1,
            gate_activation: GateActivation::Sigmoid,
            ablation: Ablation::Full,
            revin_affine: true,
            share_embedding: false,
        }
    }

    pub fn without_dropout(mut self) -> Self {
        self.embed_dropout = 0.0;
        self.t_dropout = 0.0;
        self.c_dropout = 0.0;
        self.head_dropout = 0.0;
        self
    }

    /// Lists every violated constraint at once.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        for (name, v) in [
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("n_endo", self.n_endo),
            ("d_model", self.d_model),
            ("t_ff", self.t_ff),
            ("c_ff", self.c_ff),
        ] {
            if v == 0 {
                issues.push(format!("{name} must be at least 1"));
            }
        }
        if self.lookback < 2 {
            issues.push("lookback must be at least 2 for instance normalization".to_string());
        }
        for (name, p) in [
            ("embed_dropout", self.embed_dropout),
            ("t_dropout", self.t_dropout),
            ("c_dropout", self.c_dropout),
            ("head_dropout", self.head_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                issues.push(format!("{name} = {p} outside [0, 1)"));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues.join("; ")))
        }
    }

    /// Number of channels stacked in the variate-wise gate (C + M).
    pub fn n_channels(&self) -> usize {
        self.n_exo + self.n_endo
    }

    pub fn parameter_count(&self) -> usize {
        let (l, d, s) = (self.lookback, self.d_model, self.horizon);
        let (m, ch) = (self.n_endo, self.n_channels());
        let embeddings = if self.share_embedding { 1 } else { 2 };
        let revin = if self.revin_affine { 2 * m } else { 0 };
        (l + 1) * d * embeddings
            + m * d
            + (2 * d + 1) * self.t_ff
            + (self.t_ff + 1) * 2 * d
            + (ch + 1) * self.c_ff
            + (self.c_ff + 1) * ch
            + (2 * d + 1) * s
            + revin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_collects_all_issues() {
        let mut cfg = ModelConfig::new(96, 96, 1, 6);
        cfg.d_model = 0;
        cfg.head_dropout = 1.0;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("d_model") && msg.contains("head_dropout"), "{msg}");
    }

    #[test]
    fn gate_activation_rejects_relu() {
        assert!("relu".parse::<GateActivation>().is_err());
        assert_eq!("tanh".parse::<GateActivation>().unwrap(), GateActivation::Tanh);
    }

    #[test]
    fn ablation_aliases() {
        assert_eq!("ES".parse::<Ablation>().unwrap(), Ablation::EndoOnly);
        assert_eq!("gt".parse::<Ablation>().unwrap(), Ablation::GlobalOnly);
        let a: Ablation = serde_json::from_str("\"gt\"").unwrap();
        assert_eq!(a, Ablation::GlobalOnly);
    }
}
