//! Flat JSON run configuration with strict, per-key validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{SplitSpec, TargetMode};
use crate::error::{Error, Result};
use crate::model::{Ablation, GateActivation, ModelConfig};
use crate::training::{AdamConfig, TrainConfig};

/// How rows are divided into train/val/test. In JSON either one of
/// `"auto"`, `"ett_hourly"`, `"ett_minutely"` or a `[train, val, test]`
/// array of fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSetting {
    Named(String),
    Ratios([f64; 3]),
}

impl SplitSetting {
    pub fn to_spec(&self) -> Result<SplitSpec> {
        match self {
            SplitSetting::Named(s) => match s.as_str() {
                "auto" => Ok(SplitSpec::Auto),
                "ett_hourly" => Ok(SplitSpec::EttHourly),
                "ett_minutely" => Ok(SplitSpec::EttMinutely),
                other => Err(Error::Config(format!(
                    "unknown split `{other}` (expected auto, ett_hourly, ett_minutely or [train, val, test] fractions)"
                ))),
            },
            SplitSetting::Ratios(r) => {
                let ok = r.iter().all(|x| *x > 0.0 && x.is_finite()) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9;
                if ok {
                    Ok(SplitSpec::Ratios(*r))
                } else {
                    Err(Error::Config(format!("split fractions {r:?} must be positive and sum to 1")))
                }
            }
        }
    }
}

/// Everything one run needs. Serializes to the same flat JSON it accepts,
/// with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_path: PathBuf,
    pub target_mode: TargetMode,
    pub split: SplitSetting,
    pub lookback: usize,
    pub horizon: usize,

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
    pub share_embedding: bool,

    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_batches_per_epoch: Option<usize>,

    pub scaled_metrics: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(96, 96, 1, 0);
        let t = TrainConfig::default();
        Self {
            data_path: PathBuf::new(),
            target_mode: TargetMode::LastColumn,
            split: SplitSetting::Named("auto".into()),
            lookback: m.lookback,
            horizon: m.horizon,
            d_model: m.d_model,
            t_ff: m.t_ff,
            c_ff: m.c_ff,
            embed_dropout: m.embed_dropout,
            t_dropout: m.t_dropout,
            c_dropout: m.c_dropout,
            head_dropout: m.head_dropout,
            gate_activation: m.gate_activation,
            ablation: m.ablation,
            revin_affine: m.revin_affine,
            share_embedding: m.share_embedding,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            adam_beta1: t.adam.beta1,
            adam_beta2: t.adam.beta2,
            adam_eps: t.adam.eps,
            max_batches_per_epoch: t.max_batches_per_epoch,
            scaled_metrics: true,
            out_dir: PathBuf::from("runs/xlinear"),
        }
    }
}

fn describe(e: &serde_json::Error) -> String {
    // serde_json appends " at line N column M", meaningless for a single value.
    let s = e.to_string();
    match s.find(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

impl RunConfig {
    /// Parses a JSON object. Every unknown key and every ill-typed value is
    /// reported in one error, each message naming its key.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        let Value::Object(given) = value else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let Value::Object(defaults) = serde_json::to_value(Self::default()).expect("config serializes") else {
            unreachable!("RunConfig serializes to an object")
        };

        let mut issues = Vec::new();
        let mut merged: Map<String, Value> = defaults.clone();
        for (key, v) in &given {
            if !defaults.contains_key(key) {
                issues.push(format!("unknown key `{key}`"));
                continue;
            }
            let mut probe = defaults.clone();
            probe.insert(key.clone(), v.clone());
            match serde_json::from_value::<Self>(Value::Object(probe)) {
                Ok(_) => {
                    merged.insert(key.clone(), v.clone());
                }
                Err(e) => issues.push(format!("key `{key}`: {}", describe(&e))),
            }
        }
        if !issues.is_empty() {
            return Err(Error::Config(issues.join("; ")));
        }
        let cfg: Self = serde_json::from_value(Value::Object(merged))
            .map_err(|e| Error::Config(describe(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Semantic checks, each message naming its key.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.data_path.as_os_str().is_empty() {
            issues.push("key `data_path`: required".to_string());
        }
        if let Err(e) = self.split.to_spec() {
            issues.push(format!("key `split`: {}", inner(e)));
        }
        for (key, v) in [
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("d_model", self.d_model),
            ("t_ff", self.t_ff),
            ("c_ff", self.c_ff),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                issues.push(format!("key `{key}`: must be at least 1"));
            }
        }
        if self.lookback == 1 {
            issues.push("key `lookback`: must be at least 2".to_string());
        }
        for (key, p) in [
            ("embed_dropout", self.embed_dropout),
            ("t_dropout", self.t_dropout),
            ("c_dropout", self.c_dropout),
            ("head_dropout", self.head_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                issues.push(format!("key `{key}`: {p} outside [0, 1)"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            issues.push(format!("key `learning_rate`: must be positive, got {}", self.learning_rate));
        }
        for (key, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                issues.push(format!("key `{key}`: {b} outside [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            issues.push(format!("key `adam_eps`: must be positive, got {}", self.adam_eps));
        }
        if self.max_batches_per_epoch == Some(0) {
            issues.push("key `max_batches_per_epoch`: must be at least 1 or null".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues.join("; ")))
        }
    }

    /// Pretty JSON with every field materialized; feeding it back to
    /// [`RunConfig::from_json_str`] yields an identical config.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        self.split.to_spec()
    }

    pub fn model_config(&self, n_endo: usize, n_exo: usize) -> ModelConfig {
        ModelConfig {
            lookback: self.lookback,
            horizon: self.horizon,
            n_endo,
            n_exo,
            d_model: self.d_model,
            t_ff: self.t_ff,
            c_ff: self.c_ff,
            embed_dropout: self.embed_dropout,
            t_dropout: self.t_dropout,
            c_dropout: self.c_dropout,
            head_dropout: self.head_dropout,
            gate_activation: self.gate_activation,
            ablation: self.ablation,
            revin_affine: self.revin_affine,
            share_embedding: self.share_embedding,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            adam: AdamConfig {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                eps: self.adam_eps,
            },
            max_batches_per_epoch: self.max_batches_per_epoch,
        }
    }
}

fn inner(e: Error) -> String {
    match e {
        Error::Config(s) => s,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_filled() {
        let cfg = RunConfig::from_json_str(r#"{"data_path": "ETTh1.csv"}"#).unwrap();
        assert_eq!(cfg.d_model, 256);
        assert_eq!(cfg.seed, 2025);
        assert_eq!(cfg.split_spec().unwrap(), SplitSpec::Auto);
    }

    #[test]
    fn every_bad_key_is_listed() {
        let err = RunConfig::from_json_str(
            r#"{"data_path": "x.csv", "gate_activation": "gelu", "d_modle": 3, "batch_size": -1, "extra": true}"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        for key in ["gate_activation", "d_modle", "batch_size", "extra"] {
            assert!(msg.contains(&format!("`{key}`")), "{key} missing from {msg}");
        }
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn semantic_errors_name_keys() {
        let msg = RunConfig::from_json_str(r#"{"data_path": "x.csv", "patience": 0, "split": [0.5, 0.5, 0.5]}"#)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("`patience`") && msg.contains("`split`"), "{msg}");
        let msg = RunConfig::from_json_str("{}").unwrap_err().to_string();
        assert!(msg.contains("`data_path`"));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::from_json_str(
            r#"{"data_path": "a.csv", "target_mode": "MS", "split": [0.6, 0.2, 0.2], "learning_rate": 3e-4,
                "ablation": "gt", "max_batches_per_epoch": 5}"#,
        )
        .unwrap();
        assert_eq!(cfg.target_mode, TargetMode::LastColumn);
        let back = RunConfig::from_json_str(&cfg.to_json_pretty()).unwrap();
        assert_eq!(back, cfg);
    }
}
