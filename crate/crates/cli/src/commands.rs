use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use xlinear::checkpoint::Checkpoint;
use xlinear::config::RunConfig;
use xlinear::data::{Split, TimeSeriesDataset};
use xlinear::metrics::{evaluate, MetricSet};
use xlinear::model::{export_gating_weights, Ablation, GateActivation, GateLabels, XLinear, XLinearParams};
use xlinear::tensor::Tensor;
use xlinear::training::{seeded_rng, train_with, RngStream, TrainLog};
use xlinear::{Error, Result};

use crate::GlobalArgs;

pub const CHECKPOINT_FILE: &str = "checkpoint.xlc";

fn resolve_config(g: &GlobalArgs, data: Option<PathBuf>) -> Result<RunConfig> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <file> is required for this command".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(d) = data {
        cfg.data_path = d;
    }
    if let Some(o) = &g.out_dir {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(s) = g.scaled_metrics {
        cfg.scaled_metrics = s;
    }
    Ok(cfg)
}

fn load_training_data(cfg: &RunConfig) -> Result<TimeSeriesDataset> {
    TimeSeriesDataset::load_csv(&cfg.data_path, cfg.target_mode)?.split_and_scale(
        &cfg.split_spec()?,
        cfg.lookback,
        cfg.horizon,
    )
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `--out-dir`, else the directory holding the checkpoint.
fn artifact_dir(g: &GlobalArgs, checkpoint: &Path) -> PathBuf {
    g.out_dir.clone().unwrap_or_else(|| {
        checkpoint
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    })
}

fn write_run_files(cfg: &RunConfig, ck: &Checkpoint) -> Result<PathBuf> {
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join(CHECKPOINT_FILE);
    ck.save(&path)?;
    write(&cfg.out_dir.join("resolved_config.json"), &(cfg.to_json_pretty() + "\n"))?;
    Ok(path)
}

pub fn train(g: &GlobalArgs, data: Option<PathBuf>) -> Result<()> {
    let cfg = resolve_config(g, data)?;
    let ds = load_training_data(&cfg)?;
    let mcfg = cfg.model_config(ds.n_endo(), ds.n_exo());
    eprintln!("{}", TrainLog::CSV_HEADER);
    let out = train_with(&mcfg, &cfg.train_config(), &ds, |r| eprintln!("{}", TrainLog::csv_line(r)))?;
    let ck = Checkpoint::new(&cfg, &out.model, &ds, Some((out.log.best_epoch, out.log.best_val_loss)))?;
    let path = write_run_files(&cfg, &ck)?;
    out.log.write_csv(&cfg.out_dir.join("train_log.csv"))?;
    println!(
        "best epoch {} (val MSE {:.6}) of {}{}; checkpoint {}",
        out.log.best_epoch,
        out.log.best_val_loss,
        out.log.epochs.len(),
        if out.log.stopped_early { ", stopped early" } else { "" },
        path.display()
    );
    Ok(())
}

pub fn init(g: &GlobalArgs, zeros: bool, data: Option<PathBuf>) -> Result<()> {
    let cfg = resolve_config(g, data)?;
    let ds = load_training_data(&cfg)?;
    let mcfg = cfg.model_config(ds.n_endo(), ds.n_exo());
    let model = if zeros {
        let params = XLinearParams::zeros(&mcfg);
        XLinear::from_params(mcfg, params)?
    } else {
        XLinear::new(mcfg, &mut seeded_rng(cfg.seed, RngStream::Init))?
    };
    let ck = Checkpoint::new(&cfg, &model, &ds, None)?;
    let path = write_run_files(&cfg, &ck)?;
    println!("untrained checkpoint {}", path.display());
    Ok(())
}

pub fn eval(g: &GlobalArgs, checkpoint: &Path, split: &str, data: Option<PathBuf>) -> Result<()> {
    let split: Split = split.parse()?;
    let ck = Checkpoint::load(checkpoint)?;
    let data_path = data.unwrap_or_else(|| ck.header.run.data_path.clone());
    let ds = ck.prepare_dataset(&data_path)?;
    let model = ck.model()?;
    let scaled = g.scaled_metrics.unwrap_or(ck.header.run.scaled_metrics);
    let report = evaluate(&model, &ds, split, scaled, ck.header.run.batch_size)?;
    let dir = artifact_dir(g, checkpoint);
    create_dir(&dir)?;
    write(&dir.join(format!("metrics_{split}.csv")), &report.to_csv())?;
    print!("{}", report.to_table());
    Ok(())
}

/// Scaled single-window input built from the last `L` rows of `input`.
fn history(ck: &Checkpoint, input: &Path) -> Result<(XLinear, TimeSeriesDataset, Tensor, Tensor)> {
    let model = ck.model()?;
    let mut ds = TimeSeriesDataset::load_csv_history(input, ck.header.run.target_mode)?;
    ck.check_variables(ds.variable_names())?;
    ds.apply_scaler(ck.header.scaler.clone())?;
    let (endo, exo) = ds.trailing_history(model.config().lookback)?;
    Ok((model, ds, endo, exo))
}

pub fn predict(
    g: &GlobalArgs,
    checkpoint: &Path,
    input: &Path,
    horizon: Option<usize>,
    output: Option<PathBuf>,
) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let (model, ds, endo, exo) = history(&ck, input)?;
    let s = model.config().horizon;
    let steps = horizon.unwrap_or(s);
    if steps == 0 || steps > s {
        return Err(Error::Config(format!(
            "--horizon {steps} must be between 1 and the checkpoint's horizon {s}"
        )));
    }
    let y = ds.inverse_scale_forecast(&model.predict(&endo, &exo)?)?;
    let names = ds.endo_names();
    let mut out = format!("step,{}\n", names.join(","));
    for t in 0..steps {
        let _ = write!(out, "{}", t + 1);
        for v in 0..names.len() {
            let _ = write!(out, ",{}", y.data()[v * s + t]);
        }
        out.push('\n');
    }
    let path = match output {
        Some(p) => p,
        None => {
            let dir = artifact_dir(g, checkpoint);
            create_dir(&dir)?;
            dir.join("forecast.csv")
        }
    };
    write(&path, &out)?;
    println!("{steps}-step forecast for {} written to {}", names.join(", "), path.display());
    Ok(())
}

pub fn export_weights(g: &GlobalArgs, checkpoint: &Path, input: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let (model, _, endo, exo) = history(&ck, input)?;
    let mut unused = seeded_rng(0, RngStream::Dropout);
    let (_, trace) = model.forward(&endo, &exo, false, &mut unused)?;
    let labels = GateLabels {
        endo: ck.header.endo_variables.clone(),
        exo: ck.header.exo_variables.clone(),
    };
    let (t, v) = export_gating_weights(&trace, &labels, &artifact_dir(g, checkpoint))?;
    println!("wrote {} and {}", t.display(), v.display());
    Ok(())
}

fn parse_variants(spec: &str) -> Result<Vec<(Ablation, GateActivation)>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (a, act) = match item.split_once(':') {
            Some((a, act)) => (a.parse()?, act.parse()?),
            None => (item.parse()?, GateActivation::Sigmoid),
        };
        if !out.contains(&(a, act)) {
            out.push((a, act));
        }
    }
    if out.is_empty() {
        return Err(Error::Config("--variants is empty".into()));
    }
    Ok(out)
}

pub fn ablate(g: &GlobalArgs, variants: &str, data: Option<PathBuf>) -> Result<()> {
    let variants = parse_variants(variants)?;
    let base = resolve_config(g, data)?;
    let ds = load_training_data(&base)?;
    create_dir(&base.out_dir)?;
    let mut csv = format!(
        "variant,ablation,gate_activation,{},best_epoch,epochs\n",
        MetricSet::NAMES.join(",")
    );
    for (ablation, act) in variants {
        let name = format!("{ablation}:{act}");
        let mut cfg = base.clone();
        cfg.ablation = ablation;
        cfg.gate_activation = act;
        let mcfg = cfg.model_config(ds.n_endo(), ds.n_exo());
        eprintln!("[{name}] {}", TrainLog::CSV_HEADER);
        let out = train_with(&mcfg, &cfg.train_config(), &ds, |r| {
            eprintln!("[{name}] {}", TrainLog::csv_line(r))
        })?;
        out.log
            .write_csv(&base.out_dir.join(format!("train_log_{ablation}_{act}.csv")))?;
        let report = evaluate(&out.model, &ds, Split::Test, cfg.scaled_metrics, cfg.batch_size)?;
        let cells: Vec<String> = report
            .aggregate
            .values()
            .iter()
            .map(|v| v.map_or_else(|| "NA".into(), |x| format!("{x:.6}")))
            .collect();
        let _ = writeln!(
            csv,
            "{name},{ablation},{act},{},{},{}",
            cells.join(","),
            out.log.best_epoch,
            out.log.epochs.len()
        );
        println!("{name}: test MSE {}", cells[0]);
    }
    let path = base.out_dir.join("ablation.csv");
    write(&path, &csv)?;
    println!("comparison written to {}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_parsing() {
        let v = parse_variants("full, es:softmax,gt,full").unwrap();
        assert_eq!(
            v,
            vec![
                (Ablation::Full, GateActivation::Sigmoid),
                (Ablation::EndoOnly, GateActivation::Softmax),
                (Ablation::GlobalOnly, GateActivation::Sigmoid),
            ]
        );
        assert!(parse_variants("full:relu").is_err());
        assert!(parse_variants(" , ").is_err());
    }
}
