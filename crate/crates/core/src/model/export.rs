use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::ForwardTrace;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row labels for exported gate matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct GateLabels {
    pub endo: Vec<String>,
    pub exo: Vec<String>,
}

impl GateLabels {
    pub fn generic(n_endo: usize, n_exo: usize) -> Self {
        Self {
            endo: (0..n_endo).map(|i| format!("endo_{i}")).collect(),
            exo: (0..n_exo).map(|i| format!("exo_{i}")).collect(),
        }
    }

    /// Labels of the variate-gate rows: exogenous names, then one global
    /// token per endogenous variable.
    pub fn variate_rows(&self) -> Vec<String> {
        self.exo
            .iter()
            .cloned()
            .chain(self.endo.iter().map(|e| format!("global:{e}")))
            .collect()
    }
}

/// Formats with 6 significant digits in the style of C's `%g`.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        trim_zeros(format!("{x:.*}", (5 - exp) as usize))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn write_matrix(path: &Path, labels: &[String], m: &Tensor) -> Result<()> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    if labels.len() != rows {
        return Err(Error::Usage(format!(
            "{} row labels for a gate with {rows} rows",
            labels.len()
        )));
    }
    let mut out = String::from("label");
    for c in 0..cols {
        let _ = write!(out, ",pos_{c}");
    }
    out.push('\n');
    for (r, label) in labels.iter().enumerate() {
        out.push_str(label);
        for v in &m.data()[r * cols..(r + 1) * cols] {
            out.push(',');
            out.push_str(&format_sig(*v));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes the batch-averaged gates as `time_gate.csv` (`[M, 2d]`) and
/// `variate_gate.csv` (`[C+M, d]`) into `dir`.
pub fn export_gating_weights(trace: &ForwardTrace, labels: &GateLabels, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let time = dir.join("time_gate.csv");
    let variate = dir.join("variate_gate.csv");
    write_matrix(&time, &labels.endo, &trace.time_gate.mean_leading()?)?;
    write_matrix(&variate, &labels.variate_rows(), &trace.variate_gate.mean_leading()?)?;
    Ok((time, variate))
}
