//! CSV ingestion, train/val/test splitting, z-score scaling and sliding
//! window batches.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which columns are forecast targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Every column is both endogenous and exogenous.
    #[serde(alias = "M")]
    Multivariate,
    /// The final column is the only endogenous variable; the rest are
    /// exogenous covariates.
    #[serde(alias = "MS")]
    LastColumn,
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multivariate" | "M" => Ok(TargetMode::Multivariate),
            "last_column" | "last-column-endogenous" | "MS" => Ok(TargetMode::LastColumn),
            other => Err(Error::Config(format!(
                "unknown target mode `{other}` (expected multivariate or last_column)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split `{other}` (expected train, val or test)"
            ))),
        }
    }
}

/// How rows are divided into train/val/test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// ETT month borders when the file name starts with `ETTh`/`ETTm`,
    /// otherwise 0.7/0.1/0.2 ratios.
    Auto,
    /// Fractions of rows; train and test are floored, val takes the rest.
    Ratios([f64; 3]),
    /// 12/4/4 months of hourly rows: 8640/2880/2880.
    EttHourly,
    /// 12/4/4 months of 15-minute rows: 34560/11520/11520.
    EttMinutely,
}

const ETT_HOURLY_MONTH: usize = 30 * 24;

/// Half-open row ranges of the three splits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitBounds {
    pub fn get(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Val => self.val.clone(),
            Split::Test => self.test.clone(),
        }
    }

    pub fn resolve(spec: &SplitSpec, rows: usize, dataset_name: &str) -> Result<Self> {
        let month_split = |month: usize| -> Result<Self> {
            let (tr, va, te) = (12 * month, 4 * month, 4 * month);
            if rows < tr + va + te {
                return Err(Error::Data(format!(
                    "ETT month split needs {} rows, dataset has {rows}",
                    tr + va + te
                )));
            }
            Ok(Self {
                train: 0..tr,
                val: tr..tr + va,
                test: tr + va..tr + va + te,
            })
        };
        match spec {
            SplitSpec::Auto => {
                if dataset_name.starts_with("ETTh") {
                    month_split(ETT_HOURLY_MONTH)
                } else if dataset_name.starts_with("ETTm") {
                    month_split(4 * ETT_HOURLY_MONTH)
                } else {
                    Self::from_ratios([0.7, 0.1, 0.2], rows)
                }
            }
            SplitSpec::Ratios(r) => Self::from_ratios(*r, rows),
            SplitSpec::EttHourly => month_split(ETT_HOURLY_MONTH),
            SplitSpec::EttMinutely => month_split(4 * ETT_HOURLY_MONTH),
        }
    }

    pub fn from_ratios(ratios: [f64; 3], rows: usize) -> Result<Self> {
        if ratios.iter().any(|&r| !(r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios {ratios:?} must be positive and sum to 1"
            )));
        }
        let floor = |r: f64| (r * rows as f64 + 1e-9).floor() as usize;
        let n_train = floor(ratios[0]);
        let n_test = floor(ratios[2]);
        let n_val = rows.saturating_sub(n_train + n_test);
        Ok(Self {
            train: 0..n_train,
            val: n_train..n_train + n_val,
            test: n_train + n_val..rows,
        })
    }
}

/// Per-variable z-score statistics (population standard deviation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fits on `rows` of a row-major `[T × n_vars]` buffer.
    pub fn fit(values: &[f64], n_vars: usize, rows: Range<usize>, names: &[String]) -> Result<Self> {
        let n = rows.len() as f64;
        if rows.is_empty() {
            return Err(Error::Data("cannot fit scaler on an empty row range".into()));
        }
        let mut mean = vec![0.0; n_vars];
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(&values[r * n_vars..(r + 1) * n_vars]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; n_vars];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(&values[r * n_vars..(r + 1) * n_vars]).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
        if let Some(j) = std.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::Data(format!(
                "column {j} (`{}`) is constant over the training rows",
                names.get(j).map(String::as_str).unwrap_or("?")
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn n_vars(&self) -> usize {
        self.mean.len()
    }

    pub fn scale(&self, var: usize, x: f64) -> f64 {
        (x - self.mean[var]) / self.std[var]
    }

    pub fn unscale(&self, var: usize, z: f64) -> f64 {
        z * self.std[var] + self.mean[var]
    }
}

/// One batch of sliding windows.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    /// Window origin `t` of each sample: inputs cover `[t, t+L)`, targets
    /// `[t+L, t+L+S)`.
    pub origins: Vec<usize>,
    /// `[batch, M, L]`
    pub endo_history: Tensor,
    /// `[batch, C, L]`
    pub exo_history: Tensor,
    /// `[batch, M, S]`
    pub endo_future: Tensor,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

/// Aligned multivariate series. Values are stored row-major `[T × V]`;
/// after [`TimeSeriesDataset::split_and_scale`] they are z-scores.
#[derive(Clone, Debug)]
pub struct TimeSeriesDataset {
    name: String,
    variable_names: Vec<String>,
    values: Vec<f64>,
    timestamps: Option<Vec<String>>,
    target_mode: TargetMode,
    scaler: Option<Scaler>,
    splits: Option<SplitBounds>,
}

impl TimeSeriesDataset {
    /// Builds a dataset from row-major values, rejecting non-finite cells
    /// and constant columns.
    pub fn from_rows(
        name: impl Into<String>,
        variable_names: Vec<String>,
        values: Vec<f64>,
        timestamps: Option<Vec<String>>,
        target_mode: TargetMode,
    ) -> Result<Self> {
        Self::assemble(name.into(), variable_names, values, timestamps, target_mode, true)
    }

    fn assemble(
        name: String,
        variable_names: Vec<String>,
        values: Vec<f64>,
        timestamps: Option<Vec<String>>,
        target_mode: TargetMode,
        reject_constant: bool,
    ) -> Result<Self> {
        let v = variable_names.len();
        if v == 0 {
            return Err(Error::Data("dataset has no variables".into()));
        }
        if target_mode == TargetMode::LastColumn && v < 2 {
            return Err(Error::Data(
                "last-column mode needs at least one exogenous column besides the target".into(),
            ));
        }
        if !values.len().is_multiple_of(v) {
            return Err(Error::Data(format!(
                "{} values do not form rows of {v} variables",
                values.len()
            )));
        }
        let rows = values.len() / v;
        if rows < 2 {
            return Err(Error::Data(format!("dataset has only {rows} rows")));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != rows {
                return Err(Error::Data(format!(
                    "{} timestamps for {rows} rows",
                    ts.len()
                )));
            }
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column `{}`",
                pos / v,
                variable_names[pos % v]
            )));
        }
        for (j, col) in variable_names.iter().enumerate().filter(|_| reject_constant) {
            let first = values[j];
            if values.iter().skip(j).step_by(v).all(|&x| x == first) {
                return Err(Error::Data(format!(
                    "column {j} (`{col}`) is constant; constant columns cannot be standardized"
                )));
            }
        }
        Ok(Self {
            name,
            variable_names,
            values,
            timestamps,
            target_mode,
            scaler: None,
            splits: None,
        })
    }

    /// Reads a UTF-8 comma-separated file with a header row. A leading
    /// `date` column is kept as timestamps and excluded from modeling.
    pub fn load_csv(path: impl AsRef<Path>, target_mode: TargetMode) -> Result<Self> {
        Self::read_csv(path.as_ref(), target_mode, true)
    }

    /// Like [`TimeSeriesDataset::load_csv`] but accepts constant columns,
    /// for history fed to an already-fitted scaler at inference time.
    pub fn load_csv_history(path: impl AsRef<Path>, target_mode: TargetMode) -> Result<Self> {
        Self::read_csv(path.as_ref(), target_mode, false)
    }

    fn read_csv(path: &Path, target_mode: TargetMode, reject_constant: bool) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(std::io::BufReader::new(file));
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Data(format!("{}: cannot read header: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.is_empty() {
            return Err(Error::Data(format!("{}: empty header", path.display())));
        }
        let has_date = headers[0].eq_ignore_ascii_case("date");
        let names: Vec<String> = headers[usize::from(has_date)..].to_vec();
        let width = headers.len();

        let mut values = Vec::new();
        let mut stamps = has_date.then(Vec::new);
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Data(format!("data row {row}: {e}")))?;
            if record.len() != width {
                return Err(Error::Data(format!(
                    "data row {row} has {} fields, header has {width}",
                    record.len()
                )));
            }
            let mut cells = record.iter();
            if let Some(s) = stamps.as_mut() {
                s.push(cells.next().unwrap_or_default().trim().to_string());
            }
            for (col, cell) in cells.enumerate() {
                let cell = cell.trim();
                let x: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "data row {row}, column {col} (`{}`): cannot parse `{cell}` as a number",
                        names[col]
                    ))
                })?;
                if !x.is_finite() {
                    return Err(Error::Data(format!(
                        "data row {row}, column {col} (`{}`): missing or non-finite value `{cell}`",
                        names[col]
                    )));
                }
                values.push(x);
            }
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::assemble(name, names, values, stamps, target_mode, reject_constant)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn n_vars(&self) -> usize {
        self.variable_names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_vars()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, row: usize, var: usize) -> f64 {
        self.values[row * self.n_vars() + var]
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn target_mode(&self) -> TargetMode {
        self.target_mode
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        self.scaler.as_ref()
    }

    pub fn split_bounds(&self) -> Option<&SplitBounds> {
        self.splits.as_ref()
    }

    pub fn endo_indices(&self) -> Vec<usize> {
        match self.target_mode {
            TargetMode::Multivariate => (0..self.n_vars()).collect(),
            TargetMode::LastColumn => vec![self.n_vars() - 1],
        }
    }

    pub fn exo_indices(&self) -> Vec<usize> {
        match self.target_mode {
            TargetMode::Multivariate => (0..self.n_vars()).collect(),
            TargetMode::LastColumn => (0..self.n_vars() - 1).collect(),
        }
    }

    pub fn endo_names(&self) -> Vec<String> {
        self.endo_indices().into_iter().map(|i| self.variable_names[i].clone()).collect()
    }

    pub fn exo_names(&self) -> Vec<String> {
        self.exo_indices().into_iter().map(|i| self.variable_names[i].clone()).collect()
    }

    /// Number of endogenous variables (M).
    pub fn n_endo(&self) -> usize {
        self.endo_indices().len()
    }

    /// Number of exogenous variables (C).
    pub fn n_exo(&self) -> usize {
        self.exo_indices().len()
    }

    /// Resolves split bounds, fits the scaler on training rows only and
    /// standardizes every row. Each split must hold at least one window of
    /// `lookback + horizon` rows, where val/test may borrow history from the
    /// preceding split.
    pub fn split_and_scale(self, spec: &SplitSpec, lookback: usize, horizon: usize) -> Result<Self> {
        let bounds = SplitBounds::resolve(spec, self.n_rows(), &self.name)?;
        let scaler = Scaler::fit(&self.values, self.n_vars(), bounds.train.clone(), &self.variable_names)?;
        let mut ds = self.with_bounds(bounds)?;
        ds.check_windows(lookback, horizon)?;
        ds.apply_scaler(scaler)?;
        Ok(ds)
    }

    /// Uses precomputed split bounds and scaler, e.g. from a checkpoint.
    pub fn with_bounds_and_scaler(self, bounds: SplitBounds, scaler: Scaler) -> Result<Self> {
        let mut ds = self.with_bounds(bounds)?;
        ds.apply_scaler(scaler)?;
        Ok(ds)
    }

    fn with_bounds(mut self, bounds: SplitBounds) -> Result<Self> {
        let ordered = bounds.train.start <= bounds.train.end
            && bounds.train.end <= bounds.val.start
            && bounds.val.start <= bounds.val.end
            && bounds.val.end <= bounds.test.start
            && bounds.test.start <= bounds.test.end
            && bounds.test.end <= self.n_rows();
        if !ordered {
            return Err(Error::Data(format!(
                "split bounds {bounds:?} are not ordered within {} rows",
                self.n_rows()
            )));
        }
        self.splits = Some(bounds);
        Ok(self)
    }

    /// Standardizes all values with an externally supplied scaler.
    pub fn apply_scaler(&mut self, scaler: Scaler) -> Result<()> {
        if self.scaler.is_some() {
            return Err(Error::Usage("dataset is already scaled".into()));
        }
        if scaler.n_vars() != self.n_vars() {
            return Err(Error::shape(
                "apply_scaler",
                format!(
                    "scaler covers {} variables, dataset has {}",
                    scaler.n_vars(),
                    self.n_vars()
                ),
            ));
        }
        let v = self.n_vars();
        for (i, x) in self.values.iter_mut().enumerate() {
            *x = scaler.scale(i % v, *x);
        }
        self.scaler = Some(scaler);
        Ok(())
    }

    fn check_windows(&self, lookback: usize, horizon: usize) -> Result<()> {
        for split in [Split::Train, Split::Val, Split::Test] {
            if self.window_origins(split, lookback, horizon)?.is_empty() {
                let range = self.splits.as_ref().map(|b| b.get(split)).unwrap_or_default();
                return Err(Error::Data(format!(
                    "{split} split {range:?} is too short: a window needs at least L+S = {} rows",
                    lookback + horizon
                )));
            }
        }
        Ok(())
    }

    /// Valid window origins of a split. Train windows stay inside the train
    /// rows; val/test windows may reach back `lookback` rows for history but
    /// their targets never leave the split.
    pub fn window_origins(&self, split: Split, lookback: usize, horizon: usize) -> Result<Range<usize>> {
        let bounds = self
            .splits
            .as_ref()
            .ok_or_else(|| Error::Usage("dataset has no split bounds; call split_and_scale".into()))?
            .get(split);
        let start = match split {
            Split::Train => bounds.start,
            Split::Val | Split::Test => bounds.start.saturating_sub(lookback),
        };
        let end = (bounds.end + 1).saturating_sub(lookback + horizon);
        Ok(start..end.max(start))
    }

    /// Gathers the windows at `origins` into tensors.
    pub fn window_batch(&self, origins: &[usize], lookback: usize, horizon: usize) -> Result<WindowBatch> {
        let last = origins.iter().map(|&t| t + lookback + horizon).max().unwrap_or(0);
        if last > self.n_rows() {
            return Err(Error::Usage(format!(
                "window ending at row {last} exceeds {} rows",
                self.n_rows()
            )));
        }
        let endo = self.endo_indices();
        let exo = self.exo_indices();
        let b = origins.len();
        let gather = |vars: &[usize], offset: usize, len: usize| -> Result<Tensor> {
            let mut data = Vec::with_capacity(b * vars.len() * len);
            for &t in origins {
                for &j in vars {
                    data.extend((t + offset..t + offset + len).map(|r| self.value(r, j)));
                }
            }
            Tensor::new(&[b, vars.len(), len], data)
        };
        Ok(WindowBatch {
            origins: origins.to_vec(),
            endo_history: gather(&endo, 0, lookback)?,
            exo_history: gather(&exo, 0, lookback)?,
            endo_future: gather(&endo, lookback, horizon)?,
        })
    }

    /// The trailing `lookback` rows as a single-sample `(endo, exo)` input.
    pub fn trailing_history(&self, lookback: usize) -> Result<(Tensor, Tensor)> {
        let rows = self.n_rows();
        if rows < lookback {
            return Err(Error::Data(format!(
                "input has {rows} rows but the model needs at least L = {lookback}"
            )));
        }
        let t = rows - lookback;
        let pick = |vars: &[usize]| -> Result<Tensor> {
            let mut data = Vec::with_capacity(vars.len() * lookback);
            for &j in vars {
                data.extend((t..rows).map(|r| self.value(r, j)));
            }
            Tensor::new(&[1, vars.len(), lookback], data)
        };
        Ok((pick(&self.endo_indices())?, pick(&self.exo_indices())?))
    }

    /// Batches over every window of `split`. With `shuffle` the origins are
    /// permuted by `rng`; the last batch may be short.
    pub fn iter_batches<R: Rng + ?Sized>(
        &self,
        split: Split,
        lookback: usize,
        horizon: usize,
        batch_size: usize,
        shuffle: bool,
        rng: &mut R,
    ) -> Result<BatchIter<'_>> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let mut origins: Vec<usize> = self.window_origins(split, lookback, horizon)?.collect();
        if origins.is_empty() {
            return Err(Error::Data(format!("{split} split has no complete windows")));
        }
        if shuffle {
            origins.shuffle(rng);
        }
        Ok(BatchIter {
            dataset: self,
            origins,
            pos: 0,
            lookback,
            horizon,
            batch_size,
        })
    }

    /// Maps a scaled forecast `[batch, M, S]` back to original units.
    pub fn inverse_scale_forecast(&self, yhat: &Tensor) -> Result<Tensor> {
        let scaler = self
            .scaler
            .as_ref()
            .ok_or_else(|| Error::Usage("dataset has no fitted scaler".into()))?;
        let endo = self.endo_indices();
        let shape = yhat.shape();
        if shape.len() != 3 || shape[1] != endo.len() {
            return Err(Error::shape(
                "inverse_scale_forecast",
                format!("expected [batch, {}, S], got {shape:?}", endo.len()),
            ));
        }
        let s = shape[2];
        let data = yhat
            .data()
            .iter()
            .enumerate()
            .map(|(i, &z)| scaler.unscale(endo[(i / s) % endo.len()], z))
            .collect();
        Tensor::new(shape, data)
    }
}

/// Iterator returned by [`TimeSeriesDataset::iter_batches`].
pub struct BatchIter<'a> {
    dataset: &'a TimeSeriesDataset,
    origins: Vec<usize>,
    pos: usize,
    lookback: usize,
    horizon: usize,
    batch_size: usize,
}

impl BatchIter<'_> {
    pub fn origins(&self) -> &[usize] {
        &self.origins
    }
}

impl Iterator for BatchIter<'_> {
    type Item = WindowBatch;

    fn next(&mut self) -> Option<WindowBatch> {
        if self.pos >= self.origins.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.origins.len());
        let chunk = &self.origins[self.pos..end];
        self.pos = end;
        let batch = self
            .dataset
            .window_batch(chunk, self.lookback, self.horizon)
            .expect("origins come from window_origins and are in range");
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.origins.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}
