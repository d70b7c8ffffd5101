//! Single-file checkpoints: an 8-byte magic, a little-endian `u64` header
//! length, a JSON header, then for each tensor in header order a `u64` entry
//! count followed by that many little-endian `f64` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{Scaler, SplitBounds, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, XLinear, XLinearParams};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"XLINCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub run: RunConfig,
    pub model: ModelConfig,
    pub dataset_name: String,
    pub variables: Vec<String>,
    pub endo_variables: Vec<String>,
    pub exo_variables: Vec<String>,
    pub scaler: Scaler,
    pub splits: SplitBounds,
    /// 1-based; `None` for an untrained model.
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: XLinearParams,
}

impl Checkpoint {
    /// Snapshot of a model trained (or initialized) on `data`, which must be
    /// split and scaled.
    pub fn new(
        run: &RunConfig,
        model: &XLinear,
        data: &TimeSeriesDataset,
        best: Option<(usize, f64)>,
    ) -> Result<Self> {
        let scaler = data
            .scaler()
            .cloned()
            .ok_or_else(|| Error::Usage("checkpoint needs a scaled dataset".into()))?;
        let splits = data
            .split_bounds()
            .cloned()
            .ok_or_else(|| Error::Usage("checkpoint needs a split dataset".into()))?;
        let tensors = model
            .params()
            .named()
            .into_iter()
            .map(|(n, t)| TensorEntry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect();
        Ok(Self {
            header: CheckpointHeader {
                version: FORMAT_VERSION,
                run: run.clone(),
                model: model.config().clone(),
                dataset_name: data.name().to_string(),
                variables: data.variable_names().to_vec(),
                endo_variables: data.endo_names(),
                exo_variables: data.exo_names(),
                scaler,
                splits,
                best_epoch: best.map(|b| b.0),
                best_val_loss: best.map(|b| b.1),
                tensors,
            },
            params: model.params().clone(),
        })
    }

    pub fn model(&self) -> Result<XLinear> {
        XLinear::from_params(self.header.model.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let named = self.params.named();
        let payload: usize = named.iter().map(|(_, t)| 8 + 8 * t.len()).sum();
        let mut out = Vec::with_capacity(16 + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in named {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let header_len = r.u64("header length")? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(header_len, "header")?)
            .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (this build reads {FORMAT_VERSION})",
                header.version
            )));
        }
        header
            .model
            .validate()
            .map_err(|e| Error::Checkpoint(format!("stored model configuration is invalid: {e}")))?;

        let expected = XLinearParams::expected_shapes(&header.model);
        if expected.len() != header.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "shape table lists {} tensors, the stored configuration implies {}",
                header.tensors.len(),
                expected.len()
            )));
        }
        let mut tensors = Vec::with_capacity(expected.len());
        for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
            if entry.name != *name || entry.shape != *shape {
                return Err(Error::Checkpoint(format!(
                    "shape table entry `{}` {:?} does not match configuration-derived `{name}` {shape:?}",
                    entry.name, entry.shape
                )));
            }
            let n = r.u64(name)? as usize;
            let want: usize = shape.iter().product();
            if n != want {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` stores {n} values, shape {shape:?} needs {want}"
                )));
            }
            let raw = r.take(n * 8, name)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }
        let params = XLinearParams::from_tensors(&header.model, tensors)?;
        Ok(Self { header, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Loads `path` as a dataset compatible with this checkpoint, applying
    /// the stored split bounds and scaler.
    pub fn prepare_dataset(&self, path: &Path) -> Result<TimeSeriesDataset> {
        let data = TimeSeriesDataset::load_csv(path, self.header.run.target_mode)?;
        self.check_variables(data.variable_names())?;
        data.with_bounds_and_scaler(self.header.splits.clone(), self.header.scaler.clone())
    }

    pub fn check_variables(&self, names: &[String]) -> Result<()> {
        if names != self.header.variables.as_slice() {
            return Err(Error::Data(format!(
                "dataset columns {names:?} differ from the checkpoint's {:?}",
                self.header.variables
            )));
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("file truncated while reading {what}"))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitSpec;
    use crate::synthetic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let data = synthetic::lagged_exogenous(300)
            .unwrap()
            .split_and_scale(&SplitSpec::Ratios([0.6, 0.2, 0.2]), 16, 4)
            .unwrap();
        let mut run = RunConfig {
            data_path: "synthetic.csv".into(),
            lookback: 16,
            horizon: 4,
            d_model: 8,
            t_ff: 8,
            c_ff: 4,
            ..RunConfig::default()
        };
        run.learning_rate = 0.1 + 0.2;
        let cfg = run.model_config(data.n_endo(), data.n_exo());
        let model = XLinear::new(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        Checkpoint::new(&run, &model, &data, Some((3, 0.123456789))).unwrap()
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.header.run.learning_rate.to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'Y';
        assert!(Checkpoint::from_bytes(&bad).unwrap_err().to_string().contains("magic"));
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).unwrap_err().to_string().contains("trailing"));
    }

    #[test]
    fn shape_table_must_match_config() {
        let mut ck = sample();
        ck.header.tensors[0].shape = vec![1, 1];
        let err = Checkpoint::from_bytes(&ck.to_bytes()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
        assert!(err.to_string().contains("embed_endo.weight"), "{err}");
    }
}
