use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Nonlinearities available on the tape. `Softmax` normalizes over the last
/// axis; every other kind is elementwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Swish,
    Softmax,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Swish,
        Activation::Softmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Swish => "swish",
            Activation::Softmax => "softmax",
        }
    }

    pub(crate) fn forward(self, x: &[f64], last_dim: usize) -> Vec<f64> {
        match self {
            Activation::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Tanh => x.iter().map(|&v| v.tanh()).collect(),
            Activation::Swish => x.iter().map(|&v| v * sigmoid(v)).collect(),
            Activation::Softmax => {
                let mut out = Vec::with_capacity(x.len());
                for row in x.chunks_exact(last_dim.max(1)) {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let start = out.len();
                    let mut total = 0.0;
                    for &v in row {
                        let e = (v - max).exp();
                        total += e;
                        out.push(e);
                    }
                    out[start..].iter_mut().for_each(|e| *e /= total);
                }
                out
            }
        }
    }

    /// Accumulates `dx += J^T dy` given the input `x` and output `y`.
    pub(crate) fn backward(self, x: &[f64], y: &[f64], dy: &[f64], dx: &mut [f64], last_dim: usize) {
        match self {
            Activation::Relu => {
                for ((d, &xv), &g) in dx.iter_mut().zip(x).zip(dy) {
                    if xv > 0.0 {
                        *d += g;
                    }
                }
            }
            Activation::Sigmoid => {
                for ((d, &yv), &g) in dx.iter_mut().zip(y).zip(dy) {
                    *d += g * yv * (1.0 - yv);
                }
            }
            Activation::Tanh => {
                for ((d, &yv), &g) in dx.iter_mut().zip(y).zip(dy) {
                    *d += g * (1.0 - yv * yv);
                }
            }
            Activation::Swish => {
                for ((d, &xv), &g) in dx.iter_mut().zip(x).zip(dy) {
                    let s = sigmoid(xv);
                    *d += g * (s + xv * s * (1.0 - s));
                }
            }
            Activation::Softmax => {
                let n = last_dim.max(1);
                for ((dxr, yr), dyr) in dx.chunks_exact_mut(n).zip(y.chunks_exact(n)).zip(dy.chunks_exact(n)) {
                    let dot: f64 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
                    for ((d, &yv), &g) in dxr.iter_mut().zip(yr).zip(dyr) {
                        *d += yv * (g - dot);
                    }
                }
            }
        }
    }
}

/// Logistic function, saturating at the closest representable values inside
/// the open interval (0, 1).
pub(crate) fn sigmoid(x: f64) -> f64 {
    const UPPER: f64 = 1.0 - f64::EPSILON / 2.0;
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, UPPER)
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "swish" | "silu" => Ok(Activation::Swish),
            "softmax" | "softmax-lastdim" => Ok(Activation::Softmax),
            other => Err(Error::Config(format!(
                "unknown activation `{other}` (expected relu, sigmoid, tanh, swish or softmax)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_of_zero_is_half() {
        assert_eq!(Activation::Sigmoid.forward(&[0.0], 1), vec![0.5]);
    }

    #[test]
    fn relu_clips_negative() {
        assert_eq!(Activation::Relu.forward(&[-3.2, 1.5], 2), vec![0.0, 1.5]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let y = Activation::Softmax.forward(&[0.0, 0.0, 0.0], 3);
        for v in y {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_stays_open_interval_at_extremes() {
        for x in [-1e4, -800.0, -40.0, 40.0, 800.0, 1e4] {
            let y = sigmoid(x);
            assert!(y > 0.0 && y < 1.0, "sigmoid({x}) = {y}");
        }
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("gelu".parse::<Activation>(), Err(Error::Config(_))));
        assert_eq!("Softmax".parse::<Activation>().unwrap(), Activation::Softmax);
    }
}
