use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{Gradients, Tape, Tensor, Var};

/// Dense layer acting on the last axis: `y = x @ weight + bias`, with
/// `weight` stored `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Self {
            weight: Tensor::from_fn(&[fan_in, fan_out], |_| dist.sample(rng)).requires_grad(),
            bias: Tensor::zeros(&[fan_out]).requires_grad(),
        }
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]).requires_grad(),
            bias: Tensor::zeros(&[fan_out]).requires_grad(),
        }
    }

    fn bind(&self, tape: &mut Tape) -> BoundLinear {
        BoundLinear {
            weight: tape.leaf(&self.weight),
            bias: tape.leaf(&self.bias),
        }
    }
}

/// Every learnable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct XLinearParams {
    /// `[L, d_model]` projection of each endogenous series.
    pub embed_endo: Linear,
    /// `[L, d_model]` projection of each exogenous series; absent when the
    /// endogenous embedding is shared.
    pub embed_exo: Option<Linear>,
    /// `[M, d_model]`, one learnable token per endogenous variable.
    pub global_tokens: Tensor,
    /// Time-wise gate: `2·d_model → t_ff → 2·d_model`.
    pub tgm_in: Linear,
    pub tgm_out: Linear,
    /// Variate-wise gate: `C+M → c_ff → C+M`.
    pub vgm_in: Linear,
    pub vgm_out: Linear,
    /// `2·d_model → S`, shared by every endogenous channel.
    pub head: Linear,
    /// Per-endogenous-variable instance-norm affine `(γ, β)`, each `[M]`.
    pub revin_affine: Option<(Tensor, Tensor)>,
}

/// Parameter handles on a tape, mirroring [`XLinearParams`].
#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Clone, Debug)]
pub struct BoundParams {
    pub embed_endo: BoundLinear,
    pub embed_exo: BoundLinear,
    pub global_tokens: Var,
    pub tgm_in: BoundLinear,
    pub tgm_out: BoundLinear,
    pub vgm_in: BoundLinear,
    pub vgm_out: BoundLinear,
    pub head: BoundLinear,
    pub revin_affine: Option<(Var, Var)>,
    order: Vec<Var>,
}

impl BoundParams {
    /// Rebuilds handles from vars listed in [`XLinearParams::named`] order.
    pub fn from_vars(cfg: &ModelConfig, vars: &[Var]) -> Result<Self> {
        let expected = XLinearParams::expected_shapes(cfg).len();
        if vars.len() != expected {
            return Err(Error::Usage(format!(
                "expected {expected} parameter handles, got {}",
                vars.len()
            )));
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked");
        let lin = |next: &mut dyn FnMut() -> Var| BoundLinear {
            weight: next(),
            bias: next(),
        };
        let embed_endo = lin(&mut next);
        let embed_exo = if cfg.share_embedding {
            embed_endo
        } else {
            lin(&mut next)
        };
        let global_tokens = next();
        let tgm_in = lin(&mut next);
        let tgm_out = lin(&mut next);
        let vgm_in = lin(&mut next);
        let vgm_out = lin(&mut next);
        let head = lin(&mut next);
        let revin_affine = cfg.revin_affine.then(|| (next(), next()));
        Ok(Self {
            embed_endo,
            embed_exo,
            global_tokens,
            tgm_in,
            tgm_out,
            vgm_in,
            vgm_out,
            head,
            revin_affine,
            order: vars.to_vec(),
        })
    }

    /// Handles in [`XLinearParams::named`] order.
    pub fn vars(&self) -> &[Var] {
        &self.order
    }
}

impl XLinearParams {
    /// Linear weights ~ U(±1/√fan_in), biases zero, global tokens
    /// ~ N(0, 0.02²), instance-norm affine at identity.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.d_model;
        let ch = cfg.n_channels();
        let embed_endo = Linear::init(cfg.lookback, d, rng);
        let embed_exo = (!cfg.share_embedding).then(|| Linear::init(cfg.lookback, d, rng));
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let global_tokens = Tensor::from_fn(&[cfg.n_endo, d], |_| normal.sample(rng)).requires_grad();
        Self {
            embed_endo,
            embed_exo,
            global_tokens,
            tgm_in: Linear::init(2 * d, cfg.t_ff, rng),
            tgm_out: Linear::init(cfg.t_ff, 2 * d, rng),
            vgm_in: Linear::init(ch, cfg.c_ff, rng),
            vgm_out: Linear::init(cfg.c_ff, ch, rng),
            head: Linear::init(2 * d, cfg.horizon, rng),
            revin_affine: cfg.revin_affine.then(|| Self::identity_affine(cfg.n_endo)),
        }
    }

    /// All-zero weights (affine still at identity). With a sigmoid gate this
    /// makes every gate exactly 0.5.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let ch = cfg.n_channels();
        Self {
            embed_endo: Linear::zeros(cfg.lookback, d),
            embed_exo: (!cfg.share_embedding).then(|| Linear::zeros(cfg.lookback, d)),
            global_tokens: Tensor::zeros(&[cfg.n_endo, d]).requires_grad(),
            tgm_in: Linear::zeros(2 * d, cfg.t_ff),
            tgm_out: Linear::zeros(cfg.t_ff, 2 * d),
            vgm_in: Linear::zeros(ch, cfg.c_ff),
            vgm_out: Linear::zeros(cfg.c_ff, ch),
            head: Linear::zeros(2 * d, cfg.horizon),
            revin_affine: cfg.revin_affine.then(|| Self::identity_affine(cfg.n_endo)),
        }
    }

    fn identity_affine(m: usize) -> (Tensor, Tensor) {
        (
            Tensor::full(&[m], 1.0).requires_grad(),
            Tensor::zeros(&[m]).requires_grad(),
        )
    }

    /// Canonical tensor names and shapes for a configuration.
    pub fn expected_shapes(cfg: &ModelConfig) -> Vec<(&'static str, Vec<usize>)> {
        let d = cfg.d_model;
        let ch = cfg.n_channels();
        let mut out = vec![
            ("embed_endo.weight", vec![cfg.lookback, d]),
            ("embed_endo.bias", vec![d]),
        ];
        if !cfg.share_embedding {
            out.push(("embed_exo.weight", vec![cfg.lookback, d]));
            out.push(("embed_exo.bias", vec![d]));
        }
        out.extend([
            ("global_tokens", vec![cfg.n_endo, d]),
            ("tgm_in.weight", vec![2 * d, cfg.t_ff]),
            ("tgm_in.bias", vec![cfg.t_ff]),
            ("tgm_out.weight", vec![cfg.t_ff, 2 * d]),
            ("tgm_out.bias", vec![2 * d]),
            ("vgm_in.weight", vec![ch, cfg.c_ff]),
            ("vgm_in.bias", vec![cfg.c_ff]),
            ("vgm_out.weight", vec![cfg.c_ff, ch]),
            ("vgm_out.bias", vec![ch]),
            ("head.weight", vec![2 * d, cfg.horizon]),
            ("head.bias", vec![cfg.horizon]),
        ]);
        if cfg.revin_affine {
            out.push(("revin.gamma", vec![cfg.n_endo]));
            out.push(("revin.beta", vec![cfg.n_endo]));
        }
        out
    }

    /// Tensors in canonical order with their names.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![
            ("embed_endo.weight", &self.embed_endo.weight),
            ("embed_endo.bias", &self.embed_endo.bias),
        ];
        if let Some(e) = &self.embed_exo {
            out.push(("embed_exo.weight", &e.weight));
            out.push(("embed_exo.bias", &e.bias));
        }
        out.extend([
            ("global_tokens", &self.global_tokens),
            ("tgm_in.weight", &self.tgm_in.weight),
            ("tgm_in.bias", &self.tgm_in.bias),
            ("tgm_out.weight", &self.tgm_out.weight),
            ("tgm_out.bias", &self.tgm_out.bias),
            ("vgm_in.weight", &self.vgm_in.weight),
            ("vgm_in.bias", &self.vgm_in.bias),
            ("vgm_out.weight", &self.vgm_out.weight),
            ("vgm_out.bias", &self.vgm_out.bias),
            ("head.weight", &self.head.weight),
            ("head.bias", &self.head.bias),
        ]);
        if let Some((g, b)) = &self.revin_affine {
            out.push(("revin.gamma", g));
            out.push(("revin.beta", b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embed_endo.weight, &mut self.embed_endo.bias];
        if let Some(e) = &mut self.embed_exo {
            out.push(&mut e.weight);
            out.push(&mut e.bias);
        }
        out.extend([
            &mut self.global_tokens,
            &mut self.tgm_in.weight,
            &mut self.tgm_in.bias,
            &mut self.tgm_out.weight,
            &mut self.tgm_out.bias,
            &mut self.vgm_in.weight,
            &mut self.vgm_in.bias,
            &mut self.vgm_out.weight,
            &mut self.vgm_out.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]);
        if let Some((g, b)) = &mut self.revin_affine {
            out.push(g);
            out.push(b);
        }
        out
    }

    /// Plain copies in canonical order, e.g. for gradient checking.
    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.named().into_iter().map(|(_, t)| t.clone()).collect()
    }

    /// Rebuilds parameters from canonical-order tensors, checking every
    /// shape against the configuration.
    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let shapes = Self::expected_shapes(cfg);
        if tensors.len() != shapes.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors for this configuration, found {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, configuration implies {shape:?}",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.into_iter().map(Tensor::requires_grad);
        let mut next = || it.next().expect("length checked");
        let lin = |next: &mut dyn FnMut() -> Tensor| Linear {
            weight: next(),
            bias: next(),
        };
        let embed_endo = lin(&mut next);
        let embed_exo = (!cfg.share_embedding).then(|| lin(&mut next));
        let global_tokens = next();
        let tgm_in = lin(&mut next);
        let tgm_out = lin(&mut next);
        let vgm_in = lin(&mut next);
        let vgm_out = lin(&mut next);
        let head = lin(&mut next);
        let revin_affine = cfg.revin_affine.then(|| (next(), next()));
        Ok(Self {
            embed_endo,
            embed_exo,
            global_tokens,
            tgm_in,
            tgm_out,
            vgm_in,
            vgm_out,
            head,
            revin_affine,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let embed_endo = self.embed_endo.bind(tape);
        let embed_exo = self.embed_exo.as_ref().map(|e| e.bind(tape));
        let global_tokens = tape.leaf(&self.global_tokens);
        let tgm_in = self.tgm_in.bind(tape);
        let tgm_out = self.tgm_out.bind(tape);
        let vgm_in = self.vgm_in.bind(tape);
        let vgm_out = self.vgm_out.bind(tape);
        let head = self.head.bind(tape);
        let revin_affine = self
            .revin_affine
            .as_ref()
            .map(|(g, b)| (tape.leaf(g), tape.leaf(b)));

        let mut order = vec![embed_endo.weight, embed_endo.bias];
        if let Some(e) = embed_exo {
            order.extend([e.weight, e.bias]);
        }
        order.push(global_tokens);
        for l in [tgm_in, tgm_out, vgm_in, vgm_out, head] {
            order.extend([l.weight, l.bias]);
        }
        if let Some((g, b)) = revin_affine {
            order.extend([g, b]);
        }
        BoundParams {
            embed_endo,
            embed_exo: embed_exo.unwrap_or(embed_endo),
            global_tokens,
            tgm_in,
            tgm_out,
            vgm_in,
            vgm_out,
            head,
            revin_affine,
            order,
        }
    }

    /// Adds tape gradients into each tensor's gradient buffer.
    pub fn accumulate_grads(&mut self, grads: &Gradients, bound: &BoundParams) -> Result<()> {
        for (t, &v) in self.tensors_mut().into_iter().zip(bound.vars()) {
            grads.accumulate_into(v, t)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.tensors_mut().into_iter().for_each(Tensor::zero_grad);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_follow_configuration() {
        let cfg = ModelConfig::new(96, 24, 1, 6);
        let p = XLinearParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let named = p.named();
        let expected = XLinearParams::expected_shapes(&cfg);
        assert_eq!(named.len(), expected.len());
        for ((n1, t), (n2, s)) in named.iter().zip(&expected) {
            assert_eq!(n1, n2);
            assert_eq!(t.shape(), s.as_slice());
            assert!(t.is_trainable());
        }
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let cfg = ModelConfig::new(16, 4, 2, 3);
        let p = XLinearParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let bound = 1.0 / (2.0 * cfg.d_model as f64).sqrt();
        assert!(p.tgm_in.weight.data().iter().all(|w| w.abs() <= bound));
        assert!(p.head.bias.data().iter().all(|&b| b == 0.0));
        let (g, b) = p.revin_affine.as_ref().unwrap();
        assert!(g.data().iter().all(|&v| v == 1.0));
        assert!(b.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_tensors_round_trip_and_shape_check() {
        let cfg = ModelConfig::new(8, 4, 2, 3);
        let p = XLinearParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let back = XLinearParams::from_tensors(&cfg, p.to_tensors()).unwrap();
        assert_eq!(back, p);
        let mut other = cfg.clone();
        other.horizon = 5;
        let err = XLinearParams::from_tensors(&other, p.to_tensors()).unwrap_err();
        assert!(err.to_string().contains("head.weight"), "{err}");
    }

    #[test]
    fn shared_embedding_drops_exo_weights() {
        let mut cfg = ModelConfig::new(8, 4, 2, 3);
        cfg.share_embedding = true;
        let p = XLinearParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(4));
        assert!(p.embed_exo.is_none());
        assert_eq!(p.parameter_count(), cfg.parameter_count());
    }
}
