use rand::Rng;

use super::activation::Activation;
use super::kernels::{self, BroadcastMap, MatmulPlan};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that
/// produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

enum Op {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
        amap: BroadcastMap,
        bmap: BroadcastMap,
    },
    Scale(Var, f64),
    MatMul(Var, Var, MatmulPlan),
    Act(Var, Activation),
    Concat(Vec<Var>, usize),
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    SwapAxes(Var, usize, usize),
    Reshape(Var),
    Mask(Var, Vec<f64>),
    Sum(Var),
    Mean(Var),
    Map {
        x: Var,
        derivative: fn(f64) -> f64,
    },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    tracked: bool,
}

/// Linear record of operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so operands always precede their
/// consumers and a single reverse sweep visits each node once. A tape is
/// single-threaded; build one per batch.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, tracked: bool) -> Var {
        debug_assert_eq!(kernels::numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    /// Copies a tensor onto the tape. Gradients flow to it only when the
    /// tensor is trainable.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.is_trainable())
    }

    /// Moves a tensor onto the tape as a constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        self.constant(Tensor::zeros(shape))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(&n.shape, n.value.clone()).expect("node shape and value agree")
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        let n = self.node(v);
        if n.value.len() != 1 {
            return Err(Error::Usage(format!(
                "expected a scalar, found shape {:?}",
                n.shape
            )));
        }
        Ok(n.value[0])
    }

    /// Fails with a numeric fault naming `stage` if the node holds NaN or Inf.
    pub fn check_finite(&self, v: Var, stage: &str) -> Result<()> {
        let n = self.node(v);
        if let Some(pos) = n.value.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value {} at flat index {pos} in stage `{stage}` (shape {:?})",
                n.value[pos], n.shape
            )));
        }
        Ok(())
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = kernels::broadcast_shape(sa, sb).ok_or_else(|| {
            Error::shape("elementwise", format!("cannot broadcast {sa:?} with {sb:?}"))
        })?;
        let amap = BroadcastMap::new(sa, &out_shape);
        let bmap = BroadcastMap::new(sb, &out_shape);
        let (va, vb) = (self.value(a), self.value(b));
        let n = kernels::numel(&out_shape);
        let f: fn(f64, f64) -> f64 = match kind {
            BinaryKind::Add => |x, y| x + y,
            BinaryKind::Sub => |x, y| x - y,
            BinaryKind::Mul => |x, y| x * y,
            BinaryKind::Div => |x, y| x / y,
        };
        let value = (0..n)
            .map(|i| f(va[amap.offset(i)], vb[bmap.offset(i)]))
            .collect();
        let tracked = self.node(a).tracked || self.node(b).tracked;
        Ok(self.push(
            out_shape,
            value,
            Op::Binary {
                kind,
                a,
                b,
                amap,
                bmap,
            },
            tracked,
        ))
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let n = self.node(x);
        let value = n.value.iter().map(|v| v * factor).collect();
        let (shape, tracked) = (n.shape.clone(), n.tracked);
        self.push(shape, value, Op::Scale(x, factor), tracked)
    }

    /// Batched matrix product `[..., m, k] x [..., k, n]` with broadcast
    /// batch dimensions.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let plan = MatmulPlan::new(self.shape(a), self.shape(b))?;
        let value = plan.forward(self.value(a), self.value(b));
        let tracked = self.node(a).tracked || self.node(b).tracked;
        let shape = plan.out_shape.clone();
        Ok(self.push(shape, value, Op::MatMul(a, b, plan), tracked))
    }

    /// `x @ w + bias` over the last axis of `x`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match bias {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let n = self.node(x);
        let last = n.shape.last().copied().unwrap_or(1);
        let value = kind.forward(&n.value, last);
        let (shape, tracked) = (n.shape.clone(), n.tracked);
        self.push(shape, value, Op::Act(x, kind), tracked)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let shapes: Vec<&[usize]> = xs.iter().map(|&v| self.shape(v)).collect();
        let out_shape = kernels::concat_shape(&shapes, axis)?;
        let datas: Vec<&[f64]> = xs.iter().map(|&v| self.value(v)).collect();
        let value = kernels::concat_forward(&datas, &shapes, axis);
        let tracked = xs.iter().any(|&v| self.node(v).tracked);
        Ok(self.push(out_shape, value, Op::Concat(xs.to_vec(), axis), tracked))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x);
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "narrow",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let value = kernels::narrow_forward(self.value(x), shape, axis, start, len);
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let tracked = self.node(x).tracked;
        Ok(self.push(out_shape, value, Op::Narrow { x, axis, start }, tracked))
    }

    pub fn split(&mut self, x: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>> {
        let total = self.shape(x).get(axis).copied().unwrap_or(0);
        if sizes.iter().sum::<usize>() != total {
            return Err(Error::shape(
                "split",
                format!("sizes {sizes:?} do not sum to axis length {total}"),
            ));
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &len in sizes {
            out.push(self.narrow(x, axis, start, len)?);
            start += len;
        }
        Ok(out)
    }

    pub fn swap_axes(&mut self, x: Var, a1: usize, a2: usize) -> Result<Var> {
        let shape = self.shape(x);
        if a1 >= shape.len() || a2 >= shape.len() {
            return Err(Error::shape(
                "swap_axes",
                format!("axes ({a1}, {a2}) out of range for {shape:?}"),
            ));
        }
        let (value, out_shape) = kernels::swap_axes(self.value(x), shape, a1, a2);
        let tracked = self.node(x).tracked;
        Ok(self.push(out_shape, value, Op::SwapAxes(x, a1, a2), tracked))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = self.node(x);
        if kernels::numel(shape) != n.value.len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", n.shape),
            ));
        }
        let (value, tracked) = (n.value.clone(), n.tracked);
        Ok(self.push(shape.to_vec(), value, Op::Reshape(x), tracked))
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    /// Outside training, or at rate zero, `x` is returned unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.node(x);
        let mask: Vec<f64> = (0..n.value.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let value = n.value.iter().zip(&mask).map(|(v, m)| v * m).collect();
        let (shape, tracked) = (n.shape.clone(), n.tracked);
        Ok(self.push(shape, value, Op::Mask(x, mask), tracked))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let n = self.node(x);
        let s = n.value.iter().sum();
        let tracked = n.tracked;
        self.push(Vec::new(), vec![s], Op::Sum(x), tracked)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.node(x);
        let m = n.value.iter().sum::<f64>() / n.value.len() as f64;
        let tracked = n.tracked;
        self.push(Vec::new(), vec![m], Op::Mean(x), tracked)
    }

    /// Elementwise map with a caller-supplied derivative. The tape trusts
    /// `derivative`; pair it with [`super::grad_check`] when adding one.
    pub fn map(&mut self, x: Var, f: fn(f64) -> f64, derivative: fn(f64) -> f64) -> Var {
        let n = self.node(x);
        let value = n.value.iter().map(|&v| f(v)).collect();
        let (shape, tracked) = (n.shape.clone(), n.tracked);
        self.push(shape, value, Op::Map { x, derivative }, tracked)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.node(loss).value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, found shape {:?}",
                self.node(loss).shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => {}
            Op::Binary {
                kind,
                a,
                b,
                amap,
                bmap,
            } => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(ga) = grad_slot(nodes, grads, *a) {
                    for (i, &gi) in g.iter().enumerate() {
                        let d = match kind {
                            BinaryKind::Add | BinaryKind::Sub => gi,
                            BinaryKind::Mul => gi * vb[bmap.offset(i)],
                            BinaryKind::Div => gi / vb[bmap.offset(i)],
                        };
                        ga[amap.offset(i)] += d;
                    }
                }
                if let Some(gb) = grad_slot(nodes, grads, *b) {
                    for (i, &gi) in g.iter().enumerate() {
                        let bi = bmap.offset(i);
                        let d = match kind {
                            BinaryKind::Add => gi,
                            BinaryKind::Sub => -gi,
                            BinaryKind::Mul => gi * va[amap.offset(i)],
                            BinaryKind::Div => -gi * va[amap.offset(i)] / (vb[bi] * vb[bi]),
                        };
                        gb[bi] += d;
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for (d, &gi) in gx.iter_mut().zip(g) {
                        *d += gi * f;
                    }
                }
            }
            Op::MatMul(a, b, plan) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(ga) = grad_slot(nodes, grads, *a) {
                    plan.backward_a(g, vb, ga);
                }
                if let Some(gb) = grad_slot(nodes, grads, *b) {
                    plan.backward_b(va, g, gb);
                }
            }
            Op::Act(x, kind) => {
                let last = node.shape.last().copied().unwrap_or(1);
                let vx = &nodes[x.0].value;
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    kind.backward(vx, &node.value, g, gx, last);
                }
            }
            Op::Concat(xs, axis) => {
                let mut start = 0;
                for &x in xs {
                    let len = nodes[x.0].shape[*axis];
                    let piece = kernels::narrow_forward(g, &node.shape, *axis, start, len);
                    if let Some(gx) = grad_slot(nodes, grads, x) {
                        for (d, p) in gx.iter_mut().zip(piece) {
                            *d += p;
                        }
                    }
                    start += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let src_shape = &nodes[x.0].shape;
                let len = node.shape[*axis];
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    kernels::narrow_backward(g, gx, src_shape, *axis, *start, len);
                }
            }
            Op::SwapAxes(x, a1, a2) => {
                let (back, _) = kernels::swap_axes(g, &node.shape, *a1, *a2);
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for (d, b) in gx.iter_mut().zip(back) {
                        *d += b;
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for (d, &gi) in gx.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
            }
            Op::Mask(x, mask) => {
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for ((d, &gi), m) in gx.iter_mut().zip(g).zip(mask) {
                        *d += gi * m;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    gx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    let scale = g[0] / gx.len() as f64;
                    gx.iter_mut().for_each(|d| *d += scale);
                }
            }
            Op::Map { x, derivative } => {
                let vx = &nodes[x.0].value;
                if let Some(gx) = grad_slot(nodes, grads, *x) {
                    for ((d, &gi), &xv) in gx.iter_mut().zip(g).zip(vx) {
                        *d += gi * derivative(xv);
                    }
                }
            }
        }
    }
}

fn grad_slot<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
    let src = &nodes[v.0];
    if !src.tracked {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; src.value.len()]))
}

/// Result of [`Tape::backward`]: one gradient buffer per tracked node that
/// the loss depends on.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` into `target`'s gradient buffer. A node the
    /// loss does not depend on contributes nothing.
    pub fn accumulate_into(&self, v: Var, target: &mut Tensor) -> Result<()> {
        let Some(g) = self.get(v) else {
            return Ok(());
        };
        let len = target.len();
        let buf = target.grad_mut().ok_or_else(|| {
            Error::Usage("accumulating a gradient into a tensor that does not require grad".into())
        })?;
        if g.len() != len {
            return Err(Error::shape(
                "accumulate_into",
                format!("gradient has {} entries, tensor has {len}", g.len()),
            ));
        }
        for (d, v) in buf.iter_mut().zip(g) {
            *d += v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = tape.constant(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_row_by_column() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1, 2], &[1.0, 2.0]));
        let b = tape.constant(t(&[2, 1], &[3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.zeros(&[2, 3]);
        let b = tape.zeros(&[2, 3]);
        let msg = tape.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("by [2, 3]"), "{msg}");
    }

    #[test]
    fn concat_shape_algebra() {
        let mut tape = Tape::new();
        let a = tape.zeros(&[2, 3]);
        let b = tape.zeros(&[2, 5]);
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.shape(c), &[2, 8]);
        let bad = tape.zeros(&[3, 5]);
        assert!(tape.concat(&[a, bad], 1).is_err());
    }

    #[test]
    fn sum_gradient_is_ones() {
        let x = Tensor::from_fn(&[2, 2], |i| i as f64).requires_grad();
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let loss = tape.sum(xv);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(xv).unwrap(), &[1.0; 4]);
    }

    #[test]
    fn square_gradient_is_twice_input() {
        let x = t(&[2], &[1.0, -2.0]).requires_grad();
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        let sq = tape.mul(xv, xv).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(xv).unwrap(), &[2.0, -4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::zeros(&[3]).requires_grad();
        let mut tape = Tape::new();
        let xv = tape.leaf(&x);
        assert!(matches!(tape.backward(xv), Err(Error::Usage(_))));
    }

    #[test]
    fn repeated_accumulation_adds_up() {
        let mut x = t(&[2], &[1.0, -2.0]).requires_grad();
        for _ in 0..2 {
            let mut tape = Tape::new();
            let xv = tape.leaf(&x);
            let sq = tape.mul(xv, xv).unwrap();
            let loss = tape.sum(sq);
            let g = tape.backward(loss).unwrap();
            g.accumulate_into(xv, &mut x).unwrap();
        }
        assert_eq!(x.grad().unwrap(), &[4.0, -8.0]);
        x.zero_grad();
        assert_eq!(x.grad().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let w = Tensor::full(&[2], 3.0).requires_grad();
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::full(&[2], 2.0));
        let wv = tape.leaf(&w);
        let p = tape.mul(c, wv).unwrap();
        let loss = tape.sum(p);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(wv).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn broadcast_bias_gradient_sums_over_rows() {
        let b = t(&[3], &[0.0, 0.0, 0.0]).requires_grad();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[4, 3]));
        let bv = tape.leaf(&b);
        let y = tape.add(x, bv).unwrap();
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(bv).unwrap(), &[4.0, 4.0, 4.0]);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[10], |i| i as f64));
        assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.7, false, &mut rng).unwrap(), x);
        assert!(matches!(
            tape.dropout(x, 1.0, true, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(tape.dropout(x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1000], 1.0));
        let y = tape.dropout(x, 0.25, true, &mut rng).unwrap();
        for &v in tape.value(y) {
            assert!(v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn check_finite_names_stage() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2], &[1.0, f64::NAN]));
        let err = tape.check_finite(x, "embed").unwrap_err().to_string();
        assert!(err.contains("embed"));
    }
}
