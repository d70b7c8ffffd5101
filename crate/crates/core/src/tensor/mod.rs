//! Dense `f64` tensors and a tape-based reverse-mode autodiff engine.
//!
//! [`Tensor`] is a plain value type: a shape, a row-major buffer, and an
//! optional gradient buffer. Differentiable computation happens on a
//! [`Tape`]: tensors are copied onto the tape as leaves, operations append
//! nodes, and [`Tape::backward`] walks the nodes in reverse to produce
//! [`Gradients`]. Gradients are folded back into the owning tensors with
//! [`Gradients::accumulate_into`], so repeated backward passes accumulate
//! until [`Tensor::zero_grad`] is called.

mod activation;
mod gradcheck;
mod kernels;
mod tape;

pub use activation::Activation;
pub use gradcheck::{grad_check, GradCheckFailure, GradCheckReport, GRAD_CHECK_FLOOR};
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "tensor",
                format!(
                    "shape {:?} holds {} elements but {} were supplied",
                    shape,
                    expected,
                    data.len()
                ),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
            grad: None,
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
            grad: None,
        }
    }

    /// Marks the tensor as trainable by attaching a zeroed gradient buffer.
    pub fn requires_grad(mut self) -> Self {
        self.grad = Some(vec![0.0; self.data.len()]);
        self
    }

    pub fn is_trainable(&self) -> bool {
        self.grad.is_some()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    /// Splits the borrow so an optimizer can read the gradient while
    /// updating the values.
    pub fn data_and_grad_mut(&mut self) -> (&mut [f64], Option<&mut [f64]>) {
        (&mut self.data, self.grad.as_deref_mut())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape, shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Element at a multi-index. Panics when the index is out of range.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut offset = 0;
        for (i, (&ix, &dim)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < dim, "index {ix} out of range for axis {i} of size {dim}");
            offset = offset * dim + ix;
        }
        self.data[offset]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Mean over the leading axis, e.g. `[batch, a, b] -> [a, b]`.
    pub fn mean_leading(&self) -> Result<Tensor> {
        let (&lead, rest) = self
            .shape
            .split_first()
            .ok_or_else(|| Error::shape("mean_leading", "scalar tensor has no leading axis"))?;
        if lead == 0 {
            return Err(Error::shape("mean_leading", "leading axis is empty"));
        }
        let inner: usize = rest.iter().product();
        let mut out = vec![0.0; inner];
        for chunk in self.data.chunks_exact(inner) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= lead as f64);
        Tensor::new(rest, out)
    }
}

/// Concatenates plain tensors along `axis`; the tape-free counterpart of
/// [`Tape::concat`].
pub fn concat(tensors: &[&Tensor], axis: usize) -> Result<Tensor> {
    let shapes: Vec<&[usize]> = tensors.iter().map(|t| t.shape()).collect();
    let out_shape = kernels::concat_shape(&shapes, axis)?;
    let datas: Vec<&[f64]> = tensors.iter().map(|t| t.data()).collect();
    let data = kernels::concat_forward(&datas, &shapes, axis);
    Tensor::new(&out_shape, data)
}

/// Splits a tensor along `axis` into pieces of the given sizes.
pub fn split(tensor: &Tensor, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let shape = tensor.shape();
    if axis >= shape.len() {
        return Err(Error::shape("split", format!("axis {axis} out of range for {shape:?}")));
    }
    if sizes.iter().sum::<usize>() != shape[axis] {
        return Err(Error::shape(
            "split",
            format!("sizes {sizes:?} do not sum to axis length {}", shape[axis]),
        ));
    }
    let mut start = 0;
    let mut out = Vec::with_capacity(sizes.len());
    for &len in sizes {
        let data = kernels::narrow_forward(tensor.data(), shape, axis, start, len);
        let mut piece_shape = shape.to_vec();
        piece_shape[axis] = len;
        out.push(Tensor::new(&piece_shape, data)?);
        start += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn grad_buffer_mirrors_shape() {
        let t = Tensor::zeros(&[3, 4]).requires_grad();
        assert_eq!(t.grad().unwrap().len(), 12);
    }

    #[test]
    fn at_is_row_major() {
        let t = Tensor::from_fn(&[2, 3], |i| i as f64);
        assert_eq!(t.at(&[1, 2]), 5.0);
        assert_eq!(t.at(&[0, 1]), 1.0);
    }

    #[test]
    fn mean_leading_averages_batch() {
        let t = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(t.mean_leading().unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor::from_fn(&[2, 3], |i| i as f64 * 0.37);
        let b = Tensor::from_fn(&[2, 5], |i| -(i as f64) * 1.1);
        let c = concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 8]);
        let parts = split(&c, 1, &[3, 5]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
