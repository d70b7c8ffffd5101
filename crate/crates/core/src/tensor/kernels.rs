//! Raw buffer kernels shared by the tape and the plain tensor helpers.

use crate::error::{Error, Result};

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for (s, &d) in strides.iter_mut().zip(shape).rev() {
        *s = acc;
        acc *= d;
    }
    strides
}

/// Numpy-style broadcast of two shapes, aligned on the right.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// How the elements of an operand map onto a broadcast output.
#[derive(Debug)]
pub(crate) enum BroadcastMap {
    /// Operand already has the output shape.
    Same,
    /// Operand equals the trailing dims of the output; offset is `i % len`.
    Suffix(usize),
    /// Explicit input offset per output element.
    General(Vec<usize>),
}

impl BroadcastMap {
    pub(crate) fn new(input: &[usize], out: &[usize]) -> Self {
        let in_n = numel(input);
        let out_n = numel(out);
        if in_n == out_n {
            return BroadcastMap::Same;
        }
        let trimmed: &[usize] = {
            let lead = input.iter().take_while(|&&d| d == 1).count();
            &input[lead..]
        };
        if out.ends_with(trimmed) {
            return BroadcastMap::Suffix(in_n.max(1));
        }
        let rank = out.len();
        let in_strides = row_major_strides(input);
        let mut strides = vec![0; rank];
        for (k, (&d, &s)) in input.iter().zip(&in_strides).enumerate() {
            let axis = rank - input.len() + k;
            strides[axis] = if d == 1 { 0 } else { s };
        }
        let mut offsets = Vec::with_capacity(out_n);
        let mut idx = vec![0usize; rank];
        let mut off = 0usize;
        for _ in 0..out_n {
            offsets.push(off);
            for axis in (0..rank).rev() {
                idx[axis] += 1;
                off += strides[axis];
                if idx[axis] < out[axis] {
                    break;
                }
                off -= strides[axis] * idx[axis];
                idx[axis] = 0;
            }
        }
        BroadcastMap::General(offsets)
    }

    #[inline]
    pub(crate) fn offset(&self, i: usize) -> usize {
        match self {
            BroadcastMap::Same => i,
            BroadcastMap::Suffix(len) => i % len,
            BroadcastMap::General(offsets) => offsets[i],
        }
    }
}

/// `c[m,n] += a[m,k] * b[k,n]`
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv;
            }
        }
    }
}

/// `da[m,k] += dc[m,n] * b[k,n]^T`
pub(crate) fn gemm_nt_acc(dc: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let dc_row = &dc[i * n..(i + 1) * n];
        let da_row = &mut da[i * k..(i + 1) * k];
        for (p, dv) in da_row.iter_mut().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (&x, &y) in dc_row.iter().zip(b_row) {
                acc += x * y;
            }
            *dv += acc;
        }
    }
}

/// `db[k,n] += a[m,k]^T * dc[m,n]`
pub(crate) fn gemm_tn_acc(a: &[f64], dc: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let dc_row = &dc[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let db_row = &mut db[p * n..(p + 1) * n];
            for (dv, &g) in db_row.iter_mut().zip(dc_row) {
                *dv += a_ip * g;
            }
        }
    }
}

/// Batch layout of a (possibly broadcast) batched matrix product.
#[derive(Debug)]
pub(crate) struct MatmulPlan {
    pub out_shape: Vec<usize>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    /// Matrix index into `a` and `b` for each output batch entry.
    pub pairs: Vec<(usize, usize)>,
    /// `b` is a single matrix and `a` is unbroadcast, so the product is one
    /// tall GEMM over all rows of `a`.
    pub flat: bool,
}

impl MatmulPlan {
    pub(crate) fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        let mismatch = || Error::shape("matmul", format!("cannot multiply {a:?} by {b:?}"));
        if a.len() < 2 || b.len() < 2 {
            return Err(mismatch());
        }
        let (a_batch, a_mat) = a.split_at(a.len() - 2);
        let (b_batch, b_mat) = b.split_at(b.len() - 2);
        let (m, k) = (a_mat[0], a_mat[1]);
        let (k2, n) = (b_mat[0], b_mat[1]);
        if k != k2 {
            return Err(mismatch());
        }
        let batch = broadcast_shape(a_batch, b_batch).ok_or_else(mismatch)?;
        let nb = numel(&batch);
        let flat = numel(b_batch) == 1 && numel(a_batch) == nb;
        let amap = BroadcastMap::new(a_batch, &batch);
        let bmap = BroadcastMap::new(b_batch, &batch);
        let pairs = (0..nb).map(|i| (amap.offset(i), bmap.offset(i))).collect();
        let mut out_shape = batch;
        out_shape.push(m);
        out_shape.push(n);
        Ok(Self {
            out_shape,
            m,
            k,
            n,
            pairs,
            flat,
        })
    }

    pub(crate) fn forward(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let (m, k, n) = (self.m, self.k, self.n);
        let mut out = vec![0.0; numel(&self.out_shape)];
        if self.flat {
            gemm_acc(a, b, &mut out, self.pairs.len() * m, k, n);
            return out;
        }
        for (bi, &(ai, bj)) in self.pairs.iter().enumerate() {
            gemm_acc(
                &a[ai * m * k..(ai + 1) * m * k],
                &b[bj * k * n..(bj + 1) * k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        out
    }

    pub(crate) fn backward_a(&self, dc: &[f64], b: &[f64], da: &mut [f64]) {
        let (m, k, n) = (self.m, self.k, self.n);
        if self.flat {
            gemm_nt_acc(dc, b, da, self.pairs.len() * m, k, n);
            return;
        }
        for (bi, &(ai, bj)) in self.pairs.iter().enumerate() {
            gemm_nt_acc(
                &dc[bi * m * n..(bi + 1) * m * n],
                &b[bj * k * n..(bj + 1) * k * n],
                &mut da[ai * m * k..(ai + 1) * m * k],
                m,
                k,
                n,
            );
        }
    }

    pub(crate) fn backward_b(&self, a: &[f64], dc: &[f64], db: &mut [f64]) {
        let (m, k, n) = (self.m, self.k, self.n);
        if self.flat {
            gemm_tn_acc(a, dc, db, self.pairs.len() * m, k, n);
            return;
        }
        for (bi, &(ai, bj)) in self.pairs.iter().enumerate() {
            gemm_tn_acc(
                &a[ai * m * k..(ai + 1) * m * k],
                &dc[bi * m * n..(bi + 1) * m * n],
                &mut db[bj * k * n..(bj + 1) * k * n],
                m,
                k,
                n,
            );
        }
    }
}

pub(crate) fn concat_shape(shapes: &[&[usize]], axis: usize) -> Result<Vec<usize>> {
    let first = shapes
        .first()
        .ok_or_else(|| Error::shape("concat", "no tensors to concatenate"))?;
    if axis >= first.len() {
        return Err(Error::shape(
            "concat",
            format!("axis {axis} out of range for {first:?}"),
        ));
    }
    let mut out = first.to_vec();
    out[axis] = 0;
    for s in shapes {
        let compatible = s.len() == first.len()
            && s.iter()
                .zip(first.iter())
                .enumerate()
                .all(|(i, (x, y))| i == axis || x == y);
        if !compatible {
            return Err(Error::shape(
                "concat",
                format!("{s:?} is incompatible with {first:?} along axis {axis}"),
            ));
        }
        out[axis] += s[axis];
    }
    Ok(out)
}

pub(crate) fn concat_forward(datas: &[&[f64]], shapes: &[&[usize]], axis: usize) -> Vec<f64> {
    let outer: usize = shapes[0][..axis].iter().product();
    let chunk: Vec<usize> = shapes.iter().map(|s| numel(&s[axis..])).collect();
    let total: usize = datas.iter().map(|d| d.len()).sum();
    let mut out = Vec::with_capacity(total);
    for o in 0..outer {
        for (d, &c) in datas.iter().zip(&chunk) {
            out.extend_from_slice(&d[o * c..(o + 1) * c]);
        }
    }
    out
}

pub(crate) fn narrow_forward(
    data: &[f64],
    shape: &[usize],
    axis: usize,
    start: usize,
    len: usize,
) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let row = shape[axis] * inner;
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * row + start * inner;
        out.extend_from_slice(&data[base..base + len * inner]);
    }
    out
}

/// Adds `grad` (the gradient of a narrowed view) back into the full buffer.
pub(crate) fn narrow_backward(
    grad: &[f64],
    full: &mut [f64],
    shape: &[usize],
    axis: usize,
    start: usize,
    len: usize,
) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let row = shape[axis] * inner;
    for o in 0..outer {
        let base = o * row + start * inner;
        let src = &grad[o * len * inner..(o + 1) * len * inner];
        for (f, g) in full[base..base + len * inner].iter_mut().zip(src) {
            *f += g;
        }
    }
}

/// Swaps two axes, returning the permuted buffer and its shape.
pub(crate) fn swap_axes(data: &[f64], shape: &[usize], a1: usize, a2: usize) -> (Vec<f64>, Vec<usize>) {
    let mut out_shape = shape.to_vec();
    out_shape.swap(a1, a2);
    let mut strides = row_major_strides(shape);
    strides.swap(a1, a2);
    let rank = shape.len();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    if rank == 0 || n == 0 {
        return (data.to_vec(), out_shape);
    }
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        out.push(data[off]);
        for axis in (0..rank).rev() {
            idx[axis] += 1;
            off += strides[axis];
            if idx[axis] < out_shape[axis] {
                break;
            }
            off -= strides[axis] * idx[axis];
            idx[axis] = 0;
        }
    }
    (out, out_shape)
}
