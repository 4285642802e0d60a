use alloc::vec;
use alloc::vec::Vec;

use super::{Graph, Op, Var};
use crate::error::{bail, Result};
use crate::scalar::Real;
use crate::tensor::{strides, Tensor};

/// Gathers `data` (of `shape`) into the axis order `perm`.
pub(crate) fn permute_data<T: Copy>(data: &[T], shape: &[usize], perm: &[usize]) -> Vec<T> {
    let rank = shape.len();
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..data.len() {
        out.push(data[offset]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            offset += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    out
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    (shape[..axis].iter().product(), shape[axis + 1..].iter().product())
}

impl<T: Real> Graph<T> {
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || core::mem::replace(&mut seen[p], true)) {
            bail!(Dimension, "permutation {:?} invalid for shape {:?}", perm, shape);
        }
        let data = permute_data(self.value(a).data(), &shape, perm);
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push(out, Op::Permute(a, perm.to_vec()), &[a]))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            bail!(Dimension, "concat of nothing");
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            bail!(Dimension, "concat axis {} for shape {:?}", axis, base);
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(d, (x, y))| d != axis && x != y) {
                bail!(Dimension, "concat along axis {} of {:?} and {:?}", axis, base, s);
            }
            total += s[axis];
        }
        let (outer, inner) = outer_inner(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Concat(inputs.to_vec(), axis), inputs))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            bail!(Dimension, "slice {}..{} of axis {} in {:?}", start, start + len, axis, shape);
        }
        let (outer, inner) = outer_inner(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push(out, Op::Slice { input: a, axis, start }, &[a]))
    }

    /// Tiles a tensor whose leading extent is 1 to `times` along that axis.
    pub fn repeat_leading(&mut self, a: Var, times: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.first() != Some(&1) || times == 0 {
            bail!(Dimension, "repeat_leading needs leading extent 1, got {:?}", shape);
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(src.len() * times);
        for _ in 0..times {
            data.extend_from_slice(src);
        }
        let mut out_shape = shape;
        out_shape[0] = times;
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push(out, Op::RepeatLeading(a), &[a]))
    }

    pub(super) fn bw_permute(&self, out: usize, a: Var, perm: &[usize], g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out_shape = self.shape(Var(out)).to_vec();
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let back = permute_data(g, &out_shape, &inverse);
        if let Some(s) = self.slot(grads, a) {
            s.iter_mut().zip(back).for_each(|(s, g)| *s += g);
        }
    }

    pub(super) fn bw_concat(&self, inputs: &[Var], axis: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let base = self.shape(inputs[0]);
        let (outer, inner) = outer_inner(base, axis);
        let total: usize = inputs.iter().map(|&v| self.shape(v)[axis]).sum();
        let mut offset = 0;
        for &v in inputs {
            let len = self.shape(v)[axis] * inner;
            if let Some(s) = self.slot(grads, v) {
                for o in 0..outer {
                    let src = &g[o * total * inner + offset..o * total * inner + offset + len];
                    s[o * len..(o + 1) * len].iter_mut().zip(src).for_each(|(s, &g)| *s += g);
                }
            }
            offset += len;
        }
    }

    pub(super) fn bw_slice(&self, out: usize, a: Var, axis: usize, start: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let shape = self.shape(a);
        let extent = shape[axis];
        let (outer, inner) = outer_inner(shape, axis);
        let len = self.shape(Var(out))[axis];
        if let Some(s) = self.slot(grads, a) {
            for o in 0..outer {
                let base = (o * extent + start) * inner;
                let src = &g[o * len * inner..(o + 1) * len * inner];
                s[base..base + len * inner].iter_mut().zip(src).for_each(|(s, &g)| *s += g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::check::{check, check_unary, rand_tensor, Tolerance};
    use super::*;

    #[test]
    fn permute_matches_index_arithmetic() {
        let t = Tensor::<f64>::from_fn([2, 3, 4], |i| i as f64);
        let p = permute_data(t.data(), t.shape(), &[2, 0, 1]);
        // out[k][i][j] = in[i][j][k]
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(p[(k * 2 + i) * 3 + j], t.data()[(i * 3 + j) * 4 + k]);
                }
            }
        }
    }

    #[test]
    fn shape_op_gradients() {
        let x = rand_tensor(&[2, 3, 4], 11);
        check_unary(&x, |g, v| g.permute(v, &[1, 2, 0]).unwrap());
        check_unary(&x, |g, v| g.slice(v, 1, 1, 2).unwrap());
        check_unary(&x, |g, v| g.reshape(v, vec![6, 4]).unwrap());
        let y = rand_tensor(&[1, 3, 2], 12);
        check_unary(&y, |g, v| g.repeat_leading(v, 3).unwrap());
        let a = rand_tensor(&[2, 1, 4], 13);
        let rep = check(
            &[a, x],
            |g, v| g.concat(&[v[0], v[1]], 1).unwrap(),
            Tolerance::default(),
        );
        assert!(rep.passed());
    }

    #[test]
    fn concat_and_slice_invert() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(rand_tensor(&[2, 2, 3], 1));
        let b = g.constant(rand_tensor(&[2, 5, 3], 2));
        let c = g.concat(&[a, b], 1).unwrap();
        let back = g.slice(c, 1, 2, 5).unwrap();
        assert_eq!(g.value(back), g.value(b));
    }
}
