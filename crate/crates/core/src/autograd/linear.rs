use alloc::vec;
use alloc::vec::Vec;

use super::{Graph, Op, Var};
use crate::error::{bail, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// `c += a · b` with `a: m×k`, `b: k×n`.
pub(crate) fn gemm<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c += a · bᵀ` with `a: m×k`, `b: n×k`.
pub(crate) fn gemm_nt<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            c[i * n + j] += s;
        }
    }
}

/// `c += aᵀ · b` with `a: k×m`, `b: k×n`.
pub(crate) fn gemm_tn<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

impl<T: Real> Graph<T> {
    /// Matrix product of `m×k` and `k×n` operands.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            bail!(Dimension, "matmul of {:?} and {:?}", sa, sb);
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let out = Tensor::new([m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// Batched matrix product of `N×m×k` and `N×k×n` operands.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            bail!(Dimension, "batched matmul of {:?} and {:?}", sa, sb);
        }
        let (bn, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![T::zero(); bn * m * n];
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        for t in 0..bn {
            gemm(
                &va[t * m * k..(t + 1) * m * k],
                &vb[t * k * n..(t + 1) * k * n],
                &mut out[t * m * n..(t + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let out = Tensor::new([bn, m, n], out)?;
        Ok(self.push(out, Op::BatchMatMul(a, b), &[a, b]))
    }

    pub(super) fn bw_matmul(&self, a: Var, b: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        if let Some(s) = self.slot(grads, a) {
            gemm_nt(g, vb, s, m, n, k);
        }
        if let Some(s) = self.slot(grads, b) {
            gemm_tn(va, g, s, k, m, n);
        }
    }

    pub(super) fn bw_bmm(&self, a: Var, b: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (bn, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        if let Some(s) = self.slot(grads, a) {
            for t in 0..bn {
                gemm_nt(
                    &g[t * m * n..(t + 1) * m * n],
                    &vb[t * k * n..(t + 1) * k * n],
                    &mut s[t * m * k..(t + 1) * m * k],
                    m,
                    n,
                    k,
                );
            }
        }
        if let Some(s) = self.slot(grads, b) {
            for t in 0..bn {
                gemm_tn(
                    &va[t * m * k..(t + 1) * m * k],
                    &g[t * m * n..(t + 1) * m * n],
                    &mut s[t * k * n..(t + 1) * k * n],
                    k,
                    m,
                    n,
                );
            }
        }
    }
}
