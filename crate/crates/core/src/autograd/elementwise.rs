use alloc::vec::Vec;

use super::{Graph, Op, Var};
use crate::error::{bail, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu_scalar(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + libm::tanh(u))
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = libm::tanh(u);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl<T: Real> Graph<T> {
    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            bail!(Dimension, "{} of {:?} and {:?}", what, self.shape(a), self.shape(b));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let va = self.value(a);
        Tensor::new(va.shape().to_vec(), va.data().iter().map(|&x| f(x)).collect())
            .expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// `a + b` where `b`'s shape equals a trailing suffix of `a`'s shape
    /// (bias vectors, positional tables).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            bail!(Dimension, "cannot broadcast {:?} onto {:?}", sb, sa);
        }
        let vb = self.value(b).data();
        let inner = vb.len();
        let va = self.value(a);
        let data = va.data().iter().enumerate().map(|(i, &x)| x + vb[i % inner]).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddSuffix(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let out = self.map(a, |x| x * k);
        self.push(out, Op::Scale(a, k), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| if x > T::zero() { x } else { T::zero() });
        self.push(out, Op::Relu(a), &[a])
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| T::from_f64(gelu_scalar(x.as_f64())));
        self.push(out, Op::Gelu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| T::from_f64(sigmoid_scalar(x.as_f64())));
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.tanh());
        self.push(out, Op::Tanh(a), &[a])
    }

    /// Sum of all elements, accumulated in f64.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().map(|v| v.as_f64()).sum();
        self.push(Tensor::scalar(T::from_f64(s)), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s: f64 = v.data().iter().map(|v| v.as_f64()).sum();
        let m = s / v.numel() as f64;
        self.push(Tensor::scalar(T::from_f64(m)), Op::Mean(a), &[a])
    }

    pub(super) fn bw_mul(&self, a: Var, b: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        if let Some(s) = self.slot(grads, a) {
            for i in 0..s.len() {
                s[i] += g[i] * vb[i];
            }
        }
        if let Some(s) = self.slot(grads, b) {
            for i in 0..s.len() {
                s[i] += g[i] * va[i];
            }
        }
    }

    pub(super) fn bw_add_suffix(&self, a: Var, b: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        if let Some(s) = self.slot(grads, a) {
            s.iter_mut().zip(g).for_each(|(s, &g)| *s += g);
        }
        if let Some(s) = self.slot(grads, b) {
            let inner = s.len();
            let mut acc: Vec<f64> = alloc::vec![0.0; inner];
            for (i, &gv) in g.iter().enumerate() {
                acc[i % inner] += gv.as_f64();
            }
            s.iter_mut().zip(acc).for_each(|(s, a)| *s += T::from_f64(a));
        }
    }

    pub(super) fn bw_relu(&self, a: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let va = self.value(a).data();
        if let Some(s) = self.slot(grads, a) {
            for i in 0..s.len() {
                if va[i] > T::zero() {
                    s[i] += g[i];
                }
            }
        }
    }

    pub(super) fn bw_gelu(&self, a: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let va = self.value(a).data();
        if let Some(s) = self.slot(grads, a) {
            for i in 0..s.len() {
                s[i] += g[i] * T::from_f64(gelu_grad_scalar(va[i].as_f64()));
            }
        }
    }

    pub(super) fn bw_sigmoid(&self, out: usize, a: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let y = self.value(Var(out)).data();
        if let Some(s) = self.slot(grads, a) {
            for i in 0..s.len() {
                s[i] += g[i] * y[i] * (T::one() - y[i]);
            }
        }
    }

    pub(super) fn bw_tanh(&self, out: usize, a: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let y = self.value(Var(out)).data();
        if let Some(s) = self.slot(grads, a) {
            for i in 0..s.len() {
                s[i] += g[i] * (T::one() - y[i] * y[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::check::{check_binary, check_unary, rand_tensor};
    use super::*;

    #[test]
    fn relu_values_and_zero_subgradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_f64([3], &[-1.0, 0.0, 2.0]).unwrap());
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::scalar(0.0));
        let y = g.sigmoid(x);
        assert_eq!(g.value(y).item(), 0.5);
    }

    #[test]
    fn gelu_matches_finite_difference() {
        for (i, &x) in [-3.0, -1.2, -0.3, 0.0, 0.4, 1.7, 3.5].iter().enumerate() {
            let h = 1e-5;
            let fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad_scalar(x)).abs() < 1e-5, "point {i}: x={x}");
        }
    }

    #[test]
    fn elementwise_gradients() {
        let x = rand_tensor(&[3, 5], 1);
        check_unary(&x, |g, v| g.gelu(v));
        check_unary(&x, |g, v| g.sigmoid(v));
        check_unary(&x, |g, v| g.tanh(v));
        check_unary(&x, |g, v| g.scale(v, 0.37));
        check_unary(&x, |g, v| {
            let sq = g.mul(v, v).unwrap();
            g.mean(sq)
        });
    }

    #[test]
    fn broadcast_add_gradient() {
        let x = rand_tensor(&[4, 3], 2);
        let b = rand_tensor(&[3], 3);
        check_binary(&x, &b, |g, a, b| g.add_broadcast(a, b).unwrap());
    }

    #[test]
    fn broadcast_rejects_non_suffix() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros([4, 3]));
        let b = g.constant(Tensor::zeros([4]));
        assert!(g.add_broadcast(x, b).is_err());
    }

    #[test]
    fn reused_tensor_sums_both_paths() {
        let x = rand_tensor(&[6], 4);
        check_unary(&x, |g, v| {
            let a = g.gelu(v);
            let b = g.mul(a, v).unwrap();
            g.add(b, v).unwrap()
        });
    }
}
