//! Central finite-difference gradient checking.
//!
//! The checker only evaluates forward values, so it is independent of the
//! backward rules it verifies.

use alloc::vec::Vec;

use rand::Rng as _;

use super::{Graph, Var};
use crate::rng;
use crate::tensor::Tensor;

/// Outcome of comparing autodiff gradients against finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub worst_rel: f64,
    pub failures: Vec<Mismatch>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Tolerance rule: `|a - n| <= max(rel * max(|a|, |n|), abs_floor)`.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub step: f64,
    pub rel: f64,
    pub abs_floor: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { step: 1e-4, rel: 1e-4, abs_floor: 1e-7 }
    }
}

pub fn within(analytic: f64, numeric: f64, tol: &Tolerance) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    (analytic - numeric).abs() <= (tol.rel * scale).max(tol.abs_floor)
}

/// Checks every element of every input of `f`.
///
/// `f` may return a tensor of any shape; it is reduced to a scalar by a
/// fixed random projection so that all output elements contribute.
pub fn check<F>(inputs: &[Tensor<f64>], f: F, tol: Tolerance) -> GradCheck
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let all: Vec<Vec<usize>> = inputs.iter().map(|t| (0..t.numel()).collect()).collect();
    check_elements(inputs, &all, f, tol)
}

/// Checks the listed elements of each input.
pub fn check_elements<F>(
    inputs: &[Tensor<f64>],
    elements: &[Vec<usize>],
    f: F,
    tol: Tolerance,
) -> GradCheck
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor<f64>], tracked: bool| -> (Graph<f64>, Vec<Var>, Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone(), tracked)).collect();
        let out = f(&mut g, &vars);
        let projected = project(&mut g, out);
        (g, vars, projected)
    };

    let (mut g, vars, loss) = eval(inputs, true);
    g.backward(loss).expect("backward on projected output");

    let mut report = GradCheck { checked: 0, worst_rel: 0.0, failures: Vec::new() };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, idxs) in elements.iter().enumerate() {
        let analytic = g.grad(vars[k]).map(|s| s.to_vec()).unwrap_or_else(|| alloc::vec![0.0; inputs[k].numel()]);
        for &e in idxs {
            let orig = work[k].data()[e];
            work[k].data_mut()[e] = orig + tol.step;
            let plus = eval(&work, false);
            let lp = plus.0.value(plus.2).item();
            work[k].data_mut()[e] = orig - tol.step;
            let minus = eval(&work, false);
            let lm = minus.0.value(minus.2).item();
            work[k].data_mut()[e] = orig;
            let numeric = (lp - lm) / (2.0 * tol.step);
            let a = analytic[e];
            report.checked += 1;
            let scale = a.abs().max(numeric.abs());
            if scale > tol.abs_floor {
                report.worst_rel = report.worst_rel.max((a - numeric).abs() / scale);
            }
            if !within(a, numeric, &tol) {
                report.failures.push(Mismatch { input: k, element: e, analytic: a, numeric });
            }
        }
    }
    report
}

fn project(g: &mut Graph<f64>, out: Var) -> Var {
    let n = g.value(out).numel();
    if n == 1 {
        return g.reshape(out, alloc::vec![]).expect("scalar reshape");
    }
    let mut r = rng::seeded(0x5EED);
    let w = Tensor::from_fn(g.shape(out).to_vec(), |_| r.random_range(-1.0..1.0));
    let wv = g.constant(w);
    let prod = g.mul(out, wv).expect("same shape");
    g.sum(prod)
}

/// Uniform(-1, 1) test tensor.
pub fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::seeded(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(-1.0..1.0))
}

#[cfg(test)]
pub(crate) fn check_unary(x: &Tensor<f64>, f: impl Fn(&mut Graph<f64>, Var) -> Var) {
    let rep = check(core::slice::from_ref(x), |g, v| f(g, v[0]), Tolerance::default());
    assert!(rep.passed(), "{:?}", rep.failures);
}

#[cfg(test)]
pub(crate) fn check_binary(
    a: &Tensor<f64>,
    b: &Tensor<f64>,
    f: impl Fn(&mut Graph<f64>, Var, Var) -> Var,
) {
    let rep = check(&[a.clone(), b.clone()], |g, v| f(g, v[0], v[1]), Tolerance::default());
    assert!(rep.passed(), "{:?}", rep.failures);
}
