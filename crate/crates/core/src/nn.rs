//! Composite layers built from graph primitives.

use alloc::vec;

use crate::autograd::{Graph, Var};
use crate::error::{bail, Result};
use crate::scalar::Real;

/// `x · w + b` over the last axis of `x`; `w` is `in × out`.
pub fn linear<T: Real>(g: &mut Graph<T>, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let ws = g.shape(w).to_vec();
    let Some(&din) = shape.last() else {
        bail!(Dimension, "linear layer on a scalar");
    };
    if ws.len() != 2 || ws[0] != din {
        bail!(Dimension, "linear weight {:?} for input {:?}", ws, shape);
    }
    let rows = x_rows(&shape);
    let flat = g.reshape(x, vec![rows, din])?;
    let mut y = g.matmul(flat, w)?;
    if let Some(b) = b {
        y = g.add_broadcast(y, b)?;
    }
    let mut out_shape = shape;
    *out_shape.last_mut().unwrap() = ws[1];
    g.reshape(y, out_shape)
}

fn x_rows(shape: &[usize]) -> usize {
    shape[..shape.len() - 1].iter().product()
}

/// Projection weights of one attention block; matrices are `D × D`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Learned head-mixing applied to attention maps before they weight the
/// values: `theta` is `H × H`, followed by layer norm across heads.
#[derive(Clone, Copy, Debug)]
pub struct ReAttentionVars {
    pub theta: Var,
    pub gamma: Var,
    pub beta: Var,
}

pub struct AttentionOutput {
    /// `B × Tq × D`.
    pub output: Var,
    /// Post-softmax attention maps, `(B·H) × Tq × Tk`.
    pub weights: Var,
}

/// Splits `B × T × D` into `(B·H) × T × dh`.
fn split_heads<T: Real>(g: &mut Graph<T>, x: Var, heads: usize) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let (b, t, d) = (s[0], s[1], s[2]);
    let r = g.reshape(x, vec![b, t, heads, d / heads])?;
    let p = g.permute(r, &[0, 2, 1, 3])?;
    g.reshape(p, vec![b * heads, t, d / heads])
}

/// Scaled dot-product attention with `heads` heads.
///
/// Queries come from `query_src` (`B × Tq × D`), keys and values from
/// `kv_src` (`B × Tk × D`); passing the same tensor gives self-attention.
pub fn multi_head_attention<T: Real>(
    g: &mut Graph<T>,
    query_src: Var,
    kv_src: Var,
    p: &AttentionVars,
    heads: usize,
    reattention: Option<&ReAttentionVars>,
) -> Result<AttentionOutput> {
    let qs = g.shape(query_src).to_vec();
    let ks = g.shape(kv_src).to_vec();
    if qs.len() != 3 || ks.len() != 3 || qs[0] != ks[0] || qs[2] != ks[2] {
        bail!(Dimension, "attention between {:?} and {:?}", qs, ks);
    }
    let (b, tq, d) = (qs[0], qs[1], qs[2]);
    let tk = ks[1];
    if heads == 0 || d % heads != 0 {
        bail!(Config, "embedding width {} is not divisible by {} heads", d, heads);
    }
    let dh = d / heads;
    let q = linear(g, query_src, p.wq, Some(p.bq))?;
    let k = linear(g, kv_src, p.wk, Some(p.bk))?;
    let v = linear(g, kv_src, p.wv, Some(p.bv))?;
    let q = split_heads(g, q, heads)?;
    let v = split_heads(g, v, heads)?;
    let kr = g.reshape(k, vec![b, tk, heads, dh])?;
    let kt = g.permute(kr, &[0, 2, 3, 1])?;
    let kt = g.reshape(kt, vec![b * heads, dh, tk])?;
    let scores = g.bmm(q, kt)?;
    let scores = g.scale(scores, T::from_f64(1.0 / libm::sqrt(dh as f64)));
    let mut attn = g.softmax(scores)?;
    let weights = attn;
    if let Some(re) = reattention {
        let a = g.reshape(attn, vec![b, heads, tq, tk])?;
        let a = g.permute(a, &[0, 2, 3, 1])?;
        let a = g.reshape(a, vec![b * tq * tk, heads])?;
        let a = g.matmul(a, re.theta)?;
        let a = g.layernorm(a, re.gamma, re.beta)?;
        let a = g.reshape(a, vec![b, tq, tk, heads])?;
        let a = g.permute(a, &[0, 3, 1, 2])?;
        attn = g.reshape(a, vec![b * heads, tq, tk])?;
    }
    let ctx = g.bmm(attn, v)?;
    let ctx = g.reshape(ctx, vec![b, heads, tq, dh])?;
    let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = g.reshape(ctx, vec![b, tq, d])?;
    let output = linear(g, ctx, p.wo, Some(p.bo))?;
    Ok(AttentionOutput { output, weights })
}
