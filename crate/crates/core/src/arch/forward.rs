use alloc::vec;
use alloc::vec::Vec;

use super::plan::{AttnP, BlockP, BnP, BranchP, FuseP, LinearP, Net, NormP};
use crate::autograd::{BatchNormStats, Graph, Var};
use crate::error::Result;
use crate::nn::{self, AttentionVars, ReAttentionVars};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

pub struct Forward<T> {
    /// `B × 2`.
    pub logits: Var,
    /// New running statistics per batchnorm layer (train mode only).
    pub bn_updates: Vec<(usize, BatchNormStats<T>)>,
    /// Sequence pooling weights `B × T` (CCT only).
    pub pool_weights: Option<Var>,
    /// Token count entering each encoder stack, per branch.
    pub token_counts: Vec<usize>,
}

struct Ctx<'a, T> {
    g: &'a mut Graph<T>,
    vars: &'a [Var],
    buffers: &'a [BatchNormStats<T>],
    train: bool,
    updates: Vec<(usize, BatchNormStats<T>)>,
}

impl<T: Real> Ctx<'_, T> {
    fn v(&self, i: usize) -> Var {
        self.vars[i]
    }

    fn linear(&mut self, p: LinearP, x: Var) -> Result<Var> {
        let (w, b) = (self.v(p.w), self.v(p.b));
        nn::linear(self.g, x, w, Some(b))
    }

    fn conv(&mut self, w: usize, x: Var, stride: usize, padding: usize) -> Result<Var> {
        let w = self.v(w);
        self.g.conv2d(x, w, None, stride, padding)
    }

    fn bn(&mut self, p: BnP, x: Var) -> Result<Var> {
        let (gamma, beta) = (self.v(p.gamma), self.v(p.beta));
        let (y, upd) = self.g.batchnorm(x, gamma, beta, &self.buffers[p.stats], self.train)?;
        if let Some(s) = upd {
            self.updates.push((p.stats, s));
        }
        Ok(y)
    }

    fn bn_relu(&mut self, p: BnP, x: Var) -> Result<Var> {
        let y = self.bn(p, x)?;
        Ok(self.g.relu(y))
    }

    fn ln(&mut self, p: NormP, x: Var) -> Result<Var> {
        let (gamma, beta) = (self.v(p.gamma), self.v(p.beta));
        self.g.layernorm(x, gamma, beta)
    }

    fn attn_vars(&self, p: &AttnP) -> AttentionVars {
        AttentionVars {
            wq: self.v(p.q.w),
            bq: self.v(p.q.b),
            wk: self.v(p.k.w),
            bk: self.v(p.k.b),
            wv: self.v(p.v.w),
            bv: self.v(p.v.b),
            wo: self.v(p.o.w),
            bo: self.v(p.o.b),
        }
    }

    /// Pre-norm encoder block with residual connections.
    fn block(&mut self, p: &BlockP, x: Var, heads: usize) -> Result<Var> {
        let h = self.ln(p.ln1, x)?;
        let av = self.attn_vars(&p.attn);
        let re = p.re.map(|r| ReAttentionVars { theta: self.v(r.theta), gamma: self.v(r.norm.gamma), beta: self.v(r.norm.beta) });
        let a = nn::multi_head_attention(self.g, h, h, &av, heads, re.as_ref())?;
        let x = self.g.add(x, a.output)?;
        let h = self.ln(p.ln2, x)?;
        let h = self.linear(p.fc1, h)?;
        let h = self.g.gelu(h);
        let h = self.linear(p.fc2, h)?;
        self.g.add(x, h)
    }

    /// `B × C × H × W` into `B × (H/P·W/P) × (C·P·P)` non-overlapping patches.
    fn patchify(&mut self, x: Var, patch: usize) -> Result<Var> {
        let s = self.g.shape(x).to_vec();
        let (b, c, h, w) = (s[0], s[1], s[2] / patch, s[3] / patch);
        let r = self.g.reshape(x, vec![b, c, h, patch, w, patch])?;
        let r = self.g.permute(r, &[0, 2, 4, 1, 3, 5])?;
        self.g.reshape(r, vec![b, h * w, c * patch * patch])
    }

    /// Patch embedding with a prepended class token and optional positions.
    fn embed(&mut self, x: Var, patch: usize, embed: LinearP, cls: usize, pos: Option<usize>) -> Result<Var> {
        let b = self.g.shape(x)[0];
        let patches = self.patchify(x, patch)?;
        let tokens = self.linear(embed, patches)?;
        let cls = self.g.repeat_leading(self.vars[cls], b)?;
        let mut x = self.g.concat(&[cls, tokens], 1)?;
        if let Some(pos) = pos {
            x = self.g.add_broadcast(x, self.vars[pos])?;
        }
        Ok(x)
    }

    /// Token 0 of `B × T × D` as `B × D`.
    fn first_token(&mut self, x: Var) -> Result<Var> {
        let s = self.g.shape(x).to_vec();
        let t = self.g.slice(x, 1, 0, 1)?;
        self.g.reshape(t, vec![s[0], s[2]])
    }
}

pub(super) fn run<T: Real>(
    net: &Net,
    g: &mut Graph<T>,
    vars: &[Var],
    buffers: &[BatchNormStats<T>],
    input: Var,
    mode: Mode,
) -> Result<Forward<T>> {
    let mut cx = Ctx { g, vars, buffers, train: mode == Mode::Train, updates: Vec::new() };
    let mut pool_weights = None;
    let mut token_counts = Vec::new();
    let logits = match net {
        Net::Lenet { stages, fcs } => {
            let mut x = input;
            for &(conv, bn) in stages {
                x = cx.conv(conv, x, 1, 1)?;
                x = cx.bn_relu(bn, x)?;
                x = cx.g.maxpool2d(x, 2, 2)?;
            }
            let b = cx.g.shape(x)[0];
            let flat = cx.g.value(x).numel() / b;
            x = cx.g.reshape(x, vec![b, flat])?;
            x = cx.linear(fcs[0], x)?;
            x = cx.g.relu(x);
            x = cx.linear(fcs[1], x)?;
            x = cx.g.relu(x);
            cx.linear(fcs[2], x)?
        }
        Net::Dense { stem, stem_bn, wide, blocks, transitions, norm, head } => {
            let mut x = if *wide { cx.conv(*stem, input, 2, 3)? } else { cx.conv(*stem, input, 2, 1)? };
            x = cx.bn_relu(*stem_bn, x)?;
            if *wide {
                x = cx.g.maxpool2d(x, 2, 2)?;
            }
            for (bi, block) in blocks.iter().enumerate() {
                for layer in block {
                    let h = cx.bn_relu(layer.bn1, x)?;
                    let h = cx.conv(layer.conv1, h, 1, 0)?;
                    let h = cx.bn_relu(layer.bn2, h)?;
                    let h = cx.conv(layer.conv2, h, 1, 1)?;
                    x = cx.g.concat(&[x, h], 1)?;
                }
                if let Some(t) = transitions.get(bi) {
                    let h = cx.bn_relu(t.bn, x)?;
                    let h = cx.conv(t.conv, h, 1, 0)?;
                    x = cx.g.avgpool2d(h, 2, 2)?;
                }
            }
            x = cx.bn_relu(*norm, x)?;
            x = cx.g.global_avg_pool(x)?;
            cx.linear(*head, x)?
        }
        Net::Vit { heads, patch, embed, cls, pos, blocks, norm, head } => {
            let mut x = cx.embed(input, *patch, *embed, *cls, *pos)?;
            token_counts.push(cx.g.shape(x)[1]);
            let heads = *heads;
            for b in blocks {
                x = cx.block(b, x, heads)?;
            }
            x = cx.ln(*norm, x)?;
            let c = cx.first_token(x)?;
            cx.linear(*head, c)?
        }
        Net::Cct { heads, convs, pos, blocks, norm, pool, head } => {
            let mut x = input;
            for &c in convs {
                x = cx.conv(c, x, 1, 1)?;
                x = cx.g.relu(x);
                x = cx.g.maxpool2d(x, 2, 2)?;
            }
            let s = cx.g.shape(x).to_vec();
            let (b, d, t) = (s[0], s[1], s[2] * s[3]);
            x = cx.g.reshape(x, vec![b, d, t])?;
            x = cx.g.permute(x, &[0, 2, 1])?;
            if let Some(p) = pos {
                x = cx.g.add_broadcast(x, cx.vars[*p])?;
            }
            token_counts.push(t);
            let heads = *heads;
            for blk in blocks {
                x = cx.block(blk, x, heads)?;
            }
            x = cx.ln(*norm, x)?;
            let scores = cx.linear(*pool, x)?;
            let scores = cx.g.reshape(scores, vec![b, t])?;
            let w = cx.g.softmax(scores)?;
            pool_weights = Some(w);
            let w3 = cx.g.reshape(w, vec![b, 1, t])?;
            let pooled = cx.g.bmm(w3, x)?;
            let pooled = cx.g.reshape(pooled, vec![b, d])?;
            cx.linear(*head, pooled)?
        }
        Net::Cross { heads, branches, layers } => {
            let mut xs = [Var(0); 2];
            for (i, br) in branches.iter().enumerate() {
                xs[i] = branch_tokens(&mut cx, br, input)?;
                token_counts.push(cx.g.shape(xs[i])[1]);
            }
            let heads = *heads;
            for layer in layers {
                for b in &layer.large {
                    xs[0] = cx.block(b, xs[0], heads)?;
                }
                for b in &layer.small {
                    xs[1] = cx.block(b, xs[1], heads)?;
                }
                let a = fuse(&mut cx, &layer.fuse[0], xs[0], xs[1], heads)?;
                let b = fuse(&mut cx, &layer.fuse[1], xs[1], xs[0], heads)?;
                xs = [a, b];
            }
            let mut out = [Var(0); 2];
            for (i, br) in branches.iter().enumerate() {
                let x = cx.ln(br.norm, xs[i])?;
                let c = cx.first_token(x)?;
                out[i] = cx.linear(br.head, c)?;
            }
            let sum = cx.g.add(out[0], out[1])?;
            cx.g.scale(sum, T::from_f64(0.5))
        }
    };
    Ok(Forward { logits, bn_updates: cx.updates, pool_weights, token_counts })
}

fn branch_tokens<T: Real>(cx: &mut Ctx<'_, T>, br: &BranchP, input: Var) -> Result<Var> {
    let s = cx.g.shape(input).to_vec();
    let x = if s[2] == br.side && s[3] == br.side { input } else { cx.g.resize_bilinear(input, br.side, br.side)? };
    cx.embed(x, br.patch, br.embed, br.cls, Some(br.pos))
}

/// Replaces the class token of `own` after it attends over the patch
/// tokens of `other`.
fn fuse<T: Real>(cx: &mut Ctx<'_, T>, p: &FuseP, own: Var, other: Var, heads: usize) -> Result<Var> {
    let so = cx.g.shape(own).to_vec();
    let st = cx.g.shape(other).to_vec();
    let cls = cx.g.slice(own, 1, 0, 1)?;
    let own_patches = cx.g.slice(own, 1, 1, so[1] - 1)?;
    let other_patches = cx.g.slice(other, 1, 1, st[1] - 1)?;
    let q = cx.ln(p.proj_ln, cls)?;
    let q = cx.g.gelu(q);
    let q = cx.linear(p.proj, q)?;
    let seq = cx.g.concat(&[q, other_patches], 1)?;
    let kv = cx.ln(p.attn_ln, seq)?;
    let qn = cx.g.slice(kv, 1, 0, 1)?;
    let av = cx.attn_vars(&p.attn);
    let a = nn::multi_head_attention(cx.g, qn, kv, &av, heads, None)?;
    let q = cx.g.add(q, a.output)?;
    let back = cx.ln(p.back_ln, q)?;
    let back = cx.g.gelu(back);
    let back = cx.linear(p.back, back)?;
    cx.g.concat(&[back, own_patches], 1)
}
