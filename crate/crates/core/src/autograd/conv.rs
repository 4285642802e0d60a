use alloc::vec;
use alloc::vec::Vec;

use super::linear::{gemm, gemm_nt, gemm_tn};
use super::{Graph, Op, Var};
use crate::error::{bail, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Output extent of a sliding window: `floor((n + 2p - k) / s) + 1`.
pub fn window_output(n: usize, k: usize, padding: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        bail!(Config, "stride must be at least 1");
    }
    if k == 0 || k > n + 2 * padding {
        bail!(Dimension, "window {} larger than padded extent {}", k, n + 2 * padding);
    }
    Ok((n + 2 * padding - k) / stride + 1)
}

/// Bilinear sampling taps with half-pixel centres and edge clamping.
///
/// Output coordinate `o` reads `(1 - w) * src[i0] + w * src[i1]`.
pub fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = src as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

fn dims4(shape: &[usize], what: &str) -> Result<(usize, usize, usize, usize)> {
    if shape.len() != 4 {
        bail!(Dimension, "{} expects B×C×H×W input, got {:?}", what, shape);
    }
    Ok((shape[0], shape[1], shape[2], shape[3]))
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn im2col<T: Real>(&self, img: &[T], cols: &mut [T]) {
        let n = self.cols();
        for c in 0..self.c {
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = &mut cols[((c * self.k + ki) * self.k + kj) * n..][..n];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            row[oy * self.wo + ox] = if iy >= 0 && ix >= 0 && (iy as usize) < self.h && (ix as usize) < self.w {
                                img[(c * self.h + iy as usize) * self.w + ix as usize]
                            } else {
                                T::zero()
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], img: &mut [T]) {
        let n = self.cols();
        for c in 0..self.c {
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = &cols[((c * self.k + ki) * self.k + kj) * n..][..n];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            if ix >= 0 && (ix as usize) < self.w {
                                img[(c * self.h + iy as usize) * self.w + ix as usize] += row[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Graph<T> {
    fn conv_geom(&self, input: Var, weight: Var, stride: usize, padding: usize) -> Result<(usize, usize, ConvGeom)> {
        let (b, c, h, w) = dims4(self.shape(input), "conv2d")?;
        let ws = self.shape(weight);
        if ws.len() != 4 || ws[1] != c || ws[2] != ws[3] {
            bail!(Dimension, "conv2d weight {:?} does not fit input {:?}", ws, self.shape(input));
        }
        let (f, k) = (ws[0], ws[2]);
        let ho = window_output(h, k, padding, stride)?;
        let wo = window_output(w, k, padding, stride)?;
        Ok((b, f, ConvGeom { c, h, w, k, stride, padding, ho, wo }))
    }

    /// 2-D cross-correlation of `B×C×H×W` input with `F×C×k×k` weights.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (b, f, geo) = self.conv_geom(input, weight, stride, padding)?;
        if let Some(bv) = bias {
            if self.shape(bv) != [f] {
                bail!(Dimension, "conv2d bias {:?} for {} filters", self.shape(bv), f);
            }
        }
        let (rows, n) = (geo.rows(), geo.cols());
        let img_len = geo.c * geo.h * geo.w;
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        let mut cols = vec![T::zero(); rows * n];
        let mut out = vec![T::zero(); b * f * n];
        for bi in 0..b {
            geo.im2col(&x[bi * img_len..(bi + 1) * img_len], &mut cols);
            let o = &mut out[bi * f * n..(bi + 1) * f * n];
            gemm(wt, &cols, o, f, rows, n);
            if let Some(bv) = bias {
                let bd = self.value(bv).data();
                for (fi, chunk) in o.chunks_mut(n).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += bd[fi]);
                }
            }
        }
        let out = Tensor::new([b, f, geo.ho, geo.wo], out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(out, Op::Conv2d { input, weight, bias, stride, padding }, &inputs))
    }

    pub(super) fn bw_conv2d(
        &self,
        _out: usize,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let (b, f, geo) = self.conv_geom(input, weight, stride, padding).expect("validated in forward");
        let (rows, n) = (geo.rows(), geo.cols());
        let img_len = geo.c * geo.h * geo.w;
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        if let Some(bv) = bias {
            if let Some(s) = self.slot(grads, bv) {
                for bi in 0..b {
                    for fi in 0..f {
                        let sum: f64 = g[(bi * f + fi) * n..(bi * f + fi + 1) * n].iter().map(|v| v.as_f64()).sum();
                        s[fi] += T::from_f64(sum);
                    }
                }
            }
        }
        let need_w = self.requires_grad(weight);
        let need_x = self.requires_grad(input);
        let mut cols = vec![T::zero(); rows * n];
        let mut gw = if need_w { vec![T::zero(); f * rows] } else { Vec::new() };
        let mut gx = if need_x { vec![T::zero(); x.len()] } else { Vec::new() };
        for bi in 0..b {
            let gb = &g[bi * f * n..(bi + 1) * f * n];
            if need_w {
                geo.im2col(&x[bi * img_len..(bi + 1) * img_len], &mut cols);
                gemm_nt(gb, &cols, &mut gw, f, n, rows);
            }
            if need_x {
                cols.iter_mut().for_each(|v| *v = T::zero());
                gemm_tn(wt, gb, &mut cols, rows, f, n);
                geo.col2im(&cols, &mut gx[bi * img_len..(bi + 1) * img_len]);
            }
        }
        if let Some(s) = self.slot(grads, weight) {
            s.iter_mut().zip(gw).for_each(|(s, g)| *s += g);
        }
        if let Some(s) = self.slot(grads, input) {
            s.iter_mut().zip(gx).for_each(|(s, g)| *s += g);
        }
    }

    /// Max over `window×window` patches; ties resolve to the first index in
    /// row-major window order.
    pub fn maxpool2d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let (b, c, h, w) = dims4(self.shape(input), "maxpool2d")?;
        if window > h || window > w {
            bail!(Dimension, "pool window {} exceeds spatial extent {}×{}", window, h, w);
        }
        let ho = window_output(h, window, 0, stride)?;
        let wo = window_output(w, window, 0, stride)?;
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(b * c * ho * wo);
        let mut argmax = Vec::with_capacity(b * c * ho * wo);
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * stride * w + ox * stride;
                    for ky in 0..window {
                        for kx in 0..window {
                            let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let out = Tensor::new([b, c, ho, wo], out)?;
        Ok(self.push(out, Op::MaxPool2d { input, argmax }, &[input]))
    }

    pub fn avgpool2d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let (b, c, h, w) = dims4(self.shape(input), "avgpool2d")?;
        if window > h || window > w {
            bail!(Dimension, "pool window {} exceeds spatial extent {}×{}", window, h, w);
        }
        let ho = window_output(h, window, 0, stride)?;
        let wo = window_output(w, window, 0, stride)?;
        let x = self.value(input).data();
        let inv = 1.0 / (window * window) as f64;
        let mut out = Vec::with_capacity(b * c * ho * wo);
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for ky in 0..window {
                        for kx in 0..window {
                            s += x[base + (oy * stride + ky) * w + ox * stride + kx].as_f64();
                        }
                    }
                    out.push(T::from_f64(s * inv));
                }
            }
        }
        let out = Tensor::new([b, c, ho, wo], out)?;
        Ok(self.push(out, Op::AvgPool2d { input, window, stride }, &[input]))
    }

    /// Mean over the spatial axes: `B×C×H×W -> B×C`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let (b, c, h, w) = dims4(self.shape(input), "global_avg_pool")?;
        let hw = h * w;
        let x = self.value(input).data();
        let out: Vec<T> = x
            .chunks(hw)
            .map(|p| T::from_f64(p.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64))
            .collect();
        let out = Tensor::new([b, c], out)?;
        Ok(self.push(out, Op::GlobalAvgPool(input), &[input]))
    }

    /// Bilinear resize of the two trailing axes of a `B×C×H×W` tensor.
    pub fn resize_bilinear(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let (b, c, h, w) = dims4(self.shape(input), "resize_bilinear")?;
        if out_h == 0 || out_w == 0 {
            bail!(Dimension, "resize to {}×{}", out_h, out_w);
        }
        let rows = bilinear_taps(h, out_h);
        let cols = bilinear_taps(w, out_w);
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(b * c * out_h * out_w);
        for plane in 0..b * c {
            let p = &x[plane * h * w..(plane + 1) * h * w];
            for &(r0, r1, fy) in &rows {
                for &(c0, c1, fx) in &cols {
                    let top = p[r0 * w + c0].as_f64() * (1.0 - fx) + p[r0 * w + c1].as_f64() * fx;
                    let bot = p[r1 * w + c0].as_f64() * (1.0 - fx) + p[r1 * w + c1].as_f64() * fx;
                    out.push(T::from_f64(top * (1.0 - fy) + bot * fy));
                }
            }
        }
        let out = Tensor::new([b, c, out_h, out_w], out)?;
        Ok(self.push(out, Op::ResizeBilinear { input, rows, cols }, &[input]))
    }

    pub(super) fn bw_avgpool(&self, out: usize, input: Var, window: usize, stride: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let s_in = self.shape(input);
        let (h, w) = (s_in[2], s_in[3]);
        let so = self.shape(Var(out));
        let (ho, wo) = (so[2], so[3]);
        let k = T::from_f64(1.0 / (window * window) as f64);
        if let Some(s) = self.slot(grads, input) {
            for (plane, gp) in g.chunks(ho * wo).enumerate() {
                let base = plane * h * w;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let gv = gp[oy * wo + ox] * k;
                        for ky in 0..window {
                            for kx in 0..window {
                                s[base + (oy * stride + ky) * w + ox * stride + kx] += gv;
                            }
                        }
                    }
                }
            }
        }
    }

    pub(super) fn bw_global_avg(&self, input: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let s_in = self.shape(input);
        let hw = s_in[2] * s_in[3];
        let k = T::from_f64(1.0 / hw as f64);
        if let Some(s) = self.slot(grads, input) {
            for (plane, &gv) in g.iter().enumerate() {
                s[plane * hw..(plane + 1) * hw].iter_mut().for_each(|v| *v += gv * k);
            }
        }
    }

    pub(super) fn bw_resize(
        &self,
        input: Var,
        rows: &[(usize, usize, f64)],
        cols: &[(usize, usize, f64)],
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let s_in = self.shape(input);
        let (h, w) = (s_in[2], s_in[3]);
        let (oh, ow) = (rows.len(), cols.len());
        if let Some(s) = self.slot(grads, input) {
            for (plane, gp) in g.chunks(oh * ow).enumerate() {
                let p = &mut s[plane * h * w..(plane + 1) * h * w];
                for (oy, &(r0, r1, fy)) in rows.iter().enumerate() {
                    for (ox, &(c0, c1, fx)) in cols.iter().enumerate() {
                        let gv = gp[oy * ow + ox].as_f64();
                        p[r0 * w + c0] += T::from_f64(gv * (1.0 - fy) * (1.0 - fx));
                        p[r0 * w + c1] += T::from_f64(gv * (1.0 - fy) * fx);
                        p[r1 * w + c0] += T::from_f64(gv * fy * (1.0 - fx));
                        p[r1 * w + c1] += T::from_f64(gv * fy * fx);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::check::{check, check_unary, rand_tensor, Tolerance};
    use super::*;

    fn conv_reference(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Vec<f64> {
        let (b, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (f, k) = (w.shape()[0], w.shape()[2]);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; b * f * ho * wo];
        for bi in 0..b {
            for fi in 0..f {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut s = 0.0;
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= wd {
                                        continue;
                                    }
                                    s += x.data()[((bi * c + ci) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((fi * c + ci) * k + ky) * k + kx];
                                }
                            }
                        }
                        out[((bi * f + fi) * ho + oy) * wo + ox] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel() {
        let x = rand_tensor(&[2, 1, 5, 5], 3);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let wv = g.constant(Tensor::full([1, 1, 1, 1], 1.0));
        let y = g.conv2d(xv, wv, None, 1, 0).unwrap();
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn same_padding_shape() {
        assert_eq!(window_output(224, 3, 1, 1).unwrap(), 224);
        assert!(window_output(2, 5, 1, 1).is_err());
    }

    #[test]
    fn matches_nested_loop_reference() {
        let x = rand_tensor(&[1, 2, 6, 6], 21);
        let w = rand_tensor(&[3, 2, 3, 3], 22);
        for (stride, pad) in [(1, 0), (1, 1), (2, 1), (3, 2)] {
            let mut g = Graph::new();
            let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
            let y = g.conv2d(xv, wv, None, stride, pad).unwrap();
            let expect = conv_reference(&x, &w, stride, pad);
            for (a, b) in g.value(y).data().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kernel_larger_than_input_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros([1, 1, 2, 2]));
        let w = g.constant(Tensor::zeros([1, 1, 5, 5]));
        assert!(matches!(g.conv2d(x, w, None, 1, 1), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn conv_gradients() {
        let x = rand_tensor(&[2, 2, 5, 5], 31);
        let w = rand_tensor(&[3, 2, 3, 3], 32);
        let b = rand_tensor(&[3], 33);
        for (stride, pad) in [(1, 1), (2, 0)] {
            let rep = check(
                &[x.clone(), w.clone(), b.clone()],
                |g, v| g.conv2d(v[0], v[1], Some(v[2]), stride, pad).unwrap(),
                Tolerance::default(),
            );
            assert!(rep.passed(), "{:?}", rep.failures);
        }
    }

    #[test]
    fn maxpool_cases() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(Tensor::full([1, 1, 4, 4], 2.5));
        let p = g.maxpool2d(c, 2, 2).unwrap();
        assert!(g.value(p).data().iter().all(|&v| v == 2.5));
        let x = g.constant(Tensor::from_f64([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        let p = g.maxpool2d(x, 2, 2).unwrap();
        assert_eq!(g.value(p).data(), &[4.0]);
        let big = g.constant(Tensor::zeros([1, 1, 2, 2]));
        assert!(g.maxpool2d(big, 3, 1).is_err());
    }

    #[test]
    fn maxpool_tie_routes_to_first() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::full([1, 1, 2, 2], 1.0));
        let p = g.maxpool2d(x, 2, 2).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_matches_exhaustive_scan() {
        let x = rand_tensor(&[2, 3, 7, 6], 41);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let p = g.maxpool2d(xv, 3, 2).unwrap();
        let (ho, wo) = (3, 2);
        assert_eq!(g.shape(p), &[2, 3, ho, wo]);
        for plane in 0..6 {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut m = f64::NEG_INFINITY;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            m = m.max(x.data()[plane * 42 + (oy * 2 + ky) * 6 + ox * 2 + kx]);
                        }
                    }
                    assert_eq!(g.value(p).data()[(plane * ho + oy) * wo + ox], m);
                }
            }
        }
    }

    #[test]
    fn pool_and_resize_gradients() {
        let x = rand_tensor(&[2, 2, 6, 6], 51);
        check_unary(&x, |g, v| g.maxpool2d(v, 2, 2).unwrap());
        check_unary(&x, |g, v| g.avgpool2d(v, 2, 2).unwrap());
        check_unary(&x, |g, v| g.global_avg_pool(v).unwrap());
        check_unary(&x, |g, v| g.resize_bilinear(v, 4, 9).unwrap());
    }

    #[test]
    fn shape_formula_sweep() {
        for h in 1..=10usize {
            for k in 1..=h {
                for p in 0..=2usize {
                    for s in 1..=3usize {
                        let expect = (h + 2 * p - k) / s + 1;
                        let mut g = Graph::<f64>::new();
                        let x = g.constant(Tensor::zeros([1, 1, h, h]));
                        let w = g.constant(Tensor::zeros([1, 1, k, k]));
                        let y = g.conv2d(x, w, None, s, p).unwrap();
                        assert_eq!(g.shape(y), &[1, 1, expect, expect]);
                        if p == 0 {
                            let m = g.maxpool2d(x, k, s).unwrap();
                            assert_eq!(g.shape(m), &[1, 1, expect, expect]);
                        }
                    }
                }
            }
        }
    }
}
