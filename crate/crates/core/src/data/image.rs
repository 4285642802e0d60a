use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autograd::bilinear_taps;
use crate::error::{bail, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Single-channel image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || height * width != pixels.len() {
            bail!(Dimension, "{}x{} image given {} pixels", height, width, pixels.len());
        }
        Ok(Self { height, width, pixels })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(y, x));
            }
        }
        Self { height, width, pixels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear resample, half-pixel centres, edges clamped.
    pub fn resize(&self, height: usize, width: usize) -> GrayImage {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let rows = bilinear_taps(self.height, height);
        let cols = bilinear_taps(self.width, width);
        let p = &self.pixels;
        let w = self.width;
        let mut out = Vec::with_capacity(height * width);
        for &(r0, r1, fy) in &rows {
            for &(c0, c1, fx) in &cols {
                let at = |r: usize, c: usize| p[r * w + c] as f64;
                let top = at(r0, c0) * (1.0 - fx) + at(r0, c1) * fx;
                let bot = at(r1, c0) * (1.0 - fx) + at(r1, c1) * fx;
                out.push((top * (1.0 - fy) + bot * fy) as f32);
            }
        }
        GrayImage { height, width, pixels: out }
    }

    /// Mirror left to right.
    pub fn hflip(&self) -> GrayImage {
        GrayImage::from_fn(self.height, self.width, |y, x| self.get(y, self.width - 1 - x))
    }

    /// Bilinear sample at a continuous pixel coordinate, 0 outside.
    fn sample(&self, y: f64, x: f64) -> f64 {
        let (y0, x0) = (libm::floor(y), libm::floor(x));
        let (fy, fx) = (y - y0, x - x0);
        let mut acc = 0.0;
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                let (yy, xx) = (y0 + dy, x0 + dx);
                if wy * wx == 0.0 || yy < 0.0 || xx < 0.0 || yy >= self.height as f64 || xx >= self.width as f64 {
                    continue;
                }
                acc += wy * wx * self.get(yy as usize, xx as usize) as f64;
            }
        }
        acc
    }
}

/// Converts interleaved RGB bytes to gray by the unweighted channel mean.
pub fn rgb_to_gray(rgb: &[u8]) -> Vec<f32> {
    rgb.chunks_exact(3).map(|p| (p[0] as f32 + p[1] as f32 + p[2] as f32) / (3.0 * 255.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct AugmentConfig {
    pub flip_prob: f64,
    /// Shift (fraction of the side) and scale deviation are each drawn
    /// uniformly from `±shift_scale_factor`.
    pub shift_scale_factor: f64,
    pub rotate_degrees: f64,
    pub apply_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { flip_prob: 0.5, shift_scale_factor: 0.1, rotate_degrees: 5.0, apply_prob: 0.5 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("flip_prob", self.flip_prob), ("apply_prob", self.apply_prob)] {
            if !(0.0..=1.0).contains(&p) {
                bail!(Config, "{} = {} is not a probability", name, p);
            }
        }
        if !(self.shift_scale_factor >= 0.0 && self.shift_scale_factor < 1.0) || !(self.rotate_degrees >= 0.0) {
            bail!(
                Config,
                "shift_scale_factor must lie in [0, 1) and rotate_degrees be non-negative, got {} and {}",
                self.shift_scale_factor,
                self.rotate_degrees
            );
        }
        Ok(())
    }
}

/// Every random quantity one augmentation call consumes, drawn in a fixed
/// order so the same seed always yields the same draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraws {
    pub flip_gate: f64,
    pub affine_gate: f64,
    pub shift_x: f64,
    pub shift_y: f64,
    pub scale: f64,
    pub rotate_gate: f64,
    pub angle: f64,
}

impl AugmentDraws {
    pub fn draw(seed: u64) -> Self {
        let mut r = rng::stream(seed, &[0x6175_6700]);
        Self {
            flip_gate: r.random(),
            affine_gate: r.random(),
            shift_x: r.random_range(-1.0..=1.0),
            shift_y: r.random_range(-1.0..=1.0),
            scale: r.random_range(-1.0..=1.0),
            rotate_gate: r.random(),
            angle: r.random_range(-1.0..=1.0),
        }
    }

    pub fn flips(&self, cfg: &AugmentConfig) -> bool {
        self.flip_gate < cfg.apply_prob.min(cfg.flip_prob)
    }

    pub fn shifts_scales(&self, cfg: &AugmentConfig) -> bool {
        self.affine_gate < cfg.apply_prob
    }

    pub fn rotates(&self, cfg: &AugmentConfig) -> bool {
        self.rotate_gate < cfg.apply_prob
    }
}

/// Flip, then shift/scale, then rotate, each gated independently.
///
/// The geometric steps are composed into one affine map about the image
/// centre and resampled once; uncovered pixels become 0.
pub fn augment(img: &GrayImage, cfg: &AugmentConfig, seed: u64) -> GrayImage {
    apply_draws(img, cfg, &AugmentDraws::draw(seed))
}

pub fn apply_draws(img: &GrayImage, cfg: &AugmentConfig, d: &AugmentDraws) -> GrayImage {
    let flipped = if d.flips(cfg) { img.hflip() } else { img.clone() };
    let affine = d.shifts_scales(cfg);
    let rotate = d.rotates(cfg);
    if !affine && !rotate {
        return flipped;
    }
    let (h, w) = (img.height as f64, img.width as f64);
    let f = cfg.shift_scale_factor;
    let (s, tx, ty) = if affine { (1.0 + d.scale * f, d.shift_x * f * w, d.shift_y * f * h) } else { (1.0, 0.0, 0.0) };
    let theta = if rotate { (d.angle * cfg.rotate_degrees).to_radians() } else { 0.0 };
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    let (cy, cx) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
    GrayImage::from_fn(img.height, img.width, |y, x| {
        // invert: out = R·(s·(in − c)) + c + t
        let (u, v) = (x as f64 - cx - tx, y as f64 - cy - ty);
        let (ru, rv) = (cos * u + sin * v, -sin * u + cos * v);
        flipped.sample(rv / s + cy, ru / s + cx) as f32
    })
}

/// Resize, standardize with `(x − mean) / std`, and repeat to `channels`.
pub fn finalize_for_dl(img: &GrayImage, side: usize, mean: f32, std: f32, channels: usize) -> Result<Tensor<f32>> {
    if channels != 1 && channels != 3 {
        bail!(Config, "channels must be 1 or 3, got {}", channels);
    }
    if side == 0 || !(std > 0.0) {
        bail!(Config, "side must be positive and std > 0, got {} and {}", side, std);
    }
    let r = img.resize(side, side);
    let plane: Vec<f32> = r.pixels.iter().map(|&p| (p - mean) / std).collect();
    let mut data = Vec::with_capacity(plane.len() * channels);
    for _ in 0..channels {
        data.extend_from_slice(&plane);
    }
    Tensor::new(vec![channels, side, side], data)
}
