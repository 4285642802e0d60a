#![allow(dead_code)]

use std::fs;
use std::path::Path;

use cxr::pipeline::TensorSet;
use cxr_core::arch::ModelSpec;
use cxr_core::rng::mix;
use cxr_core::Tensor;

pub const SPLITS: [&str; 3] = ["train", "test", "val"];
pub const CLASSES: [&str; 2] = ["NORMAL", "PNEUMONIA"];

/// Deterministic noise in `[-1, 1)`.
pub fn noise(seed: u64, i: u64) -> f64 {
    (mix(seed ^ mix(i)) >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

pub fn write_gray_png(path: &Path, side: u32, f: impl Fn(u32, u32) -> u8) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    image::GrayImage::from_fn(side, side, |x, y| image::Luma([f(x, y)])).save(path).unwrap();
}

/// Class 0 dark on the right, class 1 dark on the left, with pixel noise.
pub fn blob_pixel(label: usize, seed: u64, x: u32, y: u32, side: u32) -> u8 {
    let bright = (x < side / 2) == (label == 0);
    let base = if bright { 190.0 } else { 60.0 };
    (base + 25.0 * noise(seed, (y * side + x) as u64)).round() as u8
}

/// `counts[split][class]` images of side `side` in the Kaggle layout.
pub fn blob_tree(root: &Path, counts: [[usize; 2]; 3], side: u32) {
    for (s, split) in SPLITS.iter().enumerate() {
        for (c, class) in CLASSES.iter().enumerate() {
            fs::create_dir_all(root.join(split).join(class)).unwrap();
            for i in 0..counts[s][c] {
                let seed = (s * 1000 + c * 100 + i) as u64;
                write_gray_png(&root.join(split).join(class).join(format!("img_{:03}.png", i)), side, |x, y| {
                    blob_pixel(c, seed, x, y, side)
                });
            }
        }
    }
}

/// `n` network inputs for `spec`, alternating labels, separable by which
/// half of the image is bright.
pub fn blob_tensors(spec: &ModelSpec, n: usize, seed: u64) -> TensorSet {
    let s = spec.image_side;
    let (mut inputs, mut labels) = (Vec::new(), Vec::new());
    for i in 0..n {
        let label = i % 2;
        let plane: Vec<f32> = (0..s * s)
            .map(|p| {
                let x = p % s;
                let bright = (x < s / 2) == (label == 0);
                (if bright { 1.0 } else { -1.0 }) + 0.3 * noise(seed + i as u64, p as u64) as f32
            })
            .collect();
        let data: Vec<f32> = plane.iter().copied().cycle().take(plane.len() * spec.in_channels).collect();
        inputs.push(Tensor::new(vec![spec.in_channels, s, s], data).unwrap());
        labels.push(label);
    }
    TensorSet { inputs, labels }
}
