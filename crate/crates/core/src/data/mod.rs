//! Dataset records, resplitting, image preprocessing and batch ordering.

mod image;
mod manifest;

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::rng;

pub use image::{apply_draws, augment, finalize_for_dl, rgb_to_gray, AugmentConfig, AugmentDraws, GrayImage};
pub use manifest::{stratified_quota, stratified_resplit, Label, Manifest, Record, Split};

/// Side images are decoded to.
pub const READ_SIDE: usize = 256;
/// Network input side.
pub const DL_SIDE: usize = 224;
pub const NORM_MEAN: f32 = 0.48;
pub const NORM_STD: f32 = 0.22;

/// Sample order for one epoch: a seeded shuffle, or `0..n` unshuffled.
pub fn epoch_order(n: usize, seed: Option<u64>, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    if let Some(seed) = seed {
        idx.shuffle(&mut rng::stream(seed, &[0x6570_6f63, epoch as u64]));
    }
    idx
}

/// Consecutive batches of `order`; the last may be short.
pub fn batch_indices(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    assert!(batch_size > 0, "batch size must be positive");
    order.chunks(batch_size)
}

/// Augmentation seed of one sample in one epoch.
pub fn sample_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    rng::derive(seed, &[0x6175_6773, epoch as u64, index as u64])
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use super::*;

    #[test]
    fn batch_sizes() {
        let order = epoch_order(10, Some(3), 0);
        let sizes: Vec<usize> = batch_indices(&order, 4).map(<[usize]>::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert!(batch_indices(&epoch_order(0, None, 0), 4).next().is_none());
    }

    #[test]
    fn order_is_deterministic_permutation() {
        let a = epoch_order(50, Some(9), 2);
        assert_eq!(a, epoch_order(50, Some(9), 2));
        assert_ne!(a, epoch_order(50, Some(9), 3));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
