//! Network inputs: per-sample preprocessing and batch assembly.

use cxr_core::data::{augment, batch_indices, epoch_order, finalize_for_dl, sample_seed, AugmentConfig, GrayImage};
use cxr_core::Tensor;

use crate::error::Result;

/// Indexed training or evaluation samples.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, i: usize) -> usize;

    /// Network input `C × H × W` of sample `i`, augmented for `epoch` when
    /// `augment` is set.
    fn input(&self, i: usize, epoch: usize, augment: bool) -> Result<Tensor<f32>>;

    fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }
}

/// Constants applied between a decoded grayscale image and the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocess {
    pub side: usize,
    pub mean: f32,
    pub std: f32,
    pub channels: usize,
    pub augment: Option<AugmentConfig>,
    pub seed: u64,
}

/// Decoded images with their labels.
#[derive(Clone, Debug)]
pub struct ImageSet {
    pub images: Vec<GrayImage>,
    pub labels: Vec<usize>,
    pub prep: Preprocess,
}

impl SampleSource for ImageSet {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn input(&self, i: usize, epoch: usize, aug: bool) -> Result<Tensor<f32>> {
        let p = &self.prep;
        let img = match (&p.augment, aug) {
            (Some(cfg), true) => augment(&self.images[i], cfg, sample_seed(p.seed, epoch, i)),
            _ => self.images[i].clone(),
        };
        Ok(finalize_for_dl(&img, p.side, p.mean, p.std, p.channels)?)
    }
}

/// Ready-made input tensors, never augmented.
#[derive(Clone, Debug)]
pub struct TensorSet {
    pub inputs: Vec<Tensor<f32>>,
    pub labels: Vec<usize>,
}

impl SampleSource for TensorSet {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn input(&self, i: usize, _epoch: usize, _augment: bool) -> Result<Tensor<f32>> {
        Ok(self.inputs[i].clone())
    }
}

/// Stacks the inputs of `indices` into `B × C × H × W` with their labels.
pub fn assemble(source: &dyn SampleSource, indices: &[usize], epoch: usize, augment: bool) -> Result<(Tensor<f32>, Vec<usize>)> {
    let inputs = indices.iter().map(|&i| source.input(i, epoch, augment)).collect::<Result<Vec<_>>>()?;
    let labels = indices.iter().map(|&i| source.label(i)).collect();
    Ok((Tensor::stack(&inputs)?, labels))
}

/// One epoch of batches: seeded shuffle when `shuffle_seed` is set, last
/// batch possibly short, empty source → no batches.
pub fn batches<'a>(
    source: &'a dyn SampleSource,
    batch_size: usize,
    shuffle_seed: Option<u64>,
    epoch: usize,
    augment: bool,
) -> impl Iterator<Item = Result<(Tensor<f32>, Vec<usize>)>> + 'a {
    let order = epoch_order(source.len(), shuffle_seed, epoch);
    let groups: Vec<Vec<usize>> = batch_indices(&order, batch_size).map(<[usize]>::to_vec).collect();
    groups.into_iter().map(move |idx| assemble(source, &idx, epoch, augment))
}
