//! The epoch loop: data-parallel gradients, Adam updates and per-epoch
//! evaluation.

use std::thread;

use cxr_core::arch::{Mode, Model};
use cxr_core::data::{batch_indices, epoch_order};
use cxr_core::metrics::{confusion, metrics, ConfusionMatrix};
use cxr_core::train::{
    balanced_loss_weights, batch_gradients, combine_shards, lr_at, shard_ranges, Adam, EpochRecord, Gradients, TrainConfig,
    TrainHistory,
};

use crate::checkpoint::Progress;
use crate::error::{Error, Result};
use crate::pipeline::{assemble, SampleSource};
use crate::timing::timed;

/// Optimizer moments and position of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub adam: Adam,
    pub progress: Progress,
}

impl TrainState {
    pub fn fresh(model: &Model<f32>) -> Self {
        Self { adam: Adam::for_params(model.params()), progress: Progress::default() }
    }
}

/// A run stopped by an error, with the epochs completed before it.
#[derive(Debug)]
pub struct Aborted {
    pub history: TrainHistory,
    pub error: Error,
}

impl From<Aborted> for Error {
    fn from(a: Aborted) -> Self {
        a.error
    }
}

pub type EpochHook<'a> = dyn FnMut(&Model<f32>, &TrainState, &EpochRecord) -> Result<()> + 'a;

/// Loss and gradients of the samples `indices`, sharded over `workers`
/// threads and combined with weights `n_s / N`.
pub fn parallel_gradients(
    model: &Model<f32>,
    data: &dyn SampleSource,
    indices: &[usize],
    epoch: usize,
    augment: bool,
    class_weights: Option<&[f64]>,
    workers: usize,
) -> Result<Gradients<f32>> {
    let shard = |range: std::ops::Range<usize>| -> Result<Gradients<f32>> {
        let (x, labels) = assemble(data, &indices[range], epoch, augment)?;
        Ok(batch_gradients(model, &x, &labels, class_weights, Mode::Train)?)
    };
    let ranges = shard_ranges(indices.len(), workers);
    if ranges.len() == 1 {
        return shard(ranges[0].clone());
    }
    let shards = thread::scope(|s| {
        let handles: Vec<_> = ranges.into_iter().map(|r| s.spawn(move || shard(r))).collect();
        handles.into_iter().map(|h| h.join().expect("gradient worker panicked")).collect::<Result<Vec<_>>>()
    })?;
    Ok(combine_shards(shards)?)
}

/// Eval-mode predictions for every sample of `source`, in order.
pub fn predict_all(model: &Model<f32>, source: &dyn SampleSource, batch_size: usize) -> Result<Vec<usize>> {
    let order: Vec<usize> = (0..source.len()).collect();
    let mut preds = Vec::with_capacity(order.len());
    for idx in batch_indices(&order, batch_size.max(1)) {
        let (x, _) = assemble(source, idx, 0, false)?;
        let logits = model.predict(&x)?;
        preds.extend(logits.data().chunks(2).map(|r| usize::from(r[1] > r[0])));
    }
    Ok(preds)
}

pub fn evaluate(model: &Model<f32>, source: &dyn SampleSource, batch_size: usize) -> Result<ConfusionMatrix> {
    let preds = predict_all(model, source, batch_size)?;
    Ok(confusion(&preds, &source.labels())?)
}

/// Trains `model` from `state.progress` to `cfg.epochs`, evaluating `eval`
/// after each epoch and calling `on_epoch` with the updated state.
///
/// Batchnorm models skip single-sample batches and never shard below two
/// samples per worker, since train-mode batch statistics need two samples.
pub fn train(
    model: &mut Model<f32>,
    data: &dyn SampleSource,
    eval: Option<&dyn SampleSource>,
    cfg: &TrainConfig,
    state: &mut TrainState,
    on_epoch: &mut EpochHook<'_>,
) -> Result<TrainHistory, Aborted> {
    let mut history = TrainHistory::default();
    macro_rules! tryh {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) => return Err(Aborted { history, error: e.into() }),
            }
        };
    }
    tryh!(cfg.validate());
    if data.is_empty() {
        tryh!(Err(Error::Core(cxr_core::Error::Data("training split is empty".into()))));
    }
    let n = data.len();
    let total = cfg.epochs * cfg.steps_per_epoch(n);
    let weights = cfg.balanced_loss.then(|| balanced_loss_weights(&data.labels()));
    let bn = model.has_batchnorm();
    while state.progress.epoch < cfg.epochs {
        let epoch = state.progress.epoch;
        let order = epoch_order(n, cfg.shuffle.then_some(cfg.seed), epoch);
        let mut step = state.progress.step;
        let run = |model: &mut Model<f32>, adam: &mut Adam, step: &mut usize| -> Result<f64> {
            let (mut loss_sum, mut seen) = (0.0, 0usize);
            for idx in batch_indices(&order, cfg.batch_size) {
                let s = *step;
                *step += 1;
                if bn && idx.len() < 2 {
                    continue;
                }
                let workers = if bn { cfg.workers.min(idx.len() / 2).max(1) } else { cfg.workers };
                let g = parallel_gradients(model, data, idx, epoch, cfg.augment, weights.as_ref().map(|w| &w[..]), workers)?;
                adam.update(model.params_mut(), &g.grads, lr_at(s, total, cfg)?, &cfg.adam)?;
                model.apply_bn_updates(g.bn_updates);
                loss_sum += g.loss * g.samples as f64;
                seen += g.samples;
            }
            Ok(if seen == 0 { f64::NAN } else { loss_sum / seen as f64 })
        };
        let (loss, seconds) = timed(|| run(model, &mut state.adam, &mut step));
        let train_loss = tryh!(loss);
        let eval_metrics = match eval {
            Some(e) if !e.is_empty() => Some(tryh!(evaluate(model, e, cfg.batch_size).and_then(|cm| Ok(metrics(&cm)?)))),
            _ => None,
        };
        state.progress = Progress { epoch: epoch + 1, step };
        let record = EpochRecord { epoch, train_loss, eval: eval_metrics, seconds };
        history.epochs.push(record.clone());
        tryh!(on_epoch(model, state, &record));
    }
    Ok(history)
}
