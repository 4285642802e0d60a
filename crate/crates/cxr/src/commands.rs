//! The `ingest`, `cluster`, `train-ml`, `train-dl` and `report` commands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cxr_core::arch::Model;
use cxr_core::classical::{
    logreg_fit, logreg_predict, majority_label_map, pca_fit, pca_transform, svc_fit, svc_predict, PcaModel,
};
use cxr_core::data::{stratified_resplit, Manifest, Record, Split};
use cxr_core::linalg::{kmeans, nearest_centroid_classify, tsne_embed, Matrix};
use cxr_core::metrics::confusion;
use cxr_core::train::{EpochRecord, TrainHistory};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{ClassicalCheckpoint, ClassicalModel, NetworkCheckpoint};
use crate::config::RunConfig;
use crate::dataset::{load_images, load_manifest, save_manifest, scan_dataset};
use crate::error::{Error, Result};
use crate::pipeline::{ImageSet, Preprocess};
use crate::plot::{emit_confusion_plot, emit_scatter_plot, write};
use crate::report::{emit_report, parse_csv, parse_json, EvalReport, ReportFormat};
use crate::timing::timed;
use crate::trainer::{evaluate, train, Aborted, TrainState};

/// Scans `root` and writes its manifest to `out`.
pub fn cmd_ingest(root: &Path, out: &Path) -> Result<Manifest> {
    let manifest = scan_dataset(root)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_manifest(&manifest, out)?;
    Ok(manifest)
}

/// The manifest of a run (after the optional stratified resplit) and the
/// folder its paths are relative to.
pub fn run_manifest(cfg: &RunConfig) -> Result<(Manifest, PathBuf)> {
    let (manifest, root) = match (&cfg.manifest, &cfg.dataset_root) {
        (Some(m), root) => {
            let root = root.clone().unwrap_or_else(|| m.parent().map(Path::to_path_buf).unwrap_or_default());
            (load_manifest(m)?, root)
        }
        (None, Some(root)) => (scan_dataset(root)?, root.clone()),
        (None, None) => {
            return Err(Error::Layout("no dataset: set dataset_root or manifest, or CXR_DATASET_ROOT".into()));
        }
    };
    let manifest =
        if cfg.resplit.enabled { stratified_resplit(&manifest, cfg.resplit.test_count, cfg.resplit.seed)? } else { manifest };
    Ok((manifest, root))
}

fn split_parts(manifest: &Manifest, split: Split) -> (Vec<&str>, Vec<usize>) {
    let recs: Vec<&Record> = manifest.split(split);
    (recs.iter().map(|r| r.path.as_str()).collect(), recs.iter().map(|r| r.label.index()).collect())
}

/// Flattened grayscale images of one split, one row per image.
fn feature_matrix(cfg: &RunConfig, manifest: &Manifest, root: &Path, split: Split) -> Result<(Matrix, Vec<usize>)> {
    let (paths, labels) = split_parts(manifest, split);
    let side = cfg.classical.side;
    let images = load_images(root, &paths, side, cfg.train.workers)?;
    let mut data = Vec::with_capacity(images.len() * side * side);
    for img in &images {
        data.extend(img.pixels().iter().map(|&p| f64::from(p)));
    }
    Ok((Matrix::new(images.len(), side * side, data)?, labels))
}

fn prepare_dir(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    let dir = cfg.output_dir.join(name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join("config.json"), &(cfg.to_json()? + "\n"))?;
    Ok(dir)
}

fn save_report(dir: &Path, report: &EvalReport) -> Result<()> {
    let path = dir.join("report.json");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    emit_report(std::slice::from_ref(report), ReportFormat::Json, &mut f)
}

fn run_json(cfg: &RunConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

/// Artifacts of a finished command.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: EvalReport,
    pub dir: PathBuf,
}

/// PCA on the training images, k-means on the components, majority-label
/// cluster classes, nearest-centroid test predictions and a t-SNE view.
pub fn cmd_cluster(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let (manifest, root) = run_manifest(cfg)?;
    let c = &cfg.classical;
    let (x, y) = feature_matrix(cfg, &manifest, &root, Split::Train)?;
    let (xt, yt) = feature_matrix(cfg, &manifest, &root, cfg.eval_split()?)?;
    let (fit, train_time) = timed(|| -> Result<_> {
        let pca = pca_fit(&x, c.pca)?;
        let z = pca_transform(&pca, &x)?;
        let km = kmeans(&z, c.k, c.kmeans_seed, c.kmeans_max_iter)?;
        let label_map = majority_label_map(&km.assignments, &y, c.k)?;
        Ok((pca, z, km, label_map))
    });
    let (pca, z, km, label_map) = fit?;
    let (preds, test_time) = timed(|| -> Result<Vec<usize>> {
        let zt = pca_transform(&pca, &xt)?;
        (0..zt.rows()).map(|i| Ok(nearest_centroid_classify(zt.row(i), &km, &label_map)?)).collect()
    });
    let cm = confusion(&preds?, &yt)?;
    let report = EvalReport::from_confusion("PCA + Clustering", cm, train_time, test_time)?;
    let dir = prepare_dir(cfg, "cluster")?;
    save_report(&dir, &report)?;
    emit_confusion_plot(&cm, "PCA + Clustering", &dir, "confusion")?;
    let n = c.tsne_points.min(z.rows());
    if n >= 5 {
        let idx: Vec<usize> = (0..n).collect();
        let mut tsne = c.tsne;
        tsne.perplexity = tsne.perplexity.min((n - 1) as f64 / 3.0);
        let emb = tsne_embed(&z.select_rows(&idx), &tsne)?;
        emit_scatter_plot(&emb.embedding, &y[..n], "t-SNE of principal components", &dir, "tsne")?;
    }
    let ckpt = ClassicalCheckpoint { model: ClassicalModel::Clustering { pca, kmeans: km, label_map }, run: run_json(cfg)? };
    ckpt.save(&dir.join("model.cxrb"))?;
    Ok(Outcome { report, dir })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MlModel {
    Logreg,
    Svc,
}

impl MlModel {
    pub fn name(self) -> &'static str {
        match self {
            MlModel::Logreg => "logreg",
            MlModel::Svc => "svc",
        }
    }

    fn title(self) -> &'static str {
        match self {
            MlModel::Logreg => "Logistic Regression",
            MlModel::Svc => "SVC",
        }
    }
}

/// PCA features from the training split, then logistic regression or SVC.
pub fn cmd_train_ml(cfg: &RunConfig, which: MlModel) -> Result<Outcome> {
    cfg.validate()?;
    let (manifest, root) = run_manifest(cfg)?;
    let c = &cfg.classical;
    let (x, y) = feature_matrix(cfg, &manifest, &root, Split::Train)?;
    let (xt, yt) = feature_matrix(cfg, &manifest, &root, cfg.eval_split()?)?;
    let (fit, train_time) = timed(|| -> Result<(PcaModel, ClassicalModel)> {
        let pca = pca_fit(&x, c.pca)?;
        let z = pca_transform(&pca, &x)?;
        let model = match which {
            MlModel::Logreg => ClassicalModel::Logreg { pca: pca.clone(), model: logreg_fit(&z, &y, &c.logreg)? },
            MlModel::Svc => ClassicalModel::Svc { pca: pca.clone(), model: svc_fit(&z, &y, &c.svc)? },
        };
        Ok((pca, model))
    });
    let (pca, model) = fit?;
    let (preds, test_time) = timed(|| -> Result<Vec<usize>> {
        let zt = pca_transform(&pca, &xt)?;
        (0..zt.rows())
            .map(|i| match &model {
                ClassicalModel::Logreg { model, .. } => Ok(logreg_predict(model, zt.row(i))?),
                ClassicalModel::Svc { model, .. } => Ok(svc_predict(model, zt.row(i))?),
                ClassicalModel::Clustering { .. } => unreachable!("train-ml fits logreg or svc"),
            })
            .collect()
    });
    let cm = confusion(&preds?, &yt)?;
    let report = EvalReport::from_confusion(which.title(), cm, train_time, test_time)?;
    let dir = prepare_dir(cfg, which.name())?;
    save_report(&dir, &report)?;
    emit_confusion_plot(&cm, which.title(), &dir, "confusion")?;
    ClassicalCheckpoint { model, run: run_json(cfg)? }.save(&dir.join("model.cxrb"))?;
    Ok(Outcome { report, dir })
}

/// One line of `history.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub seconds: f64,
}

impl From<&EpochRecord> for HistoryRow {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            train_loss: Some(r.train_loss).filter(|v| v.is_finite()),
            accuracy: r.eval.map(|m| m.accuracy),
            precision: r.eval.and_then(|m| m.precision.value()),
            recall: r.eval.and_then(|m| m.recall.value()),
            seconds: r.seconds,
        }
    }
}

fn save_history(dir: &Path, rows: &[HistoryRow]) -> Result<()> {
    write(&dir.join("history.json"), &(serde_json::to_string_pretty(rows)? + "\n"))
}

fn image_set(cfg: &RunConfig, manifest: &Manifest, root: &Path, split: Split, augment: bool) -> Result<ImageSet> {
    let spec = cfg.model_spec();
    let (paths, labels) = split_parts(manifest, split);
    let images = load_images(root, &paths, cfg.pipeline.read_side, cfg.train.workers)?;
    let prep = Preprocess {
        side: spec.image_side,
        mean: cfg.pipeline.mean,
        std: cfg.pipeline.std,
        channels: spec.in_channels,
        augment: augment.then_some(cfg.pipeline.augment),
        seed: cfg.train.seed,
    };
    Ok(ImageSet { images, labels, prep })
}

/// Trains a network, checkpointing after every epoch; a divergence leaves
/// the history so far in `history.json`.
pub fn cmd_train_dl(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let spec = cfg.model_spec();
    let (manifest, root) = run_manifest(cfg)?;
    let data = image_set(cfg, &manifest, &root, Split::Train, cfg.train.augment)?;
    let eval = image_set(cfg, &manifest, &root, cfg.eval_split()?, false)?;
    let (mut model, mut state, mut rows) = match &cfg.resume {
        Some(path) => {
            let ck = NetworkCheckpoint::load(path)?;
            if ck.model.spec() != &spec {
                return Err(Error::Schema(format!("checkpoint {} holds a different architecture", path.display())));
            }
            let adam = ck.adam.unwrap_or_else(|| cxr_core::train::Adam::for_params(ck.model.params()));
            let rows = path
                .parent()
                .map(|d| d.join("history.json"))
                .and_then(|p| fs::read_to_string(p).ok())
                .and_then(|t| serde_json::from_str::<Vec<HistoryRow>>(&t).ok())
                .map(|mut r| {
                    r.truncate(ck.progress.epoch);
                    r
                })
                .unwrap_or_default();
            (ck.model, TrainState { adam, progress: ck.progress }, rows)
        }
        None => {
            let model = Model::<f32>::build(&spec, cfg.train.seed)?;
            let state = TrainState::fresh(&model);
            (model, state, Vec::new())
        }
    };
    let dir = prepare_dir(cfg, spec.kind().name())?;
    let run = run_json(cfg)?;
    save_history(&dir, &rows)?;
    let mut on_epoch = |m: &Model<f32>, s: &TrainState, r: &EpochRecord| -> Result<()> {
        rows.push(r.into());
        save_history(&dir, &rows)?;
        NetworkCheckpoint { model: m.clone(), train: cfg.train.clone(), progress: s.progress, adam: Some(s.adam.clone()), run: run.clone() }
            .save(&dir.join("checkpoint.cxrb"))
    };
    let history: TrainHistory = match train(&mut model, &data, Some(&eval), &cfg.train, &mut state, &mut on_epoch) {
        Ok(h) => h,
        Err(Aborted { error, .. }) => return Err(error),
    };
    let train_time: f64 = history.total_seconds();
    let (cm, test_time) = timed(|| evaluate(&model, &eval, cfg.train.batch_size));
    let cm = cm?;
    let mut report = EvalReport::from_confusion(spec.kind().name(), cm, train_time, test_time)?;
    report.epochs = Some(cfg.train.epochs);
    report.param_count = Some(model.count_params());
    save_report(&dir, &report)?;
    emit_confusion_plot(&cm, spec.kind().name(), &dir, "confusion")?;
    Ok(Outcome { report, dir })
}

/// Reads reports from JSON files (or `.csv` files) in order.
pub fn read_reports(inputs: &[PathBuf]) -> Result<Vec<EvalReport>> {
    let mut all = Vec::new();
    for p in inputs {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let is_csv = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let parsed = if is_csv { parse_csv(&text) } else { parse_json(&text) };
        all.extend(parsed.map_err(|e| Error::Schema(format!("{}: {}", p.display(), e)))?);
    }
    Ok(all)
}

/// Merges saved reports into one table, JSON array or CSV.
pub fn cmd_report(inputs: &[PathBuf], format: ReportFormat, out: &mut dyn Write) -> Result<Vec<EvalReport>> {
    let reports = read_reports(inputs)?;
    emit_report(&reports, format, out)?;
    Ok(reports)
}
