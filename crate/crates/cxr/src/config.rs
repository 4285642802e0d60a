//! The run configuration: one JSON document, every field defaulted.
//!
//! Values resolve as flags over file over defaults. Training defaults
//! depend on the architecture kind, so the file's `train` object is merged
//! field by field over [`TrainConfig::for_kind`].

use std::fs;
use std::path::{Path, PathBuf};

use cxr_core::arch::{ArchKind, ModelSpec, Preset};
use cxr_core::classical::{LogRegConfig, PcaTarget, SvcConfig};
use cxr_core::data::{AugmentConfig, Split, NORM_MEAN, NORM_STD, READ_SIDE};
use cxr_core::linalg::TsneConfig;
use cxr_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResplitConfig {
    /// Merge all splits and redraw a stratified test split.
    pub enabled: bool,
    pub test_count: usize,
    pub seed: u64,
}

impl Default for ResplitConfig {
    fn default() -> Self {
        Self { enabled: true, test_count: 600, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Side images are decoded and resized to.
    pub read_side: usize,
    pub mean: f32,
    pub std: f32,
    pub augment: AugmentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { read_side: READ_SIDE, mean: NORM_MEAN, std: NORM_STD, augment: AugmentConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalConfig {
    /// Side of the flattened feature images; 256 gives 65,536 features.
    pub side: usize,
    pub pca: PcaTarget,
    pub k: usize,
    pub kmeans_seed: u64,
    pub kmeans_max_iter: usize,
    pub tsne: TsneConfig,
    /// Training rows embedded by t-SNE, the first ones in manifest order.
    pub tsne_points: usize,
    pub logreg: LogRegConfig,
    pub svc: SvcConfig,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            side: READ_SIDE,
            pca: PcaTarget::Variance(0.98),
            k: 2,
            kmeans_seed: 0,
            kmeans_max_iter: 300,
            tsne: TsneConfig::default(),
            tsne_points: 1000,
            logreg: LogRegConfig::default(),
            svc: SvcConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Kaggle-layout dataset folder; image paths in manifests are relative
    /// to it.
    pub dataset_root: Option<PathBuf>,
    /// Manifest CSV to use instead of scanning `dataset_root`.
    pub manifest: Option<PathBuf>,
    pub resplit: ResplitConfig,
    pub pipeline: PipelineConfig,
    pub arch: ArchKind,
    pub preset: Preset,
    /// Explicit architecture, replacing the `arch`/`preset` preset.
    pub model: Option<ModelSpec>,
    pub train: TrainConfig,
    pub classical: ClassicalConfig,
    /// Split evaluated after training.
    pub eval_split: String,
    pub output_dir: PathBuf,
    /// Checkpoint to continue `train-dl` from.
    pub resume: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let arch = ArchKind::CrossVit;
        Self {
            dataset_root: None,
            manifest: None,
            resplit: ResplitConfig::default(),
            pipeline: PipelineConfig::default(),
            arch,
            preset: Preset::Paper,
            model: None,
            train: TrainConfig::for_kind(arch),
            classical: ClassicalConfig::default(),
            eval_split: Split::Test.as_str().into(),
            output_dir: PathBuf::from("runs"),
            resume: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub preset: Option<Preset>,
    pub arch: Option<ArchKind>,
    pub dataset_root: Option<PathBuf>,
    /// Used only when neither the flags nor the file name a root.
    pub default_dataset_root: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Core(cxr_core::Error::Config(msg.into()))
}

impl RunConfig {
    /// Resolves defaults, the optional JSON `file`, then `flags`.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let text = match file {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => "{}".into(),
        };
        Self::from_json(&text, flags)
    }

    pub fn from_json(text: &str, flags: &Overrides) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| config_err(format!("run config: {}", e)))?;
        let Some(obj) = doc.as_object_mut() else {
            return Err(config_err("run config must be a JSON object"));
        };
        let train_over = obj.remove("train");
        let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| config_err(format!("run config: {}", e)))?;
        if let Some(a) = flags.arch {
            cfg.arch = a;
            cfg.model = None;
        }
        if let Some(p) = flags.preset {
            cfg.preset = p;
            cfg.model = None;
        }
        let kind = cfg.model.as_ref().map_or(cfg.arch, ModelSpec::kind);
        let mut train = serde_json::to_value(TrainConfig::for_kind(kind))?;
        if let Some(t) = train_over {
            merge(&mut train, t);
        }
        cfg.train = serde_json::from_value(train).map_err(|e| config_err(format!("run config train: {}", e)))?;
        if let Some(seed) = flags.seed {
            cfg.set_seed(seed);
        }
        if let Some(w) = flags.workers {
            cfg.train.workers = w;
        }
        if let Some(o) = &flags.out {
            cfg.output_dir = o.clone();
        }
        if let Some(r) = &flags.dataset_root {
            cfg.dataset_root = Some(r.clone());
        } else if cfg.dataset_root.is_none() {
            cfg.dataset_root = flags.default_dataset_root.clone();
        }
        if let Some(m) = &flags.manifest {
            cfg.manifest = Some(m.clone());
        }
        if let Some(r) = &flags.resume {
            cfg.resume = Some(r.clone());
        }
        Ok(cfg)
    }

    /// Sets every seed of the run to `seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.resplit.seed = seed;
        self.train.seed = seed;
        self.classical.kmeans_seed = seed;
        self.classical.tsne.seed = seed;
    }

    pub fn model_spec(&self) -> ModelSpec {
        self.model.clone().unwrap_or_else(|| ModelSpec::preset(self.arch, self.preset))
    }

    pub fn eval_split(&self) -> Result<Split> {
        Ok(self.eval_split.parse()?)
    }

    /// Rejects any field outside its module's invariants, and referenced
    /// paths that do not exist.
    pub fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        if p.read_side == 0 || !(p.std > 0.0) || !p.mean.is_finite() {
            return Err(config_err(format!("pipeline needs read_side > 0 and std > 0, got {} and {}", p.read_side, p.std)));
        }
        p.augment.validate()?;
        let spec = self.model_spec();
        spec.validate()?;
        if spec.in_channels != 1 && spec.in_channels != 3 {
            return Err(config_err(format!("model in_channels must be 1 or 3, got {}", spec.in_channels)));
        }
        self.train.validate()?;
        if self.resplit.test_count == 0 {
            return Err(config_err("resplit.test_count must be positive"));
        }
        let c = &self.classical;
        if c.side == 0 {
            return Err(config_err("classical.side must be positive"));
        }
        match c.pca {
            PcaTarget::Variance(v) if !(v > 0.0 && v <= 1.0) => {
                return Err(config_err(format!("classical.pca variance target {} outside (0, 1]", v)))
            }
            PcaTarget::Components(0) => return Err(config_err("classical.pca needs at least one component")),
            _ => {}
        }
        if c.k < 2 {
            return Err(config_err(format!("classical.k = {} cannot separate two classes; need k >= 2", c.k)));
        }
        if c.kmeans_max_iter == 0 {
            return Err(config_err("classical.kmeans_max_iter must be positive"));
        }
        if !(c.tsne.perplexity > 0.0) || c.tsne.iterations == 0 || c.tsne_points < 5 {
            return Err(config_err("classical.tsne needs perplexity > 0, iterations > 0 and tsne_points >= 5"));
        }
        if !(c.logreg.l2 >= 0.0) || c.logreg.max_iter == 0 || !(c.logreg.tol > 0.0) {
            return Err(config_err("classical.logreg needs l2 >= 0, max_iter > 0 and tol > 0"));
        }
        if !(c.svc.c > 0.0) || !(c.svc.tol > 0.0) || c.svc.max_iter == 0 {
            return Err(config_err("classical.svc needs c > 0, tol > 0 and max_iter > 0"));
        }
        if let cxr_core::classical::Gamma::Value(g) = c.svc.gamma {
            if !(g > 0.0) {
                return Err(config_err(format!("classical.svc gamma {} must be positive", g)));
            }
        }
        self.eval_split()?;
        for (what, path) in [("dataset_root", &self.dataset_root), ("manifest", &self.manifest), ("resume", &self.resume)] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Layout(format!("{} {} does not exist", what, p.display())));
                }
            }
        }
        Ok(())
    }

    /// The effective configuration as pretty JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
