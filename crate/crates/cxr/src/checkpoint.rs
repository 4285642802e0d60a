//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CXRB"  u16 version
//! u32 config length, UTF-8 JSON config text
//! u32 tensor count, then per tensor:
//!     u16 name length, name, u8 dtype, u8 rank, rank × u64 dims, raw data
//! u32 CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use cxr_core::arch::{Model, ModelSpec};
use cxr_core::autograd::BatchNormStats;
use cxr_core::classical::{LogRegModel, PcaModel, SvcModel};
use cxr_core::linalg::{KMeansModel, Matrix};
use cxr_core::train::{Adam, TrainConfig};
use cxr_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CXRB";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U64(Vec<u64>),
}

impl TensorData {
    fn dtype(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::F64(_) => 1,
            TensorData::U64(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl NamedTensor {
    pub fn f32(name: impl Into<String>, shape: &[usize], data: Vec<f32>) -> Self {
        Self { name: name.into(), shape: shape.to_vec(), data: TensorData::F32(data) }
    }

    pub fn f64(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Self {
        Self { name: name.into(), shape: shape.to_vec(), data: TensorData::F64(data) }
    }

    pub fn u64(name: impl Into<String>, data: Vec<u64>) -> Self {
        Self { name: name.into(), shape: vec![data.len()], data: TensorData::U64(data) }
    }
}

/// A config text block plus an ordered tensor table.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub config: String,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&len_u32(self.config.len(), "config block")?.to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&len_u32(self.tensors.len(), "tensor count")?.to_le_bytes());
        for t in &self.tensors {
            let numel: usize = t.shape.iter().product();
            if numel != t.data.len() {
                return Err(Error::Schema(format!("tensor {} has shape {:?} but {} values", t.name, t.shape, t.data.len())));
            }
            let name_len = u16::try_from(t.name.len()).map_err(|_| Error::Schema(format!("tensor name too long: {}", t.name)))?;
            let rank = u8::try_from(t.shape.len()).map_err(|_| Error::Schema(format!("tensor {} has rank > 255", t.name)))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.data.dtype());
            out.push(rank);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &t.data {
                TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(format_err(0, "bad magic, expected \"CXRB\""));
        }
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(format_err(4, format!("unsupported version {}, expected {}", version, VERSION)));
        }
        let config_len = r.u32("config length")? as usize;
        let at = r.pos;
        let config = String::from_utf8(r.take(config_len, "config block")?.to_vec())
            .map_err(|e| format_err(at + e.utf8_error().valid_up_to(), "config block is not UTF-8"))?;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u16("tensor name length")? as usize;
            let at = r.pos;
            let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
                .map_err(|_| format_err(at, "tensor name is not UTF-8"))?;
            let dtype_at = r.pos;
            let dtype = r.take(1, "dtype")?[0];
            let rank = r.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            let mut numel = 1usize;
            for _ in 0..rank {
                let at = r.pos;
                let d = usize::try_from(r.u64("dimension")?).map_err(|_| format_err(at, "dimension overflows"))?;
                numel = numel.checked_mul(d).ok_or_else(|| format_err(at, "element count overflows"))?;
                shape.push(d);
            }
            let width = match dtype {
                0 => 4,
                1 | 2 => 8,
                _ => return Err(format_err(dtype_at, format!("unknown dtype {} for tensor {}", dtype, name))),
            };
            let at = r.pos;
            let nbytes = numel.checked_mul(width).ok_or_else(|| format_err(at, "tensor size overflows"))?;
            let raw = r.take(nbytes, "tensor data")?;
            let data = match dtype {
                0 => TensorData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
                1 => TensorData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                _ => TensorData::U64(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
            };
            tensors.push(NamedTensor { name, shape, data });
        }
        let body_end = r.pos;
        let stored = r.u32("checksum")?;
        if r.pos != bytes.len() {
            return Err(format_err(r.pos, format!("{} trailing bytes after checksum", bytes.len() - r.pos)));
        }
        let actual = crc32fast::hash(&bytes[..body_end]);
        if stored != actual {
            return Err(format_err(body_end, format!("checksum {:08x} does not match contents {:08x}", stored, actual)));
        }
        Ok(Self { config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    fn take(&mut self, name: &str) -> Result<NamedTensor> {
        let i = self
            .tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Schema(format!("checkpoint has no tensor {:?}", name)))?;
        Ok(self.tensors.remove(i))
    }

    fn take_f32(&mut self, name: &str) -> Result<(Vec<usize>, Vec<f32>)> {
        match self.take(name)? {
            NamedTensor { shape, data: TensorData::F32(v), .. } => Ok((shape, v)),
            _ => Err(Error::Schema(format!("tensor {:?} is not f32", name))),
        }
    }

    fn take_f64(&mut self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        match self.take(name)? {
            NamedTensor { shape, data: TensorData::F64(v), .. } => Ok((shape, v)),
            _ => Err(Error::Schema(format!("tensor {:?} is not f64", name))),
        }
    }

    fn take_u64(&mut self, name: &str) -> Result<Vec<u64>> {
        match self.take(name)? {
            NamedTensor { data: TensorData::U64(v), .. } => Ok(v),
            _ => Err(Error::Schema(format!("tensor {:?} is not u64", name))),
        }
    }

    fn take_matrix(&mut self, name: &str) -> Result<Matrix> {
        let (shape, data) = self.take_f64(name)?;
        match shape[..] {
            [r, c] => Ok(Matrix::new(r, c, data)?),
            _ => Err(Error::Schema(format!("tensor {:?} has shape {:?}, expected a matrix", name, shape))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.tensors.first() {
            None => Ok(()),
            Some(t) => Err(Error::Schema(format!("unexpected tensor {:?} in checkpoint", t.name))),
        }
    }
}

fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Schema(format!("{} of {} exceeds u32", what, n)))
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset, message: message.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(format_err(
                self.pos,
                format!("truncated: {} needs {} bytes, {} remain", what, n, self.bytes.len() - self.pos),
            ));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Where a training run stands: `epoch` completed epochs, `step` optimizer
/// steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub epoch: usize,
    pub step: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Header {
    Network { spec: ModelSpec, train: TrainConfig, progress: Progress, adam_step: Option<u64>, run: serde_json::Value },
    Clustering { pca: PcaHeader, k: usize, inertia: f64, iterations: usize, run: serde_json::Value },
    Logreg { pca: PcaHeader, l2: f64, converged: bool, run: serde_json::Value },
    Svc { pca: PcaHeader, c: f64, gamma: f64, iterations: usize, converged: bool, run: serde_json::Value },
}

#[derive(Serialize, Deserialize)]
struct PcaHeader {
    variance_retained: f64,
    n_samples: usize,
}

/// A network with its optimizer state, ready to resume.
///
/// Every random draw of a run derives from `train.seed` and the position
/// in the run, so `progress` is the whole generator state.
#[derive(Clone, Debug)]
pub struct NetworkCheckpoint {
    pub model: Model<f32>,
    pub train: TrainConfig,
    pub progress: Progress,
    pub adam: Option<Adam>,
    /// The run configuration that produced the checkpoint.
    pub run: serde_json::Value,
}

impl NetworkCheckpoint {
    pub fn to_container(&self) -> Result<Container> {
        let header = Header::Network {
            spec: self.model.spec().clone(),
            train: self.train.clone(),
            progress: self.progress,
            adam_step: self.adam.as_ref().map(|a| a.step),
            run: self.run.clone(),
        };
        let mut tensors = Vec::new();
        for (info, p) in self.model.param_info().iter().zip(self.model.params()) {
            tensors.push(NamedTensor::f32(format!("param/{}", info.name), p.shape(), p.data().to_vec()));
        }
        for (i, b) in self.model.buffers().iter().enumerate() {
            tensors.push(NamedTensor::f32(format!("bn/{}/mean", i), &[b.mean.len()], b.mean.clone()));
            tensors.push(NamedTensor::f32(format!("bn/{}/var", i), &[b.var.len()], b.var.clone()));
        }
        if let Some(adam) = &self.adam {
            for (i, (m, v)) in adam.m.iter().zip(&adam.v).enumerate() {
                tensors.push(NamedTensor::f64(format!("adam/{}/m", i), &[m.len()], m.clone()));
                tensors.push(NamedTensor::f64(format!("adam/{}/v", i), &[v.len()], v.clone()));
            }
        }
        Ok(Container { config: serde_json::to_string_pretty(&header)?, tensors })
    }

    pub fn from_container(mut c: Container) -> Result<Self> {
        let Header::Network { spec, train, progress, adam_step, run } = parse_header(&c.config)? else {
            return Err(Error::Schema("checkpoint does not hold a network".into()));
        };
        let names: Vec<String> = cxr_core::arch::plan(&spec)?.params.into_iter().map(|p| p.name).collect();
        let mut params = Vec::with_capacity(names.len());
        for name in &names {
            let (shape, data) = c.take_f32(&format!("param/{}", name))?;
            params.push(Tensor::new(shape, data)?);
        }
        let mut buffers = Vec::new();
        while c.tensors.iter().any(|t| t.name == format!("bn/{}/mean", buffers.len())) {
            let i = buffers.len();
            let (_, mean) = c.take_f32(&format!("bn/{}/mean", i))?;
            let (_, var) = c.take_f32(&format!("bn/{}/var", i))?;
            buffers.push(BatchNormStats { mean, var });
        }
        let model = Model::from_parts(&spec, params, buffers)?;
        let adam = match adam_step {
            None => None,
            Some(step) => {
                let (mut m, mut v) = (Vec::new(), Vec::new());
                for i in 0..names.len() {
                    m.push(c.take_f64(&format!("adam/{}/m", i))?.1);
                    v.push(c.take_f64(&format!("adam/{}/v", i))?.1);
                }
                Some(Adam { step, m, v })
            }
        };
        c.finish()?;
        Ok(Self { model, train, progress, adam, run })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(Container::load(path)?)
    }
}

/// A fitted classical pipeline: PCA features plus a classifier.
#[derive(Clone, Debug)]
pub enum ClassicalModel {
    /// k-means centroids with the cluster → class map.
    Clustering { pca: PcaModel, kmeans: KMeansModel, label_map: Vec<usize> },
    Logreg { pca: PcaModel, model: LogRegModel },
    Svc { pca: PcaModel, model: SvcModel },
}

#[derive(Clone, Debug)]
pub struct ClassicalCheckpoint {
    pub model: ClassicalModel,
    pub run: serde_json::Value,
}

fn pca_tensors(pca: &PcaModel, out: &mut Vec<NamedTensor>) -> PcaHeader {
    out.push(NamedTensor::f64("pca/mean", &[pca.mean.len()], pca.mean.clone()));
    let comp = &pca.components;
    out.push(NamedTensor::f64("pca/components", &[comp.rows(), comp.cols()], comp.data().to_vec()));
    out.push(NamedTensor::f64("pca/singular_values", &[pca.singular_values.len()], pca.singular_values.clone()));
    PcaHeader { variance_retained: pca.variance_retained, n_samples: pca.n_samples }
}

fn take_pca(c: &mut Container, h: PcaHeader) -> Result<PcaModel> {
    Ok(PcaModel {
        mean: c.take_f64("pca/mean")?.1,
        components: c.take_matrix("pca/components")?,
        singular_values: c.take_f64("pca/singular_values")?.1,
        variance_retained: h.variance_retained,
        n_samples: h.n_samples,
    })
}

fn to_u64(v: &[usize]) -> Vec<u64> {
    v.iter().map(|&x| x as u64).collect()
}

fn to_usize(v: Vec<u64>) -> Result<Vec<usize>> {
    v.into_iter().map(|x| usize::try_from(x).map_err(|_| Error::Schema(format!("index {} overflows", x)))).collect()
}

impl ClassicalCheckpoint {
    pub fn to_container(&self) -> Result<Container> {
        let mut t = Vec::new();
        let run = self.run.clone();
        let header = match &self.model {
            ClassicalModel::Clustering { pca, kmeans, label_map } => {
                let pca = pca_tensors(pca, &mut t);
                let c = &kmeans.centroids;
                t.push(NamedTensor::f64("kmeans/centroids", &[c.rows(), c.cols()], c.data().to_vec()));
                t.push(NamedTensor::u64("kmeans/assignments", to_u64(&kmeans.assignments)));
                t.push(NamedTensor::f64("kmeans/history", &[kmeans.history.len()], kmeans.history.clone()));
                t.push(NamedTensor::u64("kmeans/label_map", to_u64(label_map)));
                Header::Clustering { pca, k: kmeans.k, inertia: kmeans.inertia, iterations: kmeans.iterations, run }
            }
            ClassicalModel::Logreg { pca, model } => {
                let pca = pca_tensors(pca, &mut t);
                t.push(NamedTensor::f64("logreg/weights", &[model.weights.len()], model.weights.clone()));
                t.push(NamedTensor::f64("logreg/bias", &[1], vec![model.bias]));
                t.push(NamedTensor::f64("logreg/class_weights", &[2], model.class_weights.to_vec()));
                t.push(NamedTensor::f64("logreg/loss_history", &[model.loss_history.len()], model.loss_history.clone()));
                Header::Logreg { pca, l2: model.l2, converged: model.converged, run }
            }
            ClassicalModel::Svc { pca, model } => {
                let pca = pca_tensors(pca, &mut t);
                let sv = &model.support_vectors;
                t.push(NamedTensor::f64("svc/support_vectors", &[sv.rows(), sv.cols()], sv.data().to_vec()));
                t.push(NamedTensor::f64("svc/dual_coeffs", &[model.dual_coeffs.len()], model.dual_coeffs.clone()));
                t.push(NamedTensor::u64("svc/support_indices", to_u64(&model.support_indices)));
                t.push(NamedTensor::f64("svc/bias", &[1], vec![model.bias]));
                t.push(NamedTensor::f64("svc/class_c", &[2], model.class_c.to_vec()));
                Header::Svc { pca, c: model.c, gamma: model.gamma, iterations: model.iterations, converged: model.converged, run }
            }
        };
        Ok(Container { config: serde_json::to_string_pretty(&header)?, tensors: t })
    }

    pub fn from_container(mut c: Container) -> Result<Self> {
        let pair = |v: Vec<f64>, name: &str| -> Result<[f64; 2]> {
            v.try_into().map_err(|_| Error::Schema(format!("{} must hold two values", name)))
        };
        let scalar = |v: Vec<f64>, name: &str| -> Result<f64> {
            match v[..] {
                [x] => Ok(x),
                _ => Err(Error::Schema(format!("{} must hold one value", name))),
            }
        };
        let (model, run) = match parse_header(&c.config)? {
            Header::Network { .. } => return Err(Error::Schema("checkpoint holds a network, not a classical model".into())),
            Header::Clustering { pca, k, inertia, iterations, run } => {
                let pca = take_pca(&mut c, pca)?;
                let kmeans = KMeansModel {
                    k,
                    centroids: c.take_matrix("kmeans/centroids")?,
                    inertia,
                    assignments: to_usize(c.take_u64("kmeans/assignments")?)?,
                    history: c.take_f64("kmeans/history")?.1,
                    iterations,
                };
                let label_map = to_usize(c.take_u64("kmeans/label_map")?)?;
                (ClassicalModel::Clustering { pca, kmeans, label_map }, run)
            }
            Header::Logreg { pca, l2, converged, run } => {
                let pca = take_pca(&mut c, pca)?;
                let model = LogRegModel {
                    weights: c.take_f64("logreg/weights")?.1,
                    bias: scalar(c.take_f64("logreg/bias")?.1, "logreg/bias")?,
                    l2,
                    class_weights: pair(c.take_f64("logreg/class_weights")?.1, "logreg/class_weights")?,
                    loss_history: c.take_f64("logreg/loss_history")?.1,
                    converged,
                };
                (ClassicalModel::Logreg { pca, model }, run)
            }
            Header::Svc { pca, c: cost, gamma, iterations, converged, run } => {
                let pca = take_pca(&mut c, pca)?;
                let model = SvcModel {
                    support_vectors: c.take_matrix("svc/support_vectors")?,
                    dual_coeffs: c.take_f64("svc/dual_coeffs")?.1,
                    support_indices: to_usize(c.take_u64("svc/support_indices")?)?,
                    bias: scalar(c.take_f64("svc/bias")?.1, "svc/bias")?,
                    c: cost,
                    gamma,
                    class_c: pair(c.take_f64("svc/class_c")?.1, "svc/class_c")?,
                    iterations,
                    converged,
                };
                (ClassicalModel::Svc { pca, model }, run)
            }
        };
        c.finish()?;
        Ok(Self { model, run })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(Container::load(path)?)
    }
}

fn parse_header(text: &str) -> Result<Header> {
    serde_json::from_str(text).map_err(|e| Error::Schema(format!("checkpoint config block: {}", e)))
}
