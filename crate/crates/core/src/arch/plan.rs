use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::spec::{Arch, CctSpec, CrossVitSpec, DenseNetSpec, DenseStem, LenetSpec, ModelSpec, VitSpec};
use crate::error::Result;

/// Initialization law of one parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform(±√(6/(fan_in+fan_out))).
    XavierUniform { fan_in: usize, fan_out: usize },
    /// Normal(0, √(2/fan_in)).
    KaimingNormal { fan_in: usize },
    Normal { std: f64 },
    Zeros,
    Ones,
    /// Square identity matrix.
    Identity,
}

pub const EMBED_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamInfo {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LinearP {
    pub w: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NormP {
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BnP {
    pub gamma: usize,
    pub beta: usize,
    pub stats: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AttnP {
    pub q: LinearP,
    pub k: LinearP,
    pub v: LinearP,
    pub o: LinearP,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ReAttnP {
    pub theta: usize,
    pub norm: NormP,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BlockP {
    pub ln1: NormP,
    pub attn: AttnP,
    pub re: Option<ReAttnP>,
    pub ln2: NormP,
    pub fc1: LinearP,
    pub fc2: LinearP,
}

#[derive(Clone, Debug)]
pub(crate) struct DenseLayerP {
    pub bn1: BnP,
    pub conv1: usize,
    pub bn2: BnP,
    pub conv2: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct TransitionP {
    pub bn: BnP,
    pub conv: usize,
}

/// Cross-attention fusion of one branch's class token with the other
/// branch's patch tokens.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FuseP {
    pub proj_ln: NormP,
    pub proj: LinearP,
    pub attn_ln: NormP,
    pub attn: AttnP,
    pub back_ln: NormP,
    pub back: LinearP,
}

#[derive(Clone, Debug)]
pub(crate) struct BranchP {
    pub side: usize,
    pub patch: usize,
    pub embed: LinearP,
    pub cls: usize,
    pub pos: usize,
    pub norm: NormP,
    pub head: LinearP,
}

#[derive(Clone, Debug)]
pub(crate) struct CrossLayerP {
    pub large: Vec<BlockP>,
    pub small: Vec<BlockP>,
    /// `[large cls → small patches, small cls → large patches]`.
    pub fuse: [FuseP; 2],
}

#[derive(Clone, Debug)]
pub(crate) enum Net {
    Lenet { stages: Vec<(usize, BnP)>, fcs: [LinearP; 3] },
    Dense { stem: usize, stem_bn: BnP, wide: bool, blocks: Vec<Vec<DenseLayerP>>, transitions: Vec<TransitionP>, norm: BnP, head: LinearP },
    Vit { heads: usize, patch: usize, embed: LinearP, cls: usize, pos: Option<usize>, blocks: Vec<BlockP>, norm: NormP, head: LinearP },
    Cct { heads: usize, convs: Vec<usize>, pos: Option<usize>, blocks: Vec<BlockP>, norm: NormP, pool: LinearP, head: LinearP },
    Cross { heads: usize, branches: [BranchP; 2], layers: Vec<CrossLayerP> },
}

/// Parameter table, batchnorm channel counts and wiring of a model.
#[derive(Clone, Debug)]
pub struct Plan {
    pub params: Vec<ParamInfo>,
    /// Channel count of each batchnorm layer, in layer order.
    pub batchnorms: Vec<usize>,
    pub(crate) net: Net,
}

impl Plan {
    pub fn count_params(&self) -> usize {
        self.params.iter().map(ParamInfo::numel).sum()
    }
}

#[derive(Default)]
struct Planner {
    params: Vec<ParamInfo>,
    batchnorms: Vec<usize>,
}

impl Planner {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.params.push(ParamInfo { name, shape, init });
        self.params.len() - 1
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize) -> LinearP {
        let w = self.add(format!("{name}.weight"), vec![din, dout], Init::XavierUniform { fan_in: din, fan_out: dout });
        let b = self.add(format!("{name}.bias"), vec![dout], Init::Zeros);
        LinearP { w, b }
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> usize {
        self.add(format!("{name}.weight"), vec![cout, cin, k, k], Init::KaimingNormal { fan_in: cin * k * k })
    }

    fn norm(&mut self, name: &str, d: usize) -> NormP {
        let gamma = self.add(format!("{name}.gamma"), vec![d], Init::Ones);
        let beta = self.add(format!("{name}.beta"), vec![d], Init::Zeros);
        NormP { gamma, beta }
    }

    fn bn(&mut self, name: &str, c: usize) -> BnP {
        let NormP { gamma, beta } = self.norm(name, c);
        self.batchnorms.push(c);
        BnP { gamma, beta, stats: self.batchnorms.len() - 1 }
    }

    fn attn(&mut self, name: &str, d: usize) -> AttnP {
        AttnP {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.out"), d, d),
        }
    }

    fn block(&mut self, name: &str, d: usize, heads: usize, mlp: usize, reattention: bool) -> BlockP {
        let ln1 = self.norm(&format!("{name}.ln1"), d);
        let attn = self.attn(&format!("{name}.attn"), d);
        let re = reattention.then(|| ReAttnP {
            theta: self.add(format!("{name}.reattn.theta"), vec![heads, heads], Init::Identity),
            norm: self.norm(&format!("{name}.reattn.norm"), heads),
        });
        let ln2 = self.norm(&format!("{name}.ln2"), d);
        let fc1 = self.linear(&format!("{name}.mlp.fc1"), d, mlp);
        let fc2 = self.linear(&format!("{name}.mlp.fc2"), mlp, d);
        BlockP { ln1, attn, re, ln2, fc1, fc2 }
    }

    fn embedding(&mut self, name: String, shape: Vec<usize>) -> usize {
        self.add(name, shape, Init::Normal { std: EMBED_STD })
    }
}

/// Lays out every parameter of `spec` without allocating tensors.
pub fn plan(spec: &ModelSpec) -> Result<Plan> {
    spec.validate()?;
    let mut p = Planner::default();
    let c = spec.in_channels;
    let side = spec.image_side;
    let net = match &spec.arch {
        Arch::LenetMod(s) => lenet(&mut p, s, c, side),
        Arch::Densenet(s) => densenet(&mut p, s, c),
        Arch::DeepVit(s) => vit(&mut p, s, c, side),
        Arch::Cct(s) => cct(&mut p, s, c, side),
        Arch::CrossVit(s) => cross_vit(&mut p, s, c),
    };
    Ok(Plan { params: p.params, batchnorms: p.batchnorms, net })
}

fn lenet(p: &mut Planner, s: &LenetSpec, c: usize, side: usize) -> Net {
    let mut cin = c;
    let mut stages = Vec::new();
    for (i, &cout) in s.conv_channels.iter().enumerate() {
        let conv = p.conv(&format!("features.{i}.conv"), cin, cout, 3);
        let bn = p.bn(&format!("features.{i}.bn"), cout);
        stages.push((conv, bn));
        cin = cout;
    }
    let flat = cin * (side >> 4) * (side >> 4);
    let fcs = [
        p.linear("fc1", flat, s.fc_hidden[0]),
        p.linear("fc2", s.fc_hidden[0], s.fc_hidden[1]),
        p.linear("fc3", s.fc_hidden[1], 2),
    ];
    Net::Lenet { stages, fcs }
}

fn densenet(p: &mut Planner, s: &DenseNetSpec, c: usize) -> Net {
    let (k, wide) = match s.stem {
        DenseStem::Wide => (7, true),
        DenseStem::Compact => (3, false),
    };
    let stem = p.conv("stem.conv", c, s.init_features, k);
    let stem_bn = p.bn("stem.bn", s.init_features);
    let mut ch = s.init_features;
    let mut blocks = Vec::new();
    let mut transitions = Vec::new();
    let bottleneck = s.bn_size * s.growth_rate;
    for (bi, &layers) in s.block_layers.iter().enumerate() {
        let mut block = Vec::new();
        for li in 0..layers {
            let name = format!("block{bi}.layer{li}");
            block.push(DenseLayerP {
                bn1: p.bn(&format!("{name}.bn1"), ch),
                conv1: p.conv(&format!("{name}.conv1"), ch, bottleneck, 1),
                bn2: p.bn(&format!("{name}.bn2"), bottleneck),
                conv2: p.conv(&format!("{name}.conv2"), bottleneck, s.growth_rate, 3),
            });
            ch += s.growth_rate;
        }
        blocks.push(block);
        if bi + 1 < s.block_layers.len() {
            let out = ((ch as f64 * s.compression) as usize).max(1);
            transitions.push(TransitionP {
                bn: p.bn(&format!("transition{bi}.bn"), ch),
                conv: p.conv(&format!("transition{bi}.conv"), ch, out, 1),
            });
            ch = out;
        }
    }
    let norm = p.bn("norm", ch);
    let head = p.linear("head", ch, 2);
    Net::Dense { stem, stem_bn, wide, blocks, transitions, norm, head }
}

fn vit(p: &mut Planner, s: &VitSpec, c: usize, side: usize) -> Net {
    let tokens = (side / s.patch) * (side / s.patch) + 1;
    let embed = p.linear("patch_embed", c * s.patch * s.patch, s.dim);
    let cls = p.embedding("cls_token".into(), vec![1, 1, s.dim]);
    let pos = s.positional.then(|| p.embedding("pos_embed".into(), vec![tokens, s.dim]));
    let blocks = (0..s.depth).map(|i| p.block(&format!("blocks.{i}"), s.dim, s.heads, s.mlp_dim, s.reattention)).collect();
    let norm = p.norm("norm", s.dim);
    let head = p.linear("head", s.dim, 2);
    Net::Vit { heads: s.heads, patch: s.patch, embed, cls, pos, blocks, norm, head }
}

fn cct(p: &mut Planner, s: &CctSpec, c: usize, side: usize) -> Net {
    let mut cin = c;
    let mut convs = Vec::new();
    for (i, &cout) in s.conv_channels.iter().enumerate() {
        convs.push(p.conv(&format!("tokenizer.{i}.conv"), cin, cout, 3));
        cin = cout;
    }
    let d = cin;
    let t = side >> s.conv_channels.len();
    let pos = s.positional.then(|| p.embedding("pos_embed".into(), vec![t * t, d]));
    let blocks = (0..s.depth).map(|i| p.block(&format!("blocks.{i}"), d, s.heads, s.mlp_dim, false)).collect();
    let norm = p.norm("norm", d);
    let pool = p.linear("seq_pool", d, 1);
    let head = p.linear("head", d, 2);
    Net::Cct { heads: s.heads, convs, pos, blocks, norm, pool, head }
}

fn cross_vit(p: &mut Planner, s: &CrossVitSpec, c: usize) -> Net {
    let mut branch = |name: &str, side: usize, patch: usize, d: usize| {
        let tokens = (side / patch) * (side / patch) + 1;
        BranchP {
            side,
            patch,
            embed: p.linear(&format!("{name}.patch_embed"), c * patch * patch, d),
            cls: p.embedding(format!("{name}.cls_token"), vec![1, 1, d]),
            pos: p.embedding(format!("{name}.pos_embed"), vec![tokens, d]),
            norm: NormP { gamma: 0, beta: 0 },
            head: LinearP { w: 0, b: 0 },
        }
    };
    let mut large = branch("large", s.large_side, s.large_patch, s.large_dim);
    let mut small = branch("small", s.small_side, s.small_patch, s.small_dim);
    let (dl, ds) = (s.large_dim, s.small_dim);
    let mut layers = Vec::new();
    for li in 0..s.layers {
        let lb = (0..s.large_depth)
            .map(|i| p.block(&format!("layers.{li}.large.{i}"), dl, s.heads, s.mlp_ratio * dl, false))
            .collect();
        let sb = (0..s.small_depth)
            .map(|i| p.block(&format!("layers.{li}.small.{i}"), ds, s.heads, s.mlp_ratio * ds, false))
            .collect();
        let mut fuse = |name: &str, from: usize, to: usize| FuseP {
            proj_ln: p.norm(&format!("layers.{li}.{name}.proj_ln"), from),
            proj: p.linear(&format!("layers.{li}.{name}.proj"), from, to),
            attn_ln: p.norm(&format!("layers.{li}.{name}.attn_ln"), to),
            attn: p.attn(&format!("layers.{li}.{name}.attn"), to),
            back_ln: p.norm(&format!("layers.{li}.{name}.back_ln"), to),
            back: p.linear(&format!("layers.{li}.{name}.back"), to, from),
        };
        let f0 = fuse("fuse_large", dl, ds);
        let f1 = fuse("fuse_small", ds, dl);
        layers.push(CrossLayerP { large: lb, small: sb, fuse: [f0, f1] });
    }
    large.norm = p.norm("large.norm", dl);
    small.norm = p.norm("small.norm", ds);
    large.head = p.linear("large.head", dl, 2);
    small.head = p.linear("small.head", ds, 2);
    Net::Cross { heads: s.heads, branches: [large, small], layers }
}
