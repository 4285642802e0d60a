use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Preset {
    /// Depths, heads and patch sizes of the reference models, widths sized to
    /// their published parameter counts.
    Paper,
    /// Reduced widths and depths on 64×64 inputs for quick runs and checks.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ArchKind {
    LenetMod,
    Densenet,
    DeepVit,
    Cct,
    CrossVit,
}

impl ArchKind {
    pub const ALL: [ArchKind; 5] = [ArchKind::LenetMod, ArchKind::Densenet, ArchKind::DeepVit, ArchKind::Cct, ArchKind::CrossVit];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::LenetMod => "lenet_mod",
            ArchKind::Densenet => "densenet",
            ArchKind::DeepVit => "deep_vit",
            ArchKind::Cct => "cct",
            ArchKind::CrossVit => "cross_vit",
        }
    }

    pub fn is_transformer(self) -> bool {
        matches!(self, ArchKind::DeepVit | ArchKind::Cct | ArchKind::CrossVit)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LenetSpec {
    /// Output channels of the four conv stages.
    pub conv_channels: Vec<usize>,
    /// Widths of the two hidden fully connected layers.
    pub fc_hidden: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum DenseStem {
    /// 7×7 stride-2 conv, batchnorm, relu, 2×2 max pool.
    Wide,
    /// 3×3 stride-2 conv, batchnorm, relu.
    Compact,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseNetSpec {
    pub growth_rate: usize,
    pub block_layers: Vec<usize>,
    pub init_features: usize,
    /// Bottleneck width is `bn_size · growth_rate`.
    pub bn_size: usize,
    /// Transition layers keep `floor(compression · C)` channels.
    pub compression: f64,
    pub stem: DenseStem,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VitSpec {
    pub patch: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    /// Learned head mixing of attention maps.
    pub reattention: bool,
    pub positional: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CctSpec {
    /// Output channels of each conv/relu/pool tokenizer stage; the last is
    /// the embedding width.
    pub conv_channels: Vec<usize>,
    pub depth: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub positional: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrossVitSpec {
    pub large_side: usize,
    pub small_side: usize,
    pub large_patch: usize,
    pub small_patch: usize,
    pub large_dim: usize,
    pub small_dim: usize,
    /// Encoder blocks per branch inside each multi-scale layer.
    pub large_depth: usize,
    pub small_depth: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(tag = "kind", rename_all = "snake_case"))]
pub enum Arch {
    LenetMod(LenetSpec),
    Densenet(DenseNetSpec),
    DeepVit(VitSpec),
    Cct(CctSpec),
    CrossVit(CrossVitSpec),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub preset: Preset,
    pub in_channels: usize,
    pub image_side: usize,
    pub arch: Arch,
}

pub const PAPER_SIDE: usize = 224;
pub const DESK_SIDE: usize = 64;

impl ModelSpec {
    pub fn kind(&self) -> ArchKind {
        match self.arch {
            Arch::LenetMod(_) => ArchKind::LenetMod,
            Arch::Densenet(_) => ArchKind::Densenet,
            Arch::DeepVit(_) => ArchKind::DeepVit,
            Arch::Cct(_) => ArchKind::Cct,
            Arch::CrossVit(_) => ArchKind::CrossVit,
        }
    }

    pub fn preset(kind: ArchKind, preset: Preset) -> Self {
        match preset {
            Preset::Paper => Self::paper(kind),
            Preset::Desk => Self::desk(kind),
        }
    }

    fn paper(kind: ArchKind) -> Self {
        let arch = match kind {
            ArchKind::LenetMod => Arch::LenetMod(LenetSpec { conv_channels: vec![16, 32, 64, 128], fc_hidden: vec![384, 84] }),
            ArchKind::Densenet => Arch::Densenet(DenseNetSpec {
                growth_rate: 32,
                block_layers: vec![6, 12, 24, 16],
                init_features: 64,
                bn_size: 4,
                compression: 0.5,
                stem: DenseStem::Wide,
            }),
            ArchKind::DeepVit => Arch::DeepVit(VitSpec {
                patch: 32,
                dim: 936,
                depth: 12,
                heads: 24,
                mlp_dim: 4 * 936,
                reattention: false,
                positional: true,
            }),
            ArchKind::Cct => Arch::Cct(CctSpec {
                conv_channels: vec![64, 128, 256, 384, 384, 384],
                depth: 14,
                heads: 6,
                mlp_dim: 3 * 384,
                positional: true,
            }),
            ArchKind::CrossVit => Arch::CrossVit(CrossVitSpec {
                large_side: 384,
                small_side: 192,
                large_patch: 16,
                small_patch: 16,
                large_dim: 640,
                small_dim: 320,
                large_depth: 4,
                small_depth: 1,
                layers: 3,
                heads: 8,
                mlp_ratio: 4,
            }),
        };
        Self { preset: Preset::Paper, in_channels: 3, image_side: PAPER_SIDE, arch }
    }

    fn desk(kind: ArchKind) -> Self {
        let arch = match kind {
            ArchKind::LenetMod => Arch::LenetMod(LenetSpec { conv_channels: vec![4, 8, 8, 16], fc_hidden: vec![32, 16] }),
            ArchKind::Densenet => Arch::Densenet(DenseNetSpec {
                growth_rate: 4,
                block_layers: vec![2, 2],
                init_features: 8,
                bn_size: 2,
                compression: 0.5,
                stem: DenseStem::Compact,
            }),
            ArchKind::DeepVit => Arch::DeepVit(VitSpec {
                patch: 16,
                dim: 32,
                depth: 2,
                heads: 4,
                mlp_dim: 64,
                reattention: false,
                positional: true,
            }),
            ArchKind::Cct => Arch::Cct(CctSpec {
                conv_channels: vec![8, 16, 32],
                depth: 2,
                heads: 4,
                mlp_dim: 64,
                positional: true,
            }),
            ArchKind::CrossVit => Arch::CrossVit(CrossVitSpec {
                large_side: 64,
                small_side: 32,
                large_patch: 16,
                small_patch: 16,
                large_dim: 32,
                small_dim: 16,
                large_depth: 1,
                small_depth: 1,
                layers: 1,
                heads: 4,
                mlp_ratio: 2,
            }),
        };
        Self { preset: Preset::Desk, in_channels: 1, image_side: DESK_SIDE, arch }
    }

    /// Checks every hyperparameter invariant, naming the first violated.
    pub fn validate(&self) -> Result<()> {
        positive("in_channels", self.in_channels)?;
        positive("image_side", self.image_side)?;
        let side = self.image_side;
        match &self.arch {
            Arch::LenetMod(s) => {
                if s.conv_channels.len() != 4 || s.fc_hidden.len() != 2 {
                    bail!(Config, "lenet_mod needs 4 conv stages and 2 hidden FC layers");
                }
                all_positive("conv_channels", &s.conv_channels)?;
                all_positive("fc_hidden", &s.fc_hidden)?;
                if side < 16 {
                    bail!(Config, "lenet_mod needs image_side >= 16 for four 2x2 pools, got {}", side);
                }
            }
            Arch::Densenet(s) => {
                positive("growth_rate", s.growth_rate)?;
                positive("init_features", s.init_features)?;
                positive("bn_size", s.bn_size)?;
                if s.block_layers.is_empty() {
                    bail!(Config, "densenet needs at least one dense block");
                }
                all_positive("block_layers", &s.block_layers)?;
                if !(s.compression > 0.0 && s.compression <= 1.0) {
                    bail!(Config, "densenet compression {} must lie in (0, 1]", s.compression);
                }
                let stem_div = match s.stem {
                    DenseStem::Wide => 4,
                    DenseStem::Compact => 2,
                };
                let min_side = stem_div << (s.block_layers.len() - 1);
                if side < min_side {
                    bail!(Config, "densenet needs image_side >= {}, got {}", min_side, side);
                }
            }
            Arch::DeepVit(s) => {
                positive("patch", s.patch)?;
                positive("mlp_dim", s.mlp_dim)?;
                positive("depth", s.depth)?;
                heads_divide("dim", s.dim, s.heads)?;
                patch_divides(side, s.patch)?;
            }
            Arch::Cct(s) => {
                if s.conv_channels.is_empty() {
                    bail!(Config, "cct needs at least one tokenizer stage");
                }
                all_positive("conv_channels", &s.conv_channels)?;
                positive("depth", s.depth)?;
                positive("mlp_dim", s.mlp_dim)?;
                heads_divide("conv_channels[last]", *s.conv_channels.last().unwrap(), s.heads)?;
                if side >> s.conv_channels.len() == 0 {
                    bail!(Config, "{} pooling stages reduce a {}-pixel side to nothing", s.conv_channels.len(), side);
                }
            }
            Arch::CrossVit(s) => {
                positive("layers", s.layers)?;
                positive("large_depth", s.large_depth)?;
                positive("small_depth", s.small_depth)?;
                positive("mlp_ratio", s.mlp_ratio)?;
                heads_divide("large_dim", s.large_dim, s.heads)?;
                heads_divide("small_dim", s.small_dim, s.heads)?;
                positive("large_patch", s.large_patch)?;
                positive("small_patch", s.small_patch)?;
                patch_divides(s.large_side, s.large_patch)?;
                patch_divides(s.small_side, s.small_patch)?;
            }
        }
        Ok(())
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        bail!(Config, "{} must be positive", name);
    }
    Ok(())
}

fn all_positive(name: &str, v: &[usize]) -> Result<()> {
    if v.contains(&0) {
        bail!(Config, "every entry of {} must be positive, got {:?}", name, v);
    }
    Ok(())
}

fn heads_divide(name: &str, dim: usize, heads: usize) -> Result<()> {
    if heads == 0 || dim == 0 || !dim.is_multiple_of(heads) {
        bail!(Config, "{} = {} must be a positive multiple of heads = {}", name, dim, heads);
    }
    Ok(())
}

fn patch_divides(side: usize, patch: usize) -> Result<()> {
    if side == 0 || !side.is_multiple_of(patch) {
        bail!(Config, "image side {} is not divisible by patch size {}", side, patch);
    }
    Ok(())
}
