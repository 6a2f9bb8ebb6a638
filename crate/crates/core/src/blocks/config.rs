use serde::{Deserialize, Serialize};

use super::arch::{ArchCode, BlockGene, BlockKind, NUM_BLOCKS};
use crate::{Error, Result};

/// Shape and width settings of the detection network.
///
/// The base filter count `F` starts at `base_filters` and doubles every
/// `blocks_per_stage` blocks; `pool_after[p]` inserts a 2×2 spatial average
/// pool after block `p`. With the defaults (48×27 RGB input, F = 16, pooling
/// after blocks 2, 4 and 6) the TransNetV2 layout ends in 256 channels on a
/// 3×6 grid, so the head input is 4,608 base features plus two 128-wide
/// similarity features: 4,864.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub base_filters: usize,
    pub blocks_per_stage: usize,
    pub pool_after: [bool; NUM_BLOCKS],
    /// Frames per forward pass; only used for MAC counting, the network
    /// itself accepts any clip length.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Histogram bins per colour channel (joint histogram of `bins^3`).
    pub hist_bins: usize,
    /// Temporal offsets compared by both similarity features.
    pub sim_offsets: Vec<isize>,
    /// Width of the learnable projection before the cosine similarity.
    pub cos_dim: usize,
    /// Output width of each similarity feature's dense layer.
    pub sim_dim: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            base_filters: 16,
            blocks_per_stage: 2,
            pool_after: [false, true, false, true, false, true],
            frames: 100,
            height: 27,
            width: 48,
            channels: 3,
            hist_bins: 8,
            sim_offsets: vec![-2, -1, 1, 2],
            cos_dim: 128,
            sim_dim: 128,
            hidden: 1024,
            dropout: 0.5,
        }
    }
}

/// Channel and spatial bookkeeping for one block of a concrete architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    pub filters: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
}

/// Channel counts inside a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockChannels {
    /// Output width of each spatial convolution (one per branch for V2,
    /// a single shared one otherwise).
    pub spatial: usize,
    /// Input width of each temporal convolution.
    pub temporal_in: usize,
    /// Output width of each temporal branch, `ceil(4F / n_d)`.
    pub temporal_out: usize,
    /// Concatenated output width, `n_d * ceil(4F / n_d)`.
    pub out: usize,
}

impl BlockChannels {
    pub fn new(gene: &BlockGene, in_channels: usize, filters: usize) -> Self {
        let nd = usize::from(gene.nd);
        let temporal_out = (4 * filters).div_ceil(nd);
        let out = nd * temporal_out;
        let nc = gene.nc.map(|m| usize::from(m) * filters);
        match gene.kind {
            BlockKind::V2 => {
                let per_branch = nc.expect("validated gene").div_ceil(nd);
                BlockChannels {
                    spatial: per_branch,
                    temporal_in: per_branch,
                    temporal_out,
                    out,
                }
            }
            BlockKind::V2A => {
                let nc = nc.expect("validated gene");
                BlockChannels {
                    spatial: nc,
                    temporal_in: nc,
                    temporal_out,
                    out,
                }
            }
            BlockKind::V2B => BlockChannels {
                spatial: out,
                temporal_in: in_channels,
                temporal_out,
                out,
            },
            BlockKind::V2C => BlockChannels {
                spatial: out,
                temporal_in: out,
                temporal_out,
                out,
            },
        }
    }
}

impl NetworkConfig {
    /// A small configuration for CPU training: 16×9 input, F = 5 (so both
    /// branch counts divide 4F and every option keeps the same width), 64
    /// hidden units.
    pub fn desk() -> Self {
        NetworkConfig {
            base_filters: 5,
            height: 9,
            width: 16,
            frames: 60,
            cos_dim: 16,
            sim_dim: 16,
            hidden: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("network config: {m}")));
        if self.base_filters == 0 {
            return bad("base_filters must be positive");
        }
        if self.blocks_per_stage == 0 {
            return bad("blocks_per_stage must be positive");
        }
        if self.height == 0 || self.width == 0 || self.channels == 0 || self.frames == 0 {
            return bad("input dimensions must be positive");
        }
        if self.hist_bins < 1 {
            return bad("hist_bins must be positive");
        }
        if self.sim_offsets.is_empty() {
            return bad("sim_offsets must not be empty");
        }
        if self.cos_dim == 0 || self.sim_dim == 0 || self.hidden == 0 {
            return bad("cos_dim, sim_dim and hidden must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        let (mut h, mut w) = (self.height, self.width);
        for (p, &pool) in self.pool_after.iter().enumerate() {
            if pool {
                h /= 2;
                w /= 2;
                if h == 0 || w == 0 {
                    return bad(&format!("input {}x{} pooled to nothing after block {}", self.height, self.width, p + 1));
                }
            }
        }
        Ok(())
    }

    /// Base filter count `F` of block `p` (0-based).
    pub fn filters(&self, block: usize) -> usize {
        self.base_filters << (block / self.blocks_per_stage)
    }

    pub fn layouts(&self, arch: &ArchCode) -> [BlockLayout; NUM_BLOCKS] {
        let mut out = [BlockLayout {
            filters: 0,
            in_channels: 0,
            out_channels: 0,
            height: 0,
            width: 0,
        }; NUM_BLOCKS];
        let (mut cin, mut h, mut w) = (self.channels, self.height, self.width);
        for (p, (slot, gene)) in out.iter_mut().zip(&arch.blocks).enumerate() {
            let f = self.filters(p);
            let ch = BlockChannels::new(gene, cin, f);
            *slot = BlockLayout {
                filters: f,
                in_channels: cin,
                out_channels: ch.out,
                height: h,
                width: w,
            };
            cin = ch.out;
            if self.pool_after[p] {
                h /= 2;
                w /= 2;
            }
        }
        out
    }

    /// Spatial size after the last block (and its pool, if any).
    pub fn final_grid(&self) -> (usize, usize) {
        let pools = self.pool_after.iter().filter(|&&p| p).count();
        (self.height >> pools, self.width >> pools)
    }

    /// Width of the flattened per-frame base feature.
    pub fn base_feature_dim(&self, arch: &ArchCode) -> usize {
        let (h, w) = self.final_grid();
        self.layouts(arch)[NUM_BLOCKS - 1].out_channels * h * w
    }

    /// Sum of block output widths, the input of the cosine projection.
    pub fn block_feature_dim(&self, arch: &ArchCode) -> usize {
        self.layouts(arch).iter().map(|l| l.out_channels).sum()
    }

    /// Head input: flattened base features plus the two similarity features.
    pub fn head_input_dim(&self, arch: &ArchCode) -> usize {
        self.base_feature_dim(arch) + 2 * self.sim_dim
    }

    /// True when every block option at every position produces the same
    /// output width, which weight sharing across options requires.
    pub fn uniform_block_width(&self) -> bool {
        (0..NUM_BLOCKS).all(|p| {
            let f = self.filters(p);
            [4usize, 5].iter().all(|nd| (4 * f).is_multiple_of(*nd))
        })
    }
}
