//! Multiply-accumulate counting for one forward pass.
//!
//! Only convolutions, dense layers and attention products are counted;
//! batch norm, activations, pooling and the histogram feature are free.

use serde::Serialize;

use super::arch::{ArchCode, BlockKind, NUM_BLOCKS};
use super::config::{BlockChannels, NetworkConfig};

/// MACs of a 3×3 same-padded convolution over `frames` frames of `h×w`.
pub fn conv2d_macs(frames: usize, h: usize, w: usize, cin: usize, cout: usize) -> u64 {
    (9 * cin * cout) as u64 * (frames * h * w) as u64
}

/// MACs of a length-3 temporal convolution over `frames` frames of `h×w`.
pub fn conv1d_macs(frames: usize, h: usize, w: usize, cin: usize, cout: usize) -> u64 {
    (3 * cin * cout) as u64 * (frames * h * w) as u64
}

pub fn linear_macs(rows: usize, din: usize, dout: usize) -> u64 {
    (rows * din) as u64 * dout as u64
}

/// Q/K/V and feed-forward projections plus the two `T×T` products of one
/// single-head layer.
pub fn attention_macs(frames: usize, dim: usize) -> u64 {
    4 * linear_macs(frames, dim, dim) + 2 * (frames * frames * dim) as u64
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlopReport {
    /// MACs of each search block.
    pub blocks: [u64; NUM_BLOCKS],
    pub attention: u64,
    /// Similarity projections, hidden layer and output heads.
    pub head: u64,
    pub total: u64,
}

impl FlopReport {
    pub fn gmacs(&self) -> f64 {
        self.total as f64 / 1e9
    }
}

pub fn block_macs(kind: BlockKind, ch: &BlockChannels, nd: usize, cin: usize, frames: usize, h: usize, w: usize) -> u64 {
    let spatial_convs = if kind == BlockKind::V2 { nd } else { 1 };
    spatial_convs as u64 * conv2d_macs(frames, h, w, cin, ch.spatial)
        + nd as u64 * conv1d_macs(frames, h, w, ch.temporal_in, ch.temporal_out)
}

/// Counts the MACs of `arch` at the input size in `cfg`.
pub fn count_flops(arch: &ArchCode, cfg: &NetworkConfig) -> FlopReport {
    let t = cfg.frames;
    let mut blocks = [0u64; NUM_BLOCKS];
    for ((slot, gene), layout) in blocks.iter_mut().zip(&arch.blocks).zip(cfg.layouts(arch)) {
        let ch = BlockChannels::new(gene, layout.in_channels, layout.filters);
        *slot = block_macs(gene.kind, &ch, usize::from(gene.nd), layout.in_channels, t, layout.height, layout.width);
    }
    let dim = cfg.base_feature_dim(arch);
    let attention = u64::from(arch.attention_layers) * attention_macs(t, dim);
    let k = cfg.sim_offsets.len();
    let head = linear_macs(t, cfg.block_feature_dim(arch), cfg.cos_dim)
        + (t * k * cfg.cos_dim) as u64
        + 2 * linear_macs(t, k, cfg.sim_dim)
        + linear_macs(t, cfg.head_input_dim(arch), cfg.hidden)
        + 2 * linear_macs(t, cfg.hidden, 1);
    let total = blocks.iter().sum::<u64>() + attention + head;
    FlopReport {
        blocks,
        attention,
        head,
        total,
    }
}
