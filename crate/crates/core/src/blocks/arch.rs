//! Discrete architecture codes.
//!
//! Each of the six convolutional search blocks picks one of 16 options:
//! V2 and V2A choose a spatial channel count `n_c ∈ {4F, 8F, 12F}` and a
//! branch count `n_d ∈ {4, 5}` (6 options each); V2B and V2C only choose
//! `n_d` (2 options each). A seventh gene picks 0–4 self-attention layers.
//!
//! Text form: `V2(4F,4),V2A(4F,5),V2B(4),V2C(5),V2(12F,5),V2(8F,4);attn=0`.
//! The parser also accepts the short kinds `A`, `B`, `C`, `DDCNNV2*` prefixes
//! and keyword arguments such as `V2A(nc=4F,nd=5)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NUM_BLOCKS: usize = 6;
pub const OPTIONS_PER_BLOCK: usize = 16;
pub const ATTENTION_CHOICES: usize = 5;
pub const NC_MULTIPLES: [u8; 3] = [4, 8, 12];
pub const BRANCH_COUNTS: [u8; 2] = [4, 5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    V2,
    V2A,
    V2B,
    V2C,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::V2 => "V2",
            BlockKind::V2A => "V2A",
            BlockKind::V2B => "V2B",
            BlockKind::V2C => "V2C",
        }
    }

    pub fn has_channel_choice(self) -> bool {
        matches!(self, BlockKind::V2 | BlockKind::V2A)
    }
}

/// One search-block choice.
///
/// `nc` is the spatial channel count as a multiple of the block's base
/// filter count `F` (so `nc = 4` means `4F`); it is `None` for V2B/V2C, whose
/// spatial width is tied to the concatenated temporal width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockGene {
    pub kind: BlockKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nc: Option<u8>,
    pub nd: u8,
}

impl BlockGene {
    pub fn new(kind: BlockKind, nc: Option<u8>, nd: u8) -> Result<Self> {
        let gene = BlockGene { kind, nc, nd };
        gene.validate()?;
        Ok(gene)
    }

    pub fn v2(nc: u8, nd: u8) -> Result<Self> {
        Self::new(BlockKind::V2, Some(nc), nd)
    }

    pub fn v2a(nc: u8, nd: u8) -> Result<Self> {
        Self::new(BlockKind::V2A, Some(nc), nd)
    }

    pub fn v2b(nd: u8) -> Result<Self> {
        Self::new(BlockKind::V2B, None, nd)
    }

    pub fn v2c(nd: u8) -> Result<Self> {
        Self::new(BlockKind::V2C, None, nd)
    }

    pub fn validate(&self) -> Result<()> {
        if !BRANCH_COUNTS.contains(&self.nd) {
            return Err(Error::Arch(format!("{}: n_d={} not in {{4, 5}}", self.kind.name(), self.nd)));
        }
        match (self.kind.has_channel_choice(), self.nc) {
            (true, Some(nc)) if NC_MULTIPLES.contains(&nc) => Ok(()),
            (true, Some(nc)) => Err(Error::Arch(format!(
                "{}: n_c={nc}F not in {{4F, 8F, 12F}}",
                self.kind.name()
            ))),
            (true, None) => Err(Error::Arch(format!("{}: missing n_c", self.kind.name()))),
            (false, None) => Ok(()),
            (false, Some(_)) => Err(Error::Arch(format!(
                "{}: n_c is fixed for this block kind and cannot be chosen",
                self.kind.name()
            ))),
        }
    }

    /// Option index in `0..16`: V2 0–5, V2A 6–11, V2B 12–13, V2C 14–15.
    pub fn option(&self) -> usize {
        let nd_idx = usize::from(self.nd == 5);
        let nc_idx = || NC_MULTIPLES.iter().position(|&m| Some(m) == self.nc).expect("validated gene");
        match self.kind {
            BlockKind::V2 => nc_idx() * 2 + nd_idx,
            BlockKind::V2A => 6 + nc_idx() * 2 + nd_idx,
            BlockKind::V2B => 12 + nd_idx,
            BlockKind::V2C => 14 + nd_idx,
        }
    }

    pub fn from_option(option: usize) -> Result<Self> {
        let nd = BRANCH_COUNTS[option % 2];
        match option {
            0..=5 => Self::v2(NC_MULTIPLES[option / 2], nd),
            6..=11 => Self::v2a(NC_MULTIPLES[(option - 6) / 2], nd),
            12 | 13 => Self::v2b(nd),
            14 | 15 => Self::v2c(nd),
            _ => Err(Error::Arch(format!("block option {option} not in 0..16"))),
        }
    }

    /// Every distinct gene, in option order.
    pub fn all() -> Vec<BlockGene> {
        (0..OPTIONS_PER_BLOCK).map(|o| Self::from_option(o).expect("in range")).collect()
    }
}

impl fmt::Display for BlockGene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.nc {
            Some(nc) => write!(f, "{}({}F,{})", self.kind.name(), nc, self.nd),
            None => write!(f, "{}({})", self.kind.name(), self.nd),
        }
    }
}

impl FromStr for BlockGene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| Error::Arch(format!("`{s}`: expected KIND(args)")))?;
        let args = s[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| Error::Arch(format!("`{s}`: missing closing parenthesis")))?;
        let kind_str = s[..open].trim().to_ascii_uppercase();
        let kind_str = kind_str.strip_prefix("DDCNN").unwrap_or(&kind_str);
        let kind = match kind_str {
            "V2" => BlockKind::V2,
            "V2A" | "A" => BlockKind::V2A,
            "V2B" | "B" => BlockKind::V2B,
            "V2C" | "C" => BlockKind::V2C,
            other => return Err(Error::Arch(format!("`{s}`: unknown block kind `{other}`"))),
        };
        let mut nc = None;
        let mut nd = None;
        for (pos, raw) in args.split(',').enumerate() {
            let raw = raw.trim();
            let (key, value) = match raw.split_once('=') {
                Some((k, v)) => (Some(k.trim().replace('_', "").to_ascii_lowercase()), v.trim()),
                None => (None, raw),
            };
            let is_nc = match key.as_deref() {
                Some("nc") => true,
                Some("nd") => false,
                Some(k) => return Err(Error::Arch(format!("`{s}`: unknown argument `{k}`"))),
                // positional: channels first when the kind has them and the value carries an F
                None => kind.has_channel_choice() && pos == 0,
            };
            if is_nc {
                let digits = value
                    .strip_suffix(['F', 'f'])
                    .ok_or_else(|| Error::Arch(format!("`{s}`: n_c `{value}` must be written as a multiple of F")))?;
                nc = Some(
                    digits
                        .trim()
                        .parse::<u8>()
                        .map_err(|_| Error::Arch(format!("`{s}`: bad n_c `{value}`")))?,
                );
            } else {
                nd = Some(
                    value
                        .parse::<u8>()
                        .map_err(|_| Error::Arch(format!("`{s}`: bad n_d `{value}`")))?,
                );
            }
        }
        let nd = nd.ok_or_else(|| Error::Arch(format!("`{s}`: missing n_d")))?;
        BlockGene::new(kind, nc, nd)
    }
}

/// A full candidate architecture: six block genes plus the attention depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArchCode {
    pub blocks: [BlockGene; NUM_BLOCKS],
    pub attention_layers: u8,
}

/// `16^6 * 5` candidate architectures.
pub fn search_space_size() -> u64 {
    (OPTIONS_PER_BLOCK as u64).pow(NUM_BLOCKS as u32) * ATTENTION_CHOICES as u64
}

impl ArchCode {
    pub fn new(blocks: [BlockGene; NUM_BLOCKS], attention_layers: u8) -> Result<Self> {
        let code = ArchCode {
            blocks,
            attention_layers,
        };
        code.validate()?;
        Ok(code)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.blocks.iter().enumerate() {
            b.validate().map_err(|e| Error::Arch(format!("block {}: {e}", i + 1)))?;
        }
        if usize::from(self.attention_layers) >= ATTENTION_CHOICES {
            return Err(Error::Arch(format!(
                "attention: {} layers not in {{0, 1, 2, 3, 4}}",
                self.attention_layers
            )));
        }
        Ok(())
    }

    /// The seven genes as small integers: six block options, then the
    /// attention depth.
    pub fn genes(&self) -> [usize; 7] {
        let mut g = [0; 7];
        for (slot, b) in g.iter_mut().zip(&self.blocks) {
            *slot = b.option();
        }
        g[6] = usize::from(self.attention_layers);
        g
    }

    pub fn from_genes(genes: [usize; 7]) -> Result<Self> {
        let mut blocks = [BlockGene::from_option(0)?; NUM_BLOCKS];
        for (i, (slot, &o)) in blocks.iter_mut().zip(&genes).enumerate() {
            *slot = BlockGene::from_option(o).map_err(|e| Error::Arch(format!("block {}: {e}", i + 1)))?;
        }
        let attn = u8::try_from(genes[6]).map_err(|_| Error::Arch(format!("attention: {} layers", genes[6])))?;
        Self::new(blocks, attn)
    }

    /// Mixed-radix index in `0..search_space_size()`.
    pub fn index(&self) -> u64 {
        let g = self.genes();
        let mut idx = 0u64;
        for &o in &g[..NUM_BLOCKS] {
            idx = idx * OPTIONS_PER_BLOCK as u64 + o as u64;
        }
        idx * ATTENTION_CHOICES as u64 + g[6] as u64
    }

    pub fn from_index(index: u64) -> Result<Self> {
        if index >= search_space_size() {
            return Err(Error::Arch(format!("index {index} outside the search space")));
        }
        let mut genes = [0usize; 7];
        genes[6] = (index % ATTENTION_CHOICES as u64) as usize;
        let mut rest = index / ATTENTION_CHOICES as u64;
        for slot in genes[..NUM_BLOCKS].iter_mut().rev() {
            *slot = (rest % OPTIONS_PER_BLOCK as u64) as usize;
            rest /= OPTIONS_PER_BLOCK as u64;
        }
        Self::from_genes(genes)
    }

    /// Each block option and the attention depth drawn independently and
    /// uniformly.
    pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut genes = [0usize; 7];
        for g in genes[..NUM_BLOCKS].iter_mut() {
            *g = rng.gen_range(0..OPTIONS_PER_BLOCK);
        }
        genes[6] = rng.gen_range(0..ATTENTION_CHOICES);
        Self::from_genes(genes).expect("sampled in range")
    }

    /// Number of genes that differ.
    pub fn hamming(&self, other: &ArchCode) -> usize {
        self.genes().iter().zip(other.genes()).filter(|(a, b)| **a != *b).count()
    }

    /// The TransNetV2 layout in this search space: six V2(8F,4) blocks and no
    /// attention.
    pub fn transnet_v2() -> Self {
        "V2(8F,4),V2(8F,4),V2(8F,4),V2(8F,4),V2(8F,4),V2(8F,4);attn=0"
            .parse()
            .expect("valid literal")
    }

    /// The architecture selected by F1 on SHOT.
    pub fn autoshot_f1() -> Self {
        "V2(4F,4),V2A(4F,5),V2A(4F,5),V2A(4F,5),V2(12F,5),V2(8F,5);attn=0"
            .parse()
            .expect("valid literal")
    }

    /// The architecture selected by precision at fixed recall on SHOT.
    pub fn autoshot_prec() -> Self {
        "V2(12F,4),V2(8F,4),V2B(4),V2C(4),V2B(5),V2B(4);attn=0"
            .parse()
            .expect("valid literal")
    }
}

impl fmt::Display for ArchCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, ";attn={}", self.attention_layers)
    }
}

impl FromStr for ArchCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (blocks_part, attn_part) = match s.split_once(';') {
            Some((b, a)) => (b, Some(a)),
            None => (s, None),
        };
        // split on commas outside parentheses
        let mut parts = Vec::new();
        let (mut depth, mut start) = (0i32, 0usize);
        for (i, ch) in blocks_part.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth -= 1,
                ',' if depth == 0 => {
                    parts.push(&blocks_part[start..i]);
                    start = i + 1;
                }
                _ => {}
            }
        }
        parts.push(&blocks_part[start..]);
        if parts.len() != NUM_BLOCKS {
            return Err(Error::Arch(format!("expected {NUM_BLOCKS} blocks, found {}", parts.len())));
        }
        let mut blocks = [BlockGene::from_option(0)?; NUM_BLOCKS];
        for (i, (slot, p)) in blocks.iter_mut().zip(parts).enumerate() {
            *slot = p.parse().map_err(|e| Error::Arch(format!("block {}: {e}", i + 1)))?;
        }
        let attention_layers = match attn_part {
            None => 0,
            Some(a) => {
                let a = a.trim();
                let v = a
                    .strip_prefix("attn=")
                    .or_else(|| a.strip_prefix("attn ="))
                    .ok_or_else(|| Error::Arch(format!("expected `attn=K`, got `{a}`")))?;
                v.trim()
                    .parse::<u8>()
                    .map_err(|_| Error::Arch(format!("attention: bad layer count `{v}`")))?
            }
        };
        ArchCode::new(blocks, attention_layers)
    }
}
