//! Searchable subsets of the architecture space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::NUM_GENES;
use crate::blocks::arch::{ATTENTION_CHOICES, NUM_BLOCKS, OPTIONS_PER_BLOCK};
use crate::blocks::ArchCode;
use crate::{Error, Result};

/// Codes that agree with `base` on every gene not marked free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub base: ArchCode,
    pub free: [bool; NUM_GENES],
}

/// Number of values gene `g` can take.
pub fn gene_radix(g: usize) -> usize {
    if g < NUM_BLOCKS {
        OPTIONS_PER_BLOCK
    } else {
        ATTENTION_CHOICES
    }
}

impl SearchSpace {
    pub fn full() -> Self {
        SearchSpace {
            base: ArchCode::transnet_v2(),
            free: [true; NUM_GENES],
        }
    }

    /// The first two blocks and the attention depth vary; `16² · 5` codes.
    pub fn reduced(base: ArchCode) -> Self {
        SearchSpace {
            base,
            free: [true, true, false, false, false, false, true],
        }
    }

    pub fn size(&self) -> u64 {
        (0..NUM_GENES)
            .filter(|&g| self.free[g])
            .map(|g| gene_radix(g) as u64)
            .product()
    }

    pub fn contains(&self, a: &ArchCode) -> bool {
        let (g, b) = (a.genes(), self.base.genes());
        (0..NUM_GENES).all(|i| self.free[i] || g[i] == b[i])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ArchCode {
        let mut g = self.base.genes();
        for (i, v) in g.iter_mut().enumerate() {
            if self.free[i] {
                *v = rng.gen_range(0..gene_radix(i));
            }
        }
        ArchCode::from_genes(g).expect("genes in range")
    }

    /// Every member, in mixed-radix order over the free genes.
    pub fn enumerate(&self, limit: u64) -> Result<Vec<ArchCode>> {
        let size = self.size();
        if size > limit {
            return Err(Error::InvalidArgument(format!("space of {size} codes exceeds enumeration limit {limit}")));
        }
        let free: Vec<usize> = (0..NUM_GENES).filter(|&g| self.free[g]).collect();
        let mut out = Vec::with_capacity(size as usize);
        for mut idx in 0..size {
            let mut g = self.base.genes();
            for &i in free.iter().rev() {
                g[i] = (idx % gene_radix(i) as u64) as usize;
                idx /= gene_radix(i) as u64;
            }
            out.push(ArchCode::from_genes(g)?);
        }
        Ok(out)
    }
}
