//! Tabulated synthetic objectives over small spaces.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::NUM_GENES;
use super::space::{gene_radix, SearchSpace};
use crate::blocks::ArchCode;
use crate::{Error, Result};

/// Known score for every code of an enumerable space.
#[derive(Clone, Debug)]
pub struct TableObjective {
    space: SearchSpace,
    scores: HashMap<ArchCode, f64>,
    optimum: ArchCode,
}

impl TableObjective {
    /// Sum of independent per-gene-value effects plus `interaction`-scaled
    /// per-code noise, min-max scaled to `[0, 1]`.
    pub fn additive<R: Rng + ?Sized>(space: SearchSpace, interaction: f64, rng: &mut R) -> Result<Self> {
        let codes = space.enumerate(1 << 20)?;
        let effects: Vec<Vec<f64>> = (0..NUM_GENES)
            .map(|g| (0..gene_radix(g)).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let raw: Vec<f64> = codes
            .iter()
            .map(|a| {
                let genes = a.genes();
                let main: f64 = (0..NUM_GENES).filter(|&g| space.free[g]).map(|g| effects[g][genes[g]]).sum();
                main + interaction * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        Self::from_raw(space, &codes, &raw)
    }

    fn from_raw(space: SearchSpace, codes: &[ArchCode], raw: &[f64]) -> Result<Self> {
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::InvalidArgument("objective table is constant".into()));
        }
        let scores: HashMap<_, _> = codes.iter().zip(raw).map(|(a, r)| (*a, (r - lo) / (hi - lo))).collect();
        let optimum = *codes
            .iter()
            .zip(raw)
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty")
            .0;
        Ok(TableObjective { space, scores, optimum })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn optimum(&self) -> ArchCode {
        self.optimum
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn score(&self, a: &ArchCode) -> Result<f64> {
        self.scores
            .get(a)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("`{a}` is outside the tabulated space")))
    }
}
