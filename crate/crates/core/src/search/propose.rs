//! Acquisition and batch proposals.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::gp::GpModel;
use super::space::SearchSpace;
use crate::blocks::ArchCode;
use crate::{Error, Result};

/// Posterior probability that `arch` scores above `best`:
/// `Φ((μ - best) / sqrt(σ² + 1e-12))`.
pub fn acquisition(model: &GpModel, arch: &ArchCode, best: f64) -> f64 {
    let (mean, var) = model.posterior(arch);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    std_normal.cdf((mean - best) / (var + 1e-12).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    ProbabilityOfImprovement,
    /// Every candidate ranks equally, which reduces the search to uniform
    /// sampling without replacement.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposeOptions {
    /// Random unexplored codes ranked per proposal.
    pub pool_size: usize,
    pub acquisition: AcquisitionKind,
}

impl Default for ProposeOptions {
    fn default() -> Self {
        ProposeOptions {
            pool_size: 10_000,
            acquisition: AcquisitionKind::ProbabilityOfImprovement,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub codes: Vec<ArchCode>,
    /// Acquisition value per code; `None` for random proposals.
    pub acquisitions: Vec<Option<f64>>,
    /// Fewer unexplored codes remained than requested.
    pub exhausted: bool,
}

fn candidate_pool<R: Rng + ?Sized>(
    space: &SearchSpace,
    explored: &HashSet<ArchCode>,
    pool_size: usize,
    rng: &mut R,
) -> Result<Vec<ArchCode>> {
    let unexplored = space.size().saturating_sub(explored.iter().filter(|a| space.contains(a)).count() as u64);
    let mut pool = if unexplored <= pool_size as u64 {
        let mut all = space.enumerate(pool_size as u64 + explored.len() as u64)?;
        all.retain(|a| !explored.contains(a));
        all
    } else {
        let mut seen = HashSet::with_capacity(pool_size);
        let mut pool = Vec::with_capacity(pool_size);
        let mut attempts = 0usize;
        while pool.len() < pool_size && attempts < pool_size.saturating_mul(50) {
            attempts += 1;
            let a = space.sample(rng);
            if !explored.contains(&a) && seen.insert(a) {
                pool.push(a);
            }
        }
        pool
    };
    pool.shuffle(rng);
    Ok(pool)
}

/// Up to `population` distinct unexplored codes. Without a model the batch
/// is uniform; with one, candidates are ranked by acquisition against the
/// best observed score.
pub fn propose_batch<R: Rng + ?Sized>(
    model: Option<&GpModel>,
    space: &SearchSpace,
    population: usize,
    explored: &HashSet<ArchCode>,
    opts: &ProposeOptions,
    rng: &mut R,
) -> Result<Proposal> {
    if population == 0 {
        return Err(Error::InvalidArgument("population must be positive".into()));
    }
    if opts.pool_size < population {
        return Err(Error::InvalidArgument(format!(
            "candidate pool {} smaller than population {population}",
            opts.pool_size
        )));
    }
    let pool = candidate_pool(space, explored, opts.pool_size, rng)?;
    let exhausted = pool.len() < population;
    let ranked: Vec<(ArchCode, Option<f64>)> = match (model, opts.acquisition) {
        (Some(m), AcquisitionKind::ProbabilityOfImprovement) if !m.observations().is_empty() => {
            let best = m.observations().iter().map(|o| o.score).fold(f64::NEG_INFINITY, f64::max);
            let mut scored: Vec<_> = pool.into_iter().map(|a| (a, Some(acquisition(m, &a, best)))).collect();
            scored.sort_by(|x, y| y.1.partial_cmp(&x.1).expect("finite acquisition"));
            scored
        }
        (Some(_), AcquisitionKind::Constant) => pool.into_iter().map(|a| (a, Some(1.0))).collect(),
        _ => pool.into_iter().map(|a| (a, None)).collect(),
    };
    let (codes, acquisitions) = ranked.into_iter().take(population).unzip();
    Ok(Proposal {
        codes,
        acquisitions,
        exhausted,
    })
}
