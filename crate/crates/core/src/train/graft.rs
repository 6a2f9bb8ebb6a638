//! Entropy-weighted weight grafting between networks of one architecture.
//!
//! For each named parameter tensor `l`, receiver `M2` takes
//! `W2 ← α·W2 + (1-α)·W1` from donor `M1`, with
//! `α = clamp(A·atan(c·(H(W2) - H(W1))) + 0.5, 0, 1)`.

use serde::{Deserialize, Serialize};

use crate::blocks::ParamStore;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraftConfig {
    pub a: f64,
    pub c: f64,
    pub bins: usize,
    pub networks: usize,
}

impl Default for GraftConfig {
    fn default() -> Self {
        GraftConfig {
            a: 0.4,
            c: 1.0,
            bins: 10,
            networks: 3,
        }
    }
}

impl GraftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::InvalidArgument("grafting needs at least 2 entropy bins".into()));
        }
        if self.networks < 2 {
            return Err(Error::InvalidArgument("grafting needs at least 2 networks".into()));
        }
        if !self.a.is_finite() || !self.c.is_finite() {
            return Err(Error::InvalidArgument("grafting A and c must be finite".into()));
        }
        Ok(())
    }
}

/// Shannon entropy (nats) of a `bins`-bin histogram over `[min, max]` of the
/// values; 0 when all values are equal.
pub fn layer_entropy(w: &[f64], bins: usize) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::InvalidArgument("entropy of an empty layer".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("entropy needs at least one bin".into()));
    }
    let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Numerical("non-finite weight in entropy".into()));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &v in w {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = w.len() as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

/// Weight kept by the receiver.
pub fn graft_coefficient(h_receiver: f64, h_donor: f64, a: f64, c: f64) -> f64 {
    (a * (c * (h_receiver - h_donor)).atan() + 0.5).clamp(0.0, 1.0)
}

/// α chosen for one tensor of one receiver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraftRecord {
    pub receiver: usize,
    pub donor: usize,
    pub layer: String,
    pub alpha: f64,
}

fn check_same_layout(models: &[ParamStore]) -> Result<()> {
    let first = &models[0];
    for (i, m) in models.iter().enumerate().skip(1) {
        if m.num_tensors() != first.num_tensors() {
            return Err(Error::Arch(format!("network {i} has a different parameter set")));
        }
        for ((ka, ta), (kb, tb)) in first.params().zip(m.params()) {
            if ka != kb || ta.shape() != tb.shape() {
                return Err(Error::Arch(format!("network {i}: `{kb}` does not match `{ka}`")));
            }
        }
    }
    Ok(())
}

/// Ring grafting with a caller-supplied coefficient: network `i` receives
/// from network `i - 1` (the first from the last). Entropies and donor
/// weights are taken before any update.
pub fn graft_networks_with<F>(models: &mut [ParamStore], bins: usize, mut alpha: F) -> Result<Vec<GraftRecord>>
where
    F: FnMut(&str, f64, f64) -> f64,
{
    if models.len() < 2 {
        return Err(Error::InvalidArgument("grafting needs at least 2 networks".into()));
    }
    check_same_layout(models)?;
    let before: Vec<ParamStore> = models.to_vec();
    let k = models.len();
    let mut records = Vec::new();
    for recv in 0..k {
        let donor = (recv + k - 1) % k;
        let names: Vec<String> = before[recv].params().map(|(n, _)| n.clone()).collect();
        for name in names {
            let w2 = before[recv].param(&name).expect("same layout");
            let w1 = before[donor].param(&name).expect("same layout");
            let h2 = layer_entropy(w2.data(), bins)?;
            let h1 = layer_entropy(w1.data(), bins)?;
            let a = alpha(&name, h2, h1).clamp(0.0, 1.0);
            let out = models[recv].param_mut(&name).expect("same layout");
            for ((o, &x2), &x1) in out.data_mut().iter_mut().zip(w2.data()).zip(w1.data()) {
                *o = a * x2 + (1.0 - a) * x1;
            }
            records.push(GraftRecord {
                receiver: recv,
                donor,
                layer: name,
                alpha: a,
            });
        }
    }
    Ok(records)
}

/// Ring grafting with the entropy coefficient. Batch-norm running
/// statistics are left untouched.
pub fn graft_networks(models: &mut [ParamStore], cfg: &GraftConfig) -> Result<Vec<GraftRecord>> {
    cfg.validate()?;
    if models.len() != cfg.networks {
        return Err(Error::InvalidArgument(format!(
            "configured for {} networks, got {}",
            cfg.networks,
            models.len()
        )));
    }
    graft_networks_with(models, cfg.bins, |_, h2, h1| graft_coefficient(h2, h1, cfg.a, cfg.c))
}
