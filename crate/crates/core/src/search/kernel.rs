//! Exponential-mismatch Hamming kernel on architecture genes.

use serde::{Deserialize, Serialize};

use crate::blocks::ArchCode;
use crate::{Error, Result};

pub const NUM_GENES: usize = 7;

/// Kernel hyperparameters `θ = (σ_f², λ_1..λ_7, σ²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_var: f64,
    pub lambdas: [f64; NUM_GENES],
    pub noise_var: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            signal_var: 0.05,
            lambdas: [0.5; NUM_GENES],
            noise_var: 1e-3,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_var.is_finite() && self.signal_var > 0.0) {
            return Err(Error::InvalidArgument(format!("signal variance {} must be positive", self.signal_var)));
        }
        if let Some((g, l)) = self.lambdas.iter().enumerate().find(|(_, l)| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidArgument(format!("gene weight λ_{} = {l} must be finite and >= 0", g + 1)));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise variance {} must be >= 0", self.noise_var)));
        }
        Ok(())
    }

    /// `[ln σ_f², ln λ_1..ln λ_7, ln σ²]`.
    pub fn to_log(&self) -> [f64; NUM_GENES + 2] {
        let mut u = [0.0; NUM_GENES + 2];
        u[0] = self.signal_var.ln();
        for (d, l) in u[1..=NUM_GENES].iter_mut().zip(&self.lambdas) {
            *d = l.ln();
        }
        u[NUM_GENES + 1] = self.noise_var.ln();
        u
    }

    pub fn from_log(u: &[f64; NUM_GENES + 2]) -> Self {
        let mut lambdas = [0.0; NUM_GENES];
        for (l, v) in lambdas.iter_mut().zip(&u[1..=NUM_GENES]) {
            *l = v.exp();
        }
        KernelParams {
            signal_var: u[0].exp(),
            lambdas,
            noise_var: u[NUM_GENES + 1].exp(),
        }
    }
}

pub fn hamming_distance(a: &ArchCode, b: &ArchCode) -> usize {
    a.hamming(b)
}

/// Per-gene mismatch indicators.
pub fn mismatches(a: &[usize; NUM_GENES], b: &[usize; NUM_GENES]) -> [bool; NUM_GENES] {
    let mut m = [false; NUM_GENES];
    for ((slot, x), y) in m.iter_mut().zip(a).zip(b) {
        *slot = x != y;
    }
    m
}

pub(crate) fn kernel_genes(a: &[usize; NUM_GENES], b: &[usize; NUM_GENES], theta: &KernelParams) -> f64 {
    let s: f64 = mismatches(a, b)
        .iter()
        .zip(&theta.lambdas)
        .filter(|(m, _)| **m)
        .map(|(_, l)| l)
        .sum();
    theta.signal_var * (-s).exp()
}

/// `k(a, a') = σ_f² · exp(-Σ_g λ_g · [a_g ≠ a'_g])`.
pub fn hamming_kernel(a: &ArchCode, b: &ArchCode, theta: &KernelParams) -> Result<f64> {
    theta.validate()?;
    Ok(kernel_genes(&a.genes(), &b.genes(), theta))
}
