//! Two-head frame-wise cross-entropy.
//!
//! `L = -Σ_i Σ_j [λ1·(y ln ŷ + (1-y) ln(1-ŷ)) + λ2·(z ln ẑ + (1-z) ln(1-ẑ))]`
//! with probabilities clamped to `[1e-7, 1 - 1e-7]`. Distillation uses the
//! same form with a teacher's probabilities as targets.

use serde::{Deserialize, Serialize};

use crate::tensor::ops::bce_sum;
use crate::tensor::{Graph, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 5.0,
            lambda2: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0 && self.lambda2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be positive, got λ1={} λ2={}",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }

    /// Both weights multiplied by `s`.
    pub fn scaled(self, s: f64) -> Self {
        LossWeights {
            lambda1: self.lambda1 * s,
            lambda2: self.lambda2 * s,
        }
    }
}

/// Summed two-head loss as a graph node.
pub fn loss_multihead(g: &mut Graph, y_hat: Var, z_hat: Var, y: &Tensor, z: &Tensor, w: LossWeights) -> Result<Var> {
    let ly = g.bce(y_hat, y.clone(), w.lambda1)?;
    let lz = g.bce(z_hat, z.clone(), w.lambda2)?;
    g.add(ly, lz)
}

/// [`loss_multihead`] against a teacher's soft predictions.
pub fn distill_loss(
    g: &mut Graph,
    y_hat: Var,
    z_hat: Var,
    teacher_y: &Tensor,
    teacher_z: &Tensor,
    w: LossWeights,
) -> Result<Var> {
    for t in [teacher_y, teacher_z] {
        if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("teacher outputs must be probabilities".into()));
        }
    }
    loss_multihead(g, y_hat, z_hat, teacher_y, teacher_z, w)
}

/// Value of the two-head loss without building a graph.
pub fn loss_value(y_hat: &Tensor, z_hat: &Tensor, y: &Tensor, z: &Tensor, w: LossWeights) -> Result<f64> {
    Ok(bce_sum(y_hat, y, w.lambda1)? + bce_sum(z_hat, z, w.lambda2)?)
}
