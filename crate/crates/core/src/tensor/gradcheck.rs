use super::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Compares reverse-mode gradients with central finite differences.
///
/// `build` receives a fresh graph and one leaf per entry of `params` and must
/// return a scalar node. Returns the maximum over all checked entries of
/// `|analytic - numeric| / max(1, |analytic|)`.
///
/// `max_per_tensor` bounds how many entries of each parameter are perturbed
/// (evenly spaced); `None` checks all of them.
pub fn grad_check<F>(params: &[Tensor], eps: f64, max_per_tensor: Option<usize>, build: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!("finite-difference step {eps} outside [1e-7, 1e-3]")));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.constant(p.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).data()[0])
    };

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, (p, &v)) in params.iter().zip(&vars).enumerate() {
        let zeros = Tensor::zeros(p.shape());
        let analytic = grads.get(v).unwrap_or(&zeros);
        let n = p.numel();
        let step = match max_per_tensor {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        for idx in (0..n).step_by(step) {
            let orig = p.data()[idx];
            work[pi].data_mut()[idx] = orig + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[idx] = orig - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data()[idx];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
