//! Gaussian-process regression over architecture codes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{kernel_genes, mismatches, KernelParams, NUM_GENES};
use crate::blocks::ArchCode;
use crate::{Error, Result};

/// Diagonal jitter tried in order when `K + σ²I` is not numerically positive definite.
pub const JITTER_LADDER: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Box for the likelihood search, as `(min, max)` in natural units.
pub const SIGNAL_BOUNDS: (f64, f64) = (1e-4, 10.0);
pub const LAMBDA_BOUNDS: (f64, f64) = (1e-3, 20.0);
pub const NOISE_BOUNDS: (f64, f64) = (1e-10, 1.0);

const NUM_THETA: usize = NUM_GENES + 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub arch: ArchCode,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMean {
    /// Mean of the observed scores.
    Empirical,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub restarts: usize,
    /// Ascent steps per restart.
    pub iterations: usize,
    pub prior_mean: PriorMean,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            restarts: 8,
            iterations: 60,
            prior_mean: PriorMean::Empirical,
        }
    }
}

/// Log marginal likelihood and its gradient in `[ln σ_f², ln λ_g.., ln σ²]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Likelihood {
    pub value: f64,
    pub gradient: [f64; NUM_THETA],
    pub jitter: f64,
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

fn signal_matrix(genes: &[[usize; NUM_GENES]], theta: &KernelParams) -> DMatrix<f64> {
    let n = genes.len();
    DMatrix::from_fn(n, n, |i, j| kernel_genes(&genes[i], &genes[j], theta))
}

fn factorize(kf: &DMatrix<f64>, noise: f64, y: &DVector<f64>) -> Result<Factor> {
    for &jitter in &JITTER_LADDER {
        let mut k = kf.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += noise + jitter;
        }
        if let Some(chol) = Cholesky::new(k) {
            let alpha = chol.solve(y);
            if alpha.iter().all(|v| v.is_finite()) {
                return Ok(Factor { chol, alpha, jitter });
            }
        }
    }
    Err(Error::Numerical(format!(
        "kernel matrix not positive definite even with jitter {:e}",
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

fn resolve_mean(prior: PriorMean, scores: &[f64]) -> f64 {
    match prior {
        PriorMean::Fixed(m) => m,
        PriorMean::Empirical if scores.is_empty() => 0.0,
        PriorMean::Empirical => scores.iter().sum::<f64>() / scores.len() as f64,
    }
}

fn likelihood(genes: &[[usize; NUM_GENES]], y: &DVector<f64>, theta: &KernelParams) -> Result<Likelihood> {
    let n = genes.len();
    let kf = signal_matrix(genes, theta);
    let f = factorize(&kf, theta.noise_var, y)?;
    let logdet: f64 = f.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let value = -0.5 * y.dot(&f.alpha) - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let w = &f.alpha * f.alpha.transpose() - f.chol.inverse();
    let mut gradient = [0.0; NUM_THETA];
    for i in 0..n {
        for j in 0..n {
            let wk = w[(i, j)] * kf[(i, j)];
            gradient[0] += 0.5 * wk;
            for (g, m) in mismatches(&genes[i], &genes[j]).iter().enumerate() {
                if *m {
                    gradient[1 + g] -= 0.5 * wk * theta.lambdas[g];
                }
            }
        }
        gradient[NUM_THETA - 1] += 0.5 * theta.noise_var * w[(i, i)];
    }
    Ok(Likelihood {
        value,
        gradient,
        jitter: f.jitter,
    })
}

/// Log marginal likelihood of the observations under `theta`, with the prior
/// mean resolved from `prior`.
pub fn log_marginal_likelihood(observations: &[Observation], theta: &KernelParams, prior: PriorMean) -> Result<Likelihood> {
    theta.validate()?;
    if observations.is_empty() {
        return Err(Error::InvalidArgument("likelihood of zero observations".into()));
    }
    let scores: Vec<f64> = observations.iter().map(|o| o.score).collect();
    let mu0 = resolve_mean(prior, &scores);
    let genes: Vec<_> = observations.iter().map(|o| o.arch.genes()).collect();
    let y = DVector::from_iterator(scores.len(), scores.iter().map(|s| s - mu0));
    likelihood(&genes, &y, theta)
}

/// A GP conditioned on observations with fixed hyperparameters.
#[derive(Clone, Debug)]
pub struct GpModel {
    observations: Vec<Observation>,
    genes: Vec<[usize; NUM_GENES]>,
    theta: KernelParams,
    mean: f64,
    factor: Option<(Cholesky<f64, Dyn>, DVector<f64>)>,
    jitter: f64,
}

impl GpModel {
    /// The unconditioned prior.
    pub fn prior(theta: KernelParams, mean: f64) -> Result<Self> {
        theta.validate()?;
        Ok(GpModel {
            observations: Vec::new(),
            genes: Vec::new(),
            theta,
            mean,
            factor: None,
            jitter: 0.0,
        })
    }

    /// Conditions on `observations` without touching `theta`.
    pub fn condition(observations: &[Observation], theta: KernelParams, prior: PriorMean) -> Result<Self> {
        theta.validate()?;
        if let Some(o) = observations.iter().find(|o| !o.score.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite score for {}", o.arch)));
        }
        let scores: Vec<f64> = observations.iter().map(|o| o.score).collect();
        let mean = resolve_mean(prior, &scores);
        if observations.is_empty() {
            return Self::prior(theta, mean);
        }
        let genes: Vec<_> = observations.iter().map(|o| o.arch.genes()).collect();
        let y = DVector::from_iterator(scores.len(), scores.iter().map(|s| s - mean));
        let f = factorize(&signal_matrix(&genes, &theta), theta.noise_var, &y)?;
        Ok(GpModel {
            observations: observations.to_vec(),
            genes,
            theta,
            mean,
            factor: Some((f.chol, f.alpha)),
            jitter: f.jitter,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn theta(&self) -> &KernelParams {
        &self.theta
    }

    pub fn prior_mean(&self) -> f64 {
        self.mean
    }

    /// Diagonal jitter that made the factorisation succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean and variance of the latent score at `arch`.
    pub fn posterior(&self, arch: &ArchCode) -> (f64, f64) {
        let q = arch.genes();
        let prior_var = self.theta.signal_var;
        let Some((chol, alpha)) = &self.factor else {
            return (self.mean, prior_var);
        };
        let ks = DVector::from_iterator(self.genes.len(), self.genes.iter().map(|g| kernel_genes(g, &q, &self.theta)));
        let mean = self.mean + ks.dot(alpha);
        let v = chol.l_dirty().solve_lower_triangular(&ks).expect("non-singular factor");
        (mean, (prior_var - v.norm_squared()).max(0.0))
    }
}

fn clamp_log(u: &mut [f64; NUM_THETA]) {
    let b = |(lo, hi): (f64, f64)| (lo.ln(), hi.ln());
    let (s, l, n) = (b(SIGNAL_BOUNDS), b(LAMBDA_BOUNDS), b(NOISE_BOUNDS));
    u[0] = u[0].clamp(s.0, s.1);
    for v in &mut u[1..=NUM_GENES] {
        *v = v.clamp(l.0, l.1);
    }
    u[NUM_THETA - 1] = u[NUM_THETA - 1].clamp(n.0, n.1);
}

fn random_start<R: Rng + ?Sized>(rng: &mut R) -> [f64; NUM_THETA] {
    let mut u = [0.0; NUM_THETA];
    let mut draw = |(lo, hi): (f64, f64)| rng.gen_range(lo.ln()..=hi.ln());
    u[0] = draw(SIGNAL_BOUNDS);
    for v in &mut u[1..=NUM_GENES] {
        *v = draw(LAMBDA_BOUNDS);
    }
    u[NUM_THETA - 1] = draw((1e-6, 1e-1));
    u
}

/// Projected gradient ascent in log space with an adaptive step.
fn ascend(
    genes: &[[usize; NUM_GENES]],
    y: &DVector<f64>,
    mut u: [f64; NUM_THETA],
    iterations: usize,
) -> Option<([f64; NUM_THETA], f64)> {
    clamp_log(&mut u);
    let mut cur = likelihood(genes, y, &KernelParams::from_log(&u)).ok()?;
    let mut step = 0.5;
    for _ in 0..iterations {
        let gmax = cur.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < 1e-9 || step < 1e-4 {
            break;
        }
        let mut next = u;
        for (v, g) in next.iter_mut().zip(&cur.gradient) {
            *v += step * g / gmax;
        }
        clamp_log(&mut next);
        match likelihood(genes, y, &KernelParams::from_log(&next)) {
            Ok(l) if l.value > cur.value => {
                u = next;
                cur = l;
                step *= 1.3;
            }
            _ => step *= 0.5,
        }
    }
    Some((u, cur.value))
}

/// Fits the kernel hyperparameters by multi-start ascent on the log marginal
/// likelihood. The first start is `theta0`; the result never scores below it.
pub fn gp_fit<R: Rng + ?Sized>(
    observations: &[Observation],
    theta0: &KernelParams,
    cfg: &GpConfig,
    rng: &mut R,
) -> Result<GpModel> {
    if observations.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "fitting needs at least 2 observations, got {}",
            observations.len()
        )));
    }
    theta0.validate()?;
    let scores: Vec<f64> = observations.iter().map(|o| o.score).collect();
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score among observations".into()));
    }
    let mu0 = resolve_mean(cfg.prior_mean, &scores);
    let genes: Vec<_> = observations.iter().map(|o| o.arch.genes()).collect();
    let y = DVector::from_iterator(scores.len(), scores.iter().map(|s| s - mu0));

    let mut best: Option<(KernelParams, f64)> = likelihood(&genes, &y, theta0).ok().map(|l| (*theta0, l.value));
    let starts = std::iter::once(theta0.to_log()).chain((1..cfg.restarts.max(1)).map(|_| random_start(rng)));
    for u0 in starts.collect::<Vec<_>>() {
        if let Some((u, v)) = ascend(&genes, &y, u0, cfg.iterations) {
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((KernelParams::from_log(&u), v));
            }
        }
    }
    let (theta, _) = best.ok_or_else(|| Error::Numerical("no hyperparameter setting gave a usable kernel".into()))?;
    GpModel::condition(observations, theta, PriorMean::Fixed(mu0))
}
