//! Frame-to-neighbour similarity features.

use super::params::Forward;
use crate::tensor::ops::{clamp_offset, dims5};
use crate::tensor::{Tensor, Var};
use crate::{Error, Result};

/// Normalised joint RGB histogram of every frame: `[N,T,H,W,3] -> [N,T,bins^3]`.
///
/// Channel values are expected in `[0, 1]`; a value `v` falls in bin
/// `min(bins - 1, floor(v * bins))`.
pub fn rgb_histograms(frames: &Tensor, bins: usize) -> Result<Tensor> {
    let [n, t, h, w, c] = dims5(frames, "rgb_histograms")?;
    if c != 3 {
        return Err(Error::shape("rgb_histograms", format!("expected 3 colour channels, got {c}")));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let k = bins * bins * bins;
    let quant = |v: f64| ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    let mut out = vec![0.0; n * t * k];
    let inc = 1.0 / (h * w) as f64;
    for (f, frame) in frames.data().chunks_exact(h * w * 3).enumerate() {
        let hist = &mut out[f * k..(f + 1) * k];
        for px in frame.chunks_exact(3) {
            let idx = (quant(px[0]) * bins + quant(px[1])) * bins + quant(px[2]);
            hist[idx] += inc;
        }
    }
    Tensor::new(vec![n, t, k], out)
}

/// Histogram intersection between frame `t` and frames `t + offset`
/// (indices clamped at the clip edges): `[N,T,H,W,3] -> [N,T,K]` with values
/// in `[0, 1]`.
pub fn rgb_histogram_similarity(frames: &Tensor, bins: usize, offsets: &[isize]) -> Result<Tensor> {
    if offsets.is_empty() {
        return Err(Error::InvalidArgument("empty similarity window".into()));
    }
    let hist = rgb_histograms(frames, bins)?;
    let (n, t, k) = (hist.shape()[0], hist.shape()[1], hist.shape()[2]);
    let hd = hist.data();
    let mut out = Vec::with_capacity(n * t * offsets.len());
    for ni in 0..n {
        for ti in 0..t {
            let a = &hd[(ni * t + ti) * k..(ni * t + ti + 1) * k];
            for &off in offsets {
                let tj = clamp_offset(ti, off, t);
                let b = &hd[(ni * t + tj) * k..(ni * t + tj + 1) * k];
                let s: f64 = a.iter().zip(b).map(|(x, y)| x.min(*y)).sum();
                out.push(s.min(1.0));
            }
        }
    }
    Tensor::new(vec![n, t, offsets.len()], out)
}

/// Learnable cosine similarity: features `[N,T,D]` are projected by the
/// parameter `proj: [D, P]` and compared with their temporal neighbours.
/// Output `[N,T,K]` in `[-1, 1]`; zero projections give 0.
pub fn learnable_cosine_similarity(fwd: &mut Forward<'_, '_>, features: Var, proj: &str, offsets: &[isize]) -> Result<Var> {
    let w = fwd.param(proj)?;
    let z = fwd.graph.linear(features, w, None)?;
    fwd.graph.cosine_window(z, offsets)
}
