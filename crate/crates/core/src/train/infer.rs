//! Whole-video inference, batch-norm recalibration and candidate scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trainer::SuperNet;
use crate::annotation::{FrameContainer, ShotAnnotation};
use crate::blocks::{ArchCode, Forward, ForwardOpts, Model};
use crate::metrics::{self, DetectedBoundaries, EvalReport};
use crate::tensor::{Graph, Tensor};
use crate::{Error, Result};

/// A held-out video at network resolution with its annotation.
#[derive(Clone, Debug)]
pub struct EvalVideo {
    /// `[1, T, H, W, 3]`, values in `[0, 1]`.
    pub frames: Tensor,
    pub annotation: ShotAnnotation,
}

impl EvalVideo {
    pub fn from_container(video: &FrameContainer, annotation: ShotAnnotation, height: usize, width: usize) -> Result<Self> {
        Ok(EvalVideo {
            frames: video.to_tensor(0..video.frames(), height, width)?,
            annotation,
        })
    }
}

/// Sliding-window settings: windows of `window` frames overlap so that only
/// the central `window - 2·context` frames of each are kept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window: usize,
    pub context: usize,
    /// Windows evaluated per forward pass.
    pub batch: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window: 60,
            context: 15,
            batch: 8,
        }
    }
}

/// Per-frame `(ŷ, ẑ)` for a whole `[1, T, H, W, C]` video in eval mode.
/// Frames beyond either end are replaced by the edge frame.
pub fn predict_video(model: &Model, frames: &Tensor, wc: &WindowConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let (t, h, w, c) = match *frames.shape() {
        [1, t, h, w, c] => (t, h, w, c),
        ref s => return Err(Error::shape("predict_video", format!("expected [1,T,H,W,C], got {s:?}"))),
    };
    if wc.window <= 2 * wc.context || wc.batch == 0 {
        return Err(Error::InvalidArgument(format!(
            "window {} leaves no frames after {} context frames per side",
            wc.window, wc.context
        )));
    }
    let keep = wc.window - 2 * wc.context;
    let fl = h * w * c;
    let src = frames.data();
    let starts: Vec<usize> = (0..t).step_by(keep).collect();
    let mut y = vec![0.0; t];
    let mut z = vec![0.0; t];
    for chunk in starts.chunks(wc.batch) {
        let mut data = Vec::with_capacity(chunk.len() * wc.window * fl);
        for &s in chunk {
            for i in 0..wc.window {
                let idx = (s + i).saturating_sub(wc.context).min(t - 1);
                data.extend_from_slice(&src[idx * fl..(idx + 1) * fl]);
            }
        }
        let batch = Tensor::new(vec![chunk.len(), wc.window, h, w, c], data)?;
        let (py, pz) = model.predict(&batch)?;
        for (k, &s) in chunk.iter().enumerate() {
            for i in 0..keep {
                let f = s + i;
                if f >= t {
                    break;
                }
                y[f] = py.data()[k * wc.window + wc.context + i];
                z[f] = pz.data()[k * wc.window + wc.context + i];
            }
        }
    }
    Ok((y, z))
}

/// Replaces every batch-norm running statistic with the average batch
/// statistics over `batches`.
pub fn recalibrate_bn(model: &mut Model, batches: &[Tensor]) -> Result<()> {
    if batches.is_empty() {
        return Err(Error::InvalidArgument("recalibration needs at least one batch".into()));
    }
    let mut sums: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for b in batches {
        let mut g = Graph::new();
        let mut fwd = Forward::new(&mut g, &model.store, ForwardOpts::calibrate());
        model.forward(&mut fwd, b)?;
        for u in fwd.into_bn_updates() {
            let e = sums
                .entry(u.prefix)
                .or_insert_with(|| (vec![0.0; u.mean.len()], vec![0.0; u.var.len()]));
            e.0.iter_mut().zip(&u.mean).for_each(|(a, v)| *a += v);
            e.1.iter_mut().zip(&u.var).for_each(|(a, v)| *a += v);
        }
    }
    let n = batches.len() as f64;
    for (prefix, (m, v)) in sums {
        let len = m.len();
        model
            .store
            .insert_buffer(format!("{prefix}.mean"), Tensor::new(vec![len], m.into_iter().map(|x| x / n).collect())?);
        model
            .store
            .insert_buffer(format!("{prefix}.var"), Tensor::new(vec![len], v.into_iter().map(|x| x / n).collect())?);
    }
    Ok(())
}

/// Decoded single-head detections per video.
pub fn detect(model: &Model, videos: &[EvalVideo], wc: &WindowConfig, threshold: f64) -> Result<Vec<DetectedBoundaries>> {
    videos
        .iter()
        .map(|v| {
            let (y, _) = predict_video(model, &v.frames, wc)?;
            metrics::predictions_to_boundaries(&y, threshold)
        })
        .collect()
}

/// Corpus-level scores at `threshold`.
pub fn evaluate(model: &Model, videos: &[EvalVideo], wc: &WindowConfig, threshold: f64) -> Result<EvalReport> {
    let dets = detect(model, videos, wc, threshold)?;
    let reports: Vec<EvalReport> = dets
        .iter()
        .zip(videos)
        .map(|(d, v)| metrics::score(&d.frames(), &v.annotation))
        .collect();
    Ok(EvalReport {
        threshold: Some(threshold),
        ..EvalReport::merge(&reports)
    })
}

/// What a search maximises.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SearchMetric {
    F1 { threshold: f64 },
    PrecisionAtRecall { recall: f64 },
}

impl Default for SearchMetric {
    fn default() -> Self {
        SearchMetric::F1 { threshold: 0.5 }
    }
}

/// Scores SuperNet candidates on validation videos after recalibrating their
/// batch-norm statistics on fixed training clips.
#[derive(Clone, Debug)]
pub struct CandidateEvaluator {
    pub calibration: Vec<Tensor>,
    pub videos: Vec<EvalVideo>,
    pub window: WindowConfig,
    pub metric: SearchMetric,
}

impl CandidateEvaluator {
    pub fn score_model(&self, model: &Model) -> Result<f64> {
        match self.metric {
            SearchMetric::F1 { threshold } => Ok(evaluate(model, &self.videos, &self.window, threshold)?.f1),
            SearchMetric::PrecisionAtRecall { recall } => {
                // Keep every local peak so the sweep sees low-confidence detections.
                let dets = detect(model, &self.videos, &self.window, 1e-3)?;
                let corpus: Vec<_> = dets.into_iter().zip(self.videos.iter().map(|v| v.annotation.clone())).collect();
                Ok(metrics::precision_at_recall(&corpus, recall)?.precision)
            }
        }
    }

    pub fn evaluate(&self, supernet: &SuperNet, arch: &ArchCode) -> Result<f64> {
        let mut model = supernet.extract(arch)?;
        if !self.calibration.is_empty() {
            recalibrate_bn(&mut model, &self.calibration)?;
        }
        self.score_model(&model)
    }
}
