//! Boundary decoding and tolerance-based scoring.
//!
//! A detection at frame `d` matches a hard cut at `e` when `|d - e| <= 2`,
//! and a gradual span `[lo, hi]` when `lo - 2 <= d <= max(hi, lo + 2)`.
//! Matching is one-to-one.

use serde::{Deserialize, Serialize};

use crate::annotation::{ShotAnnotation, TransitionKind, TransitionSpan};
use crate::{Error, Result};

pub const TOLERANCE: u64 = 2;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub frame: u64,
    pub confidence: f64,
}

/// Detections ordered by strictly increasing frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectedBoundaries {
    pub boundaries: Vec<Boundary>,
}

impl DetectedBoundaries {
    pub fn new(mut boundaries: Vec<Boundary>) -> Result<Self> {
        boundaries.sort_by_key(|b| b.frame);
        if boundaries.windows(2).any(|w| w[0].frame == w[1].frame) {
            return Err(Error::InvalidArgument("duplicate boundary frame".into()));
        }
        if boundaries.iter().any(|b| !(0.0..=1.0).contains(&b.confidence)) {
            return Err(Error::InvalidArgument("boundary confidence outside [0, 1]".into()));
        }
        Ok(DetectedBoundaries { boundaries })
    }

    pub fn frames(&self) -> Vec<u64> {
        self.boundaries.iter().map(|b| b.frame).collect()
    }

    /// Detections with confidence at least `threshold`.
    pub fn at_threshold(&self, threshold: f64) -> Vec<u64> {
        self.boundaries
            .iter()
            .filter(|b| b.confidence >= threshold)
            .map(|b| b.frame)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }
}

/// Collapses every run of frames with `p >= threshold` to one boundary at the
/// run's first maximum.
pub fn predictions_to_boundaries(p: &[f64], threshold: f64) -> Result<DetectedBoundaries> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1)")));
    }
    let mut out = Vec::new();
    let mut run: Option<Boundary> = None;
    for (t, &v) in p.iter().enumerate() {
        if v >= threshold {
            match &mut run {
                Some(b) if v > b.confidence => {
                    b.frame = t as u64;
                    b.confidence = v;
                }
                Some(_) => {}
                None => {
                    run = Some(Boundary {
                        frame: t as u64,
                        confidence: v,
                    })
                }
            }
        } else if let Some(b) = run.take() {
            out.push(b);
        }
    }
    out.extend(run);
    for b in &mut out {
        b.confidence = b.confidence.clamp(0.0, 1.0);
    }
    Ok(DetectedBoundaries { boundaries: out })
}

/// Inclusive frame window in which a detection matches `span`.
pub fn match_window(span: &TransitionSpan) -> (u64, u64) {
    match span.kind {
        TransitionKind::Hard => (span.lo.saturating_sub(TOLERANCE), span.lo + TOLERANCE),
        TransitionKind::Gradual => (span.lo.saturating_sub(TOLERANCE), span.hi.max(span.lo + TOLERANCE)),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `(detection index, transition index)` pairs.
    pub pairs: Vec<(usize, usize)>,
}

/// One-to-one matching. Detections are taken left to right; each claims the
/// unmatched transition whose window contains it and closes first. For
/// points against intervals this greedy order yields a maximum matching.
pub fn match_boundaries(detected: &[u64], truth: &[TransitionSpan]) -> Matching {
    let mut order: Vec<usize> = (0..detected.len()).collect();
    order.sort_by_key(|&i| (detected[i], i));
    let windows: Vec<(u64, u64)> = truth.iter().map(match_window).collect();
    let mut used = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for i in order {
        let d = detected[i];
        let pick = windows
            .iter()
            .enumerate()
            .filter(|&(j, &(lo, hi))| !used[j] && lo <= d && d <= hi)
            .min_by_key(|&(j, &(_, hi))| (hi, j))
            .map(|(j, _)| j);
        if let Some(j) = pick {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    let tp = pairs.len();
    Matching {
        tp,
        fp: detected.len() - tp,
        fn_: truth.len() - tp,
        pairs,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default)]
    pub threshold: Option<f64>,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EvalReport {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            threshold: None,
        }
    }

    /// Sums counts over several reports and recomputes the ratios.
    pub fn merge(reports: &[EvalReport]) -> Self {
        let (tp, fp, fn_) = reports
            .iter()
            .fold((0, 0, 0), |(a, b, c), r| (a + r.tp, b + r.fp, c + r.fn_));
        Self::from_counts(tp, fp, fn_)
    }
}

pub fn score(detected: &[u64], annotation: &ShotAnnotation) -> EvalReport {
    let m = match_boundaries(detected, &annotation.transitions());
    EvalReport::from_counts(m.tp, m.fp, m.fn_)
}

/// Decodes per-frame probabilities at `threshold` and scores them.
pub fn score_predictions(p: &[f64], annotation: &ShotAnnotation, threshold: f64) -> Result<EvalReport> {
    let det = predictions_to_boundaries(p, threshold)?;
    Ok(EvalReport {
        threshold: Some(threshold),
        ..score(&det.frames(), annotation)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallStatus {
    Reached,
    /// No threshold reaches the target; the lowest threshold is reported.
    Unreachable,
    /// The chosen threshold keeps no detections, so precision is 0 by
    /// convention.
    NoDetections,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAtRecall {
    pub precision: f64,
    pub recall: f64,
    /// Detections with confidence `>= threshold` are kept; `+inf` keeps none.
    pub threshold: f64,
    pub status: RecallStatus,
    pub report: EvalReport,
}

/// Corpus-level report when only detections with confidence `>= threshold`
/// are kept.
pub fn corpus_report(corpus: &[(DetectedBoundaries, ShotAnnotation)], threshold: f64) -> EvalReport {
    let reports: Vec<EvalReport> = corpus.iter().map(|(d, a)| score(&d.at_threshold(threshold), a)).collect();
    EvalReport {
        threshold: Some(threshold),
        ..EvalReport::merge(&reports)
    }
}

/// Precision at the highest confidence threshold whose corpus recall reaches
/// `target_recall`.
pub fn precision_at_recall(
    corpus: &[(DetectedBoundaries, ShotAnnotation)],
    target_recall: f64,
) -> Result<PrecisionAtRecall> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("precision at recall needs at least one video".into()));
    }
    if !(0.0..=1.0).contains(&target_recall) {
        return Err(Error::InvalidArgument(format!("target recall {target_recall} outside [0, 1]")));
    }
    let mut thresholds: Vec<f64> = corpus
        .iter()
        .flat_map(|(d, _)| d.boundaries.iter().map(|b| b.confidence))
        .collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds.insert(0, f64::INFINITY);

    let mut last = None;
    for &th in &thresholds {
        let report = corpus_report(corpus, th);
        if report.recall >= target_recall {
            let status = if report.tp + report.fp == 0 {
                RecallStatus::NoDetections
            } else {
                RecallStatus::Reached
            };
            return Ok(PrecisionAtRecall {
                precision: report.precision,
                recall: report.recall,
                threshold: th,
                status,
                report,
            });
        }
        last = Some((th, report));
    }
    let (threshold, report) = last.expect("at least the +inf threshold");
    Ok(PrecisionAtRecall {
        precision: report.precision,
        recall: report.recall,
        threshold,
        status: RecallStatus::Unreachable,
        report,
    })
}
