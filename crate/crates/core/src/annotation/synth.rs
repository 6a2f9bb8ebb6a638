//! Synthetic annotated videos: each shot is a solid colour under a drifting
//! Gaussian texture; consecutive shots meet in a hard cut or a linear
//! cross-fade.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::container::FrameContainer;
use super::shots::{Shot, ShotAnnotation, TransitionKind, TransitionSpan};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Number of shots; ignored when `total_frames` is set.
    pub shots: usize,
    /// Generate shots until the video has exactly this many frames.
    pub total_frames: Option<usize>,
    pub mean_shot_len: usize,
    pub min_shot_len: usize,
    /// Probability that a transition is a cross-fade.
    pub gradual_prob: f64,
    pub fade_min: usize,
    pub fade_max: usize,
    pub height: usize,
    pub width: usize,
    /// Standard deviation of the per-pixel texture, in `[0, 1]` units.
    pub texture_std: f64,
    /// Largest texture drift, pixels per frame along each axis.
    pub max_drift: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            shots: 5,
            total_frames: None,
            mean_shot_len: 65,
            min_shot_len: 16,
            gradual_prob: 0.3,
            fade_min: 4,
            fade_max: 12,
            height: 27,
            width: 48,
            texture_std: 0.08,
            max_drift: 0.5,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synth spec: {m}")));
        if self.total_frames.is_none() && self.shots == 0 {
            return bad("at least one shot is required");
        }
        if self.total_frames == Some(0) {
            return bad("total_frames must be positive");
        }
        if self.min_shot_len == 0 || self.mean_shot_len < self.min_shot_len {
            return bad("need 1 <= min_shot_len <= mean_shot_len");
        }
        if !(0.0..=1.0).contains(&self.gradual_prob) {
            return bad("gradual_prob must be in [0, 1]");
        }
        if self.fade_min == 0 || self.fade_max < self.fade_min {
            return bad("need 1 <= fade_min <= fade_max");
        }
        if self.height == 0 || self.width == 0 {
            return bad("frame size must be positive");
        }
        Ok(())
    }
}

/// Visual style of one shot.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotStyle {
    /// Base colour in `[0, 1]`.
    pub color: [f64; 3],
    /// Texture, `height × width × 3`, wrapped as it drifts.
    pub texture: Vec<f64>,
    /// Drift in pixels per frame, `(dy, dx)`.
    pub drift: (f64, f64),
}

/// A generated shot and the number of cross-fade frames that follow it
/// (0 for a hard cut; always 0 for the last shot).
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedShot {
    pub len: usize,
    pub fade_after: usize,
    pub style: ShotStyle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPlan {
    pub height: usize,
    pub width: usize,
    pub shots: Vec<PlannedShot>,
}

impl SynthPlan {
    pub fn total_frames(&self) -> usize {
        self.shots.iter().map(|s| s.len + s.fade_after).sum()
    }

    pub fn annotation(&self) -> ShotAnnotation {
        let mut shots = Vec::with_capacity(self.shots.len());
        let mut t = 0u64;
        for s in &self.shots {
            shots.push(Shot {
                begin: t,
                end: t + s.len as u64 - 1,
            });
            t += (s.len + s.fade_after) as u64;
        }
        ShotAnnotation::new(shots).expect("plan lays shots out in order")
    }

    /// The transitions the plan was built with.
    pub fn transitions(&self) -> Vec<TransitionSpan> {
        let mut out = Vec::new();
        let mut t = 0u64;
        for s in &self.shots[..self.shots.len().saturating_sub(1)] {
            let end = t + s.len as u64 - 1;
            out.push(if s.fade_after == 0 {
                TransitionSpan::hard(end)
            } else {
                TransitionSpan {
                    kind: TransitionKind::Gradual,
                    lo: end,
                    hi: end + s.fade_after as u64,
                }
            });
            t += (s.len + s.fade_after) as u64;
        }
        out
    }

    pub fn render(&self) -> FrameContainer {
        let (h, w) = (self.height, self.width);
        let mut data = Vec::with_capacity(self.total_frames() * h * w * 3);
        let mut buf = vec![0.0; h * w * 3];
        let mut other = vec![0.0; h * w * 3];
        for (k, s) in self.shots.iter().enumerate() {
            for tau in 0..s.len {
                paint(&s.style, tau, h, w, &mut buf);
                push_bytes(&mut data, &buf);
            }
            if s.fade_after > 0 {
                let next = &self.shots[k + 1].style;
                for i in 1..=s.fade_after {
                    let wgt = i as f64 / (s.fade_after + 1) as f64;
                    paint(&s.style, s.len - 1 + i, h, w, &mut buf);
                    paint(next, 0, h, w, &mut other);
                    for (a, b) in buf.iter_mut().zip(&other) {
                        *a = (1.0 - wgt) * *a + wgt * b;
                    }
                    push_bytes(&mut data, &buf);
                }
            }
        }
        FrameContainer::new(self.total_frames(), h, w, data).expect("sized by construction")
    }
}

fn push_bytes(out: &mut Vec<u8>, frame: &[f64]) {
    out.extend(frame.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
}

fn paint(style: &ShotStyle, tau: usize, h: usize, w: usize, out: &mut [f64]) {
    let oy = (style.drift.0 * tau as f64).floor() as i64;
    let ox = (style.drift.1 * tau as f64).floor() as i64;
    for y in 0..h {
        let sy = (y as i64 + oy).rem_euclid(h as i64) as usize;
        for x in 0..w {
            let sx = (x as i64 + ox).rem_euclid(w as i64) as usize;
            for c in 0..3 {
                out[(y * w + x) * 3 + c] = style.color[c] + style.texture[(sy * w + sx) * 3 + c];
            }
        }
    }
}

fn random_style<R: Rng + ?Sized>(rng: &mut R, spec: &SynthSpec, prev: Option<&[f64; 3]>) -> ShotStyle {
    let color = loop {
        let c = [0.0; 3].map(|_: f64| rng.gen_range(0.1..0.9));
        match prev {
            Some(p) if c.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() < 0.6 => continue,
            _ => break c,
        }
    };
    let noise = Normal::new(0.0, spec.texture_std.max(0.0)).expect("finite std");
    let texture = (0..spec.height * spec.width * 3).map(|_| noise.sample(rng)).collect();
    let drift = (
        rng.gen_range(-spec.max_drift..=spec.max_drift),
        rng.gen_range(-spec.max_drift..=spec.max_drift),
    );
    ShotStyle { color, texture, drift }
}

/// Draws a shot/transition layout for `spec`.
pub fn synth_plan<R: Rng + ?Sized>(rng: &mut R, spec: &SynthSpec) -> Result<SynthPlan> {
    spec.validate()?;
    let max_len = 2 * spec.mean_shot_len - spec.min_shot_len;
    let draw_len = |rng: &mut R| rng.gen_range(spec.min_shot_len..=max_len);
    let mut shots: Vec<PlannedShot> = Vec::new();
    let mut used = 0usize;
    loop {
        let style = random_style(rng, spec, shots.last().map(|s| &s.style.color));
        let mut len = draw_len(rng);
        let fade = if rng.gen_bool(spec.gradual_prob) {
            rng.gen_range(spec.fade_min..=spec.fade_max)
        } else {
            0
        };
        let last = match spec.total_frames {
            Some(total) => {
                let left = total - used;
                if len + fade + spec.min_shot_len > left {
                    len = left;
                    true
                } else {
                    false
                }
            }
            None => shots.len() + 1 == spec.shots,
        };
        let fade_after = if last { 0 } else { fade };
        used += len + fade_after;
        shots.push(PlannedShot { len, fade_after, style });
        if last {
            break;
        }
    }
    Ok(SynthPlan {
        height: spec.height,
        width: spec.width,
        shots,
    })
}

/// A random video and its ground-truth annotation.
pub fn synth_video<R: Rng + ?Sized>(rng: &mut R, spec: &SynthSpec) -> Result<(FrameContainer, ShotAnnotation)> {
    let plan = synth_plan(rng, spec)?;
    Ok((plan.render(), plan.annotation()))
}

/// A plan with explicit shot lengths and fades, random styles.
pub fn synth_plan_from_layout<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &SynthSpec,
    lens: &[usize],
    fades: &[usize],
) -> Result<SynthPlan> {
    if lens.is_empty() || fades.len() + 1 != lens.len() || lens.contains(&0) {
        return Err(Error::InvalidArgument(
            "layout needs one or more positive shot lengths and one fade per transition".into(),
        ));
    }
    let mut shots: Vec<PlannedShot> = Vec::with_capacity(lens.len());
    for (i, &len) in lens.iter().enumerate() {
        let style = random_style(rng, spec, shots.last().map(|s| &s.style.color));
        shots.push(PlannedShot {
            len,
            fade_after: fades.get(i).copied().unwrap_or(0),
            style,
        });
    }
    Ok(SynthPlan {
        height: spec.height,
        width: spec.width,
        shots,
    })
}
