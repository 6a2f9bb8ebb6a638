//! Two-shot training clips.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{FrameContainer, ShotAnnotation};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Pure frames of annotated shots at network resolution, values in `[0, 1]`.
#[derive(Clone, Debug, Default)]
pub struct ShotPool {
    height: usize,
    width: usize,
    shots: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Frames per clip (`N_F`).
    pub frames: usize,
    /// Probability of joining the two shots with a cross-fade.
    pub crossfade_prob: f64,
    pub fade_min: usize,
    pub fade_max: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            frames: 60,
            crossfade_prob: 0.3,
            fade_min: 4,
            fade_max: 12,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::InvalidArgument("training clips need at least 2 frames".into()));
        }
        if !(0.0..=1.0).contains(&self.crossfade_prob) {
            return Err(Error::InvalidArgument("crossfade_prob must be in [0, 1]".into()));
        }
        if self.fade_min == 0 || self.fade_max < self.fade_min || self.fade_max + 2 > self.frames {
            return Err(Error::InvalidArgument(format!(
                "fade length range [{}, {}] does not fit a {}-frame clip",
                self.fade_min, self.fade_max, self.frames
            )));
        }
        Ok(())
    }
}

/// One clip: `frames: [1, N_F, H, W, 3]`, `y` marks the middle frame of the
/// transition and `z` every transition frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub frames: Tensor,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// Clips stacked along the batch axis.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch {
    pub frames: Tensor,
    pub y: Tensor,
    pub z: Tensor,
}

impl ShotPool {
    pub fn new(height: usize, width: usize) -> Self {
        ShotPool {
            height,
            width,
            shots: Vec::new(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn shot_len(&self, i: usize) -> usize {
        self.shots[i].len() / self.frame_len()
    }

    fn frame_len(&self) -> usize {
        self.height * self.width * 3
    }

    /// Adds one shot given as `len × H × W × 3` values.
    pub fn push_shot(&mut self, frames: Vec<f64>) -> Result<()> {
        if frames.is_empty() || !frames.len().is_multiple_of(self.frame_len()) {
            return Err(Error::InvalidArgument(format!(
                "shot of {} values is not a whole number of {}x{} frames",
                frames.len(),
                self.height,
                self.width
            )));
        }
        self.shots.push(frames);
        Ok(())
    }

    /// Adds every annotated shot of `video`.
    pub fn add_video(&mut self, video: &FrameContainer, ann: &ShotAnnotation) -> Result<()> {
        for s in ann.shots() {
            let (b, e) = (s.begin as usize, s.end as usize);
            if e >= video.frames() {
                return Err(Error::InvalidArgument(format!(
                    "shot [{b}, {e}] extends past the {}-frame video",
                    video.frames()
                )));
            }
            let t = video.to_tensor(b..e + 1, self.height, self.width)?;
            self.push_shot(t.into_data())?;
        }
        Ok(())
    }

    fn frame(&self, shot: usize, t: usize) -> &[f64] {
        let n = self.frame_len();
        let len = self.shot_len(shot);
        let t = t.min(len - 1);
        &self.shots[shot][t * n..(t + 1) * n]
    }
}

/// Joins two random shots of `pool` into one clip.
///
/// The clip shows shot A up to its last frame at index `k`, then either cuts
/// to shot B at `k + 1` or cross-fades over frames `k + 1 ..= k + L`. The
/// transition span is `[k, k + L]` (`L = 0` for a cut). Shots shorter than
/// their part of the clip are extended with their edge frame.
pub fn make_training_sample<R: Rng + ?Sized>(pool: &ShotPool, cfg: &SampleConfig, rng: &mut R) -> Result<TrainSample> {
    cfg.validate()?;
    if pool.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 shots to build a training sample, pool has {}",
            pool.len()
        )));
    }
    let n = cfg.frames;
    let picks: Vec<usize> = (0..pool.len()).collect::<Vec<_>>().choose_multiple(rng, 2).copied().collect();
    let (a, b) = (picks[0], picks[1]);
    let fade = if rng.gen_bool(cfg.crossfade_prob) {
        rng.gen_range(cfg.fade_min..=cfg.fade_max)
    } else {
        0
    };
    // k: last pure frame of A; k + fade + 1 <= n - 1 leaves at least one frame of B.
    let k = rng.gen_range(0..n - fade - 1);

    // A frames end at index k; take the tail of shot A ending at a random point.
    let len_a = pool.shot_len(a);
    let a_end = if len_a > k + 1 {
        rng.gen_range(k..len_a)
    } else {
        len_a - 1
    };
    let b_start = {
        let len_b = pool.shot_len(b);
        let need = n - k - 1;
        if len_b > need {
            rng.gen_range(0..=len_b - need)
        } else {
            0
        }
    };
    let frame_a = |t: usize| -> &[f64] {
        // Clip index t maps to shot A index a_end - (k - t).
        let idx = (a_end + t).saturating_sub(k);
        pool.frame(a, idx)
    };

    let fl = pool.frame_len();
    let mut data = Vec::with_capacity(n * fl);
    for t in 0..n {
        if t <= k {
            data.extend_from_slice(frame_a(t));
        } else if t <= k + fade {
            let w = (t - k) as f64 / (fade + 1) as f64;
            let fa = frame_a(t);
            let fb = pool.frame(b, b_start);
            data.extend(fa.iter().zip(fb).map(|(x, y)| (1.0 - w) * x + w * y));
        } else {
            data.extend_from_slice(pool.frame(b, b_start + (t - k - fade - 1)));
        }
    }
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    y[k + fade / 2] = 1.0;
    for v in &mut z[k..=k + fade] {
        *v = 1.0;
    }
    Ok(TrainSample {
        frames: Tensor::new(vec![1, n, pool.height, pool.width, 3], data)?,
        y,
        z,
    })
}

/// `n` independent samples stacked into one batch.
pub fn make_batch<R: Rng + ?Sized>(pool: &ShotPool, cfg: &SampleConfig, n: usize, rng: &mut R) -> Result<TrainBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut frames = Vec::new();
    let mut y = Vec::new();
    let mut z = Vec::new();
    for _ in 0..n {
        let s = make_training_sample(pool, cfg, rng)?;
        frames.extend(s.frames.into_data());
        y.extend(s.y);
        z.extend(s.z);
    }
    let t = cfg.frames;
    Ok(TrainBatch {
        frames: Tensor::new(vec![n, t, pool.height, pool.width, 3], frames)?,
        y: Tensor::new(vec![n, t], y)?,
        z: Tensor::new(vec![n, t], z)?,
    })
}
