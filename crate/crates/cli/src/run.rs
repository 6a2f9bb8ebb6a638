//! Run directory layout and file helpers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use autoshot::annotation::{parse_annotation, FrameContainer, ShotAnnotation};
use autoshot::tensor::Tensor;
use autoshot::train::{make_batch, EvalVideo, ShotPool};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::RunConfig;

pub const SPLITS: [&str; 4] = ["train", "val", "test", "hard"];

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_annotation(path: &Path) -> Result<ShotAnnotation> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_annotation(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_video(path: &Path) -> Result<FrameContainer> {
    FrameContainer::load(path).with_context(|| format!("loading {}", path.display()))
}

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating run directory {}", root.display()))?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.path("data")
    }

    /// Records the resolved configuration a command ran with.
    pub fn snapshot(&self, command: &str, cfg: &RunConfig) -> Result<()> {
        write_atomic(&self.path(&format!("{command}.config")), cfg.to_string().as_bytes())
    }

    /// Every `NNNN.frames` / `NNNN.txt` pair of a split, in index order.
    pub fn load_split(&self, split: &str) -> Result<Vec<(FrameContainer, ShotAnnotation)>> {
        let dir = self.data_dir().join(split);
        if !dir.is_dir() {
            bail!("{} does not exist; run `autoshot synth` first", dir.display());
        }
        let mut stems: Vec<PathBuf> = fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|x| x == "frames"))
            .collect();
        stems.sort();
        if stems.is_empty() {
            bail!("split {split} in {} is empty", dir.display());
        }
        stems
            .into_iter()
            .map(|p| Ok((load_video(&p)?, read_annotation(&p.with_extension("txt"))?)))
            .collect()
    }

    pub fn shot_pool(&self, cfg: &RunConfig) -> Result<ShotPool> {
        let net = cfg.network();
        let mut pool = ShotPool::new(net.height, net.width);
        for (v, a) in self.load_split("train")? {
            pool.add_video(&v, &a)?;
        }
        Ok(pool)
    }

    pub fn eval_videos(&self, split: &str, height: usize, width: usize) -> Result<Vec<EvalVideo>> {
        self.load_split(split)?
            .into_iter()
            .map(|(v, a)| Ok(EvalVideo::from_container(&v, a, height, width)?))
            .collect()
    }
}

/// Fixed training clips used to recalibrate batch-norm statistics of
/// SuperNet candidates.
pub fn calibration_batches(cfg: &RunConfig, pool: &ShotPool) -> Result<Vec<Tensor>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let sample = cfg.sgd(1).sample;
    (0..cfg.calibration_batches)
        .map(|_| Ok(make_batch(pool, &sample, cfg.batch, &mut rng)?.frames))
        .collect()
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
