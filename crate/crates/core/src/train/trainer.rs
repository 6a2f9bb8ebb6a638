//! SGD training loops for the SuperNet and for single candidates.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{distill_loss, loss_multihead, loss_value, LossWeights};
use super::sample::{make_batch, SampleConfig, ShotPool, TrainBatch};
use crate::blocks::network::{network_forward, supernet_plan};
use crate::blocks::params::{BnUpdate, DEFAULT_BN_MOMENTUM};
use crate::blocks::{build_network, ArchCode, Forward, ForwardOpts, Model, NetworkConfig, ParamStore};
use crate::tensor::{Graph, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub loss: LossWeights,
    pub seed: u64,
    pub sample: SampleConfig,
    /// Clips in the fixed batch used to track progress.
    pub probe_batch: usize,
    /// Rescale each step's gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 0.1,
            momentum: 0.9,
            batch: 16,
            epochs: 12,
            steps_per_epoch: 100,
            loss: LossWeights::default(),
            seed: 0,
            sample: SampleConfig::default(),
            probe_batch: 4,
            clip_norm: None,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("sgd config: {m}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.batch == 0 || self.probe_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if self.clip_norm.is_some_and(|c| c.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
            return bad("clip_norm must be positive");
        }
        self.loss.validate()?;
        self.sample.validate()
    }
}

/// Which architecture each step trains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PathPolicy {
    /// A fresh uniformly sampled path per step.
    Uniform,
    Fixed(ArchCode),
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub path: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Probe loss before training, then after every epoch.
    pub probe_loss: Vec<f64>,
    pub steps: usize,
    pub last_loss: Option<f64>,
}

/// Each of the 16 options per block and each attention depth drawn
/// independently and uniformly.
pub fn sample_uniform_path<R: Rng + ?Sized>(rng: &mut R) -> ArchCode {
    ArchCode::sample_uniform(rng)
}

/// Per-frame mean of the two-head loss for `batch` under `store` along
/// `arch`, with batch statistics and no dropout.
pub fn batch_loss(store: &ParamStore, arch: &ArchCode, net: &NetworkConfig, batch: &TrainBatch, w: LossWeights) -> Result<f64> {
    let mut g = Graph::new();
    let mut fwd = Forward::new(&mut g, store, ForwardOpts::calibrate());
    let heads = network_forward(&mut fwd, arch, net, &batch.frames)?;
    let y_hat = g.value(heads.single);
    let z_hat = g.value(heads.all);
    Ok(loss_value(y_hat, z_hat, &batch.y, &batch.z, w)? / batch.y.numel() as f64)
}

/// A training run over one parameter store.
pub struct Trainer<'a> {
    pub store: ParamStore,
    net: NetworkConfig,
    cfg: SgdConfig,
    pool: &'a ShotPool,
    policy: PathPolicy,
    teacher: Option<&'a Model>,
    rng: ChaCha8Rng,
    velocity: HashMap<String, Vec<f64>>,
    step: usize,
    probe: TrainBatch,
    probe_paths: Vec<ArchCode>,
    log: Option<&'a mut dyn Write>,
    report: TrainReport,
}

const PROBE_STREAM: u64 = 0x0050_524f_4245;
const PROBE_PATHS: usize = 4;

impl<'a> Trainer<'a> {
    pub fn new(store: ParamStore, net: &NetworkConfig, cfg: &SgdConfig, pool: &'a ShotPool, policy: PathPolicy) -> Result<Self> {
        cfg.validate()?;
        net.validate()?;
        if (pool.height(), pool.width()) != (net.height, net.width) {
            return Err(Error::InvalidArgument(format!(
                "shot pool frames are {}x{}, network expects {}x{}",
                pool.height(),
                pool.width(),
                net.height,
                net.width
            )));
        }
        let mut probe_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ PROBE_STREAM);
        let probe = make_batch(pool, &cfg.sample, cfg.probe_batch, &mut probe_rng)?;
        let probe_paths = match policy {
            PathPolicy::Uniform => (0..PROBE_PATHS).map(|_| sample_uniform_path(&mut probe_rng)).collect(),
            PathPolicy::Fixed(a) => vec![a],
        };
        let mut t = Trainer {
            store,
            net: net.clone(),
            cfg: cfg.clone(),
            pool,
            policy,
            teacher: None,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            velocity: HashMap::new(),
            step: 0,
            probe,
            probe_paths,
            log: None,
            report: TrainReport::default(),
        };
        let p0 = t.probe_loss()?;
        t.report.probe_loss.push(p0);
        Ok(t)
    }

    /// Trains against a teacher's predictions instead of the labels.
    pub fn with_teacher(mut self, teacher: &'a Model) -> Self {
        self.teacher = Some(teacher);
        self
    }

    /// Appends one JSON line per step to `log`.
    pub fn with_log(mut self, log: &'a mut dyn Write) -> Self {
        self.log = Some(log);
        self
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    /// Mean per-frame label loss on the fixed probe batch, averaged over the
    /// probe paths.
    pub fn probe_loss(&self) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.probe_paths {
            total += batch_loss(&self.store, p, &self.net, &self.probe, self.cfg.loss)?;
        }
        Ok(total / self.probe_paths.len() as f64)
    }

    /// One SGD step on a fresh batch.
    pub fn step(&mut self) -> Result<StepRecord> {
        let path = match self.policy {
            PathPolicy::Uniform => sample_uniform_path(&mut self.rng),
            PathPolicy::Fixed(a) => a,
        };
        let batch = make_batch(self.pool, &self.cfg.sample, self.cfg.batch, &mut self.rng)?;
        let dropout_seed: u64 = self.rng.gen();
        let teacher_out = match self.teacher {
            Some(t) => Some(t.predict(&batch.frames)?),
            None => None,
        };

        let mut g = Graph::new();
        let mut fwd = Forward::new(&mut g, &self.store, ForwardOpts::train(dropout_seed));
        let heads = network_forward(&mut fwd, &path, &self.net, &batch.frames)?;
        let w = self.cfg.loss.scaled(1.0 / batch.y.numel() as f64);
        let loss = match &teacher_out {
            Some((ty, tz)) => distill_loss(fwd.graph, heads.single, heads.all, ty, tz, w)?,
            None => loss_multihead(fwd.graph, heads.single, heads.all, &batch.y, &batch.z, w)?,
        };
        let value = fwd.graph.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::Diverged {
                step: self.step,
                detail: format!("loss became {value} on path {path}"),
            });
        }
        let mut grads = fwd.graph.backward(loss)?;
        let grads = fwd.named_gradients(&mut grads);
        let bn = fwd.into_bn_updates();
        self.apply(grads, &bn)?;

        let rec = StepRecord {
            step: self.step,
            loss: value,
            lr: self.cfg.lr,
            path: path.to_string(),
        };
        if let Some(log) = self.log.as_mut() {
            serde_json::to_writer(&mut **log, &rec)?;
            log.write_all(b"\n")?;
        }
        self.step += 1;
        self.report.steps = self.step;
        self.report.last_loss = Some(value);
        Ok(rec)
    }

    fn apply(&mut self, grads: BTreeMap<String, Tensor>, bn: &[BnUpdate]) -> Result<()> {
        let scale = match self.cfg.clip_norm {
            Some(c) => {
                let norm = grads.values().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let (lr, mu) = (self.cfg.lr, self.cfg.momentum);
        for (name, g) in grads {
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    step: self.step,
                    detail: format!("non-finite gradient for `{name}`"),
                });
            }
            let w = self
                .store
                .param_mut(&name)
                .ok_or_else(|| Error::Arch(format!("gradient for unknown parameter `{name}`")))?;
            let v = self.velocity.entry(name).or_insert_with(|| vec![0.0; g.numel()]);
            for ((wi, vi), &gi) in w.data_mut().iter_mut().zip(v.iter_mut()).zip(g.data()) {
                *vi = mu * *vi + scale * gi;
                *wi -= lr * *vi;
            }
        }
        self.store.apply_bn_updates(bn, DEFAULT_BN_MOMENTUM)
    }

    /// Runs `steps_per_epoch` steps and records the probe loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        for _ in 0..self.cfg.steps_per_epoch {
            self.step()?;
        }
        let p = self.probe_loss()?;
        if !p.is_finite() {
            return Err(Error::Diverged {
                step: self.step,
                detail: format!("probe loss became {p}"),
            });
        }
        self.report.probe_loss.push(p);
        Ok(p)
    }

    /// Runs every configured epoch.
    pub fn run(&mut self) -> Result<()> {
        for _ in 0..self.cfg.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn finish(self) -> (ParamStore, TrainReport) {
        (self.store, self.report)
    }
}

/// All candidate weights: one disjoint set per (position, option), one
/// attention stack per depth and the shared head.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperNet {
    pub cfg: NetworkConfig,
    pub store: ParamStore,
}

impl SuperNet {
    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Result<Self> {
        Ok(SuperNet {
            cfg: cfg.clone(),
            store: supernet_plan(cfg)?.initialize(rng),
        })
    }

    pub fn from_store(cfg: NetworkConfig, store: ParamStore) -> Result<Self> {
        supernet_plan(&cfg)?.check(&store)?;
        Ok(SuperNet { cfg, store })
    }

    /// The weights of `arch` copied out as a standalone model.
    pub fn extract(&self, arch: &ArchCode) -> Result<Model> {
        let plan = crate::blocks::network_plan(arch, &self.cfg)?;
        Model::from_store(*arch, self.cfg.clone(), self.store.extract(&plan)?)
    }
}

pub fn train_supernet(
    supernet: &mut SuperNet,
    pool: &ShotPool,
    cfg: &SgdConfig,
    log: Option<&mut dyn Write>,
) -> Result<TrainReport> {
    let mut t = Trainer::new(supernet.store.clone(), &supernet.cfg, cfg, pool, PathPolicy::Uniform)?;
    if let Some(l) = log {
        t = t.with_log(l);
    }
    t.run()?;
    let (store, report) = t.finish();
    supernet.store = store;
    Ok(report)
}

/// Trains `arch` from a fresh initialisation drawn from `cfg.seed`.
pub fn retrain_candidate(
    arch: &ArchCode,
    net: &NetworkConfig,
    pool: &ShotPool,
    cfg: &SgdConfig,
    teacher: Option<&Model>,
    log: Option<&mut dyn Write>,
) -> Result<(Model, TrainReport)> {
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x1417));
    let model = build_network(arch, net, &mut init_rng)?;
    let mut t = Trainer::new(model.store, net, cfg, pool, PathPolicy::Fixed(*arch))?;
    if let Some(teacher) = teacher {
        t = t.with_teacher(teacher);
    }
    if let Some(l) = log {
        t = t.with_log(l);
    }
    t.run()?;
    let (store, report) = t.finish();
    Ok((Model::from_store(*arch, net.clone(), store)?, report))
}
