//! The outer search loop and its JSON-lines history.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gp::{gp_fit, GpConfig, GpModel, Observation};
use super::kernel::KernelParams;
use super::propose::{propose_batch, AcquisitionKind, ProposeOptions};
use super::space::SearchSpace;
use crate::blocks::ArchCode;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Bo,
}

/// One evaluated code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub epoch: usize,
    pub arch: String,
    pub score: f64,
    pub acquisition: Option<f64>,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub epochs: usize,
    pub init_epochs: usize,
    pub population: usize,
    pub propose: ProposeOptions,
    pub gp: GpConfig,
    pub theta0: KernelParams,
    pub seed: u64,
    /// Stop after the first epoch whose best score reaches this value.
    pub target_score: Option<f64>,
    /// Concurrent evaluations within a batch.
    pub jobs: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            epochs: 100,
            init_epochs: 20,
            population: 48,
            propose: ProposeOptions::default(),
            gp: GpConfig::default(),
            theta0: KernelParams::default(),
            seed: 0,
            target_score: None,
            jobs: 1,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::InvalidArgument("population must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidArgument("jobs must be positive".into()));
        }
        if self.init_epochs > self.epochs {
            return Err(Error::InvalidArgument(format!(
                "{} initialisation epochs exceed {} total",
                self.init_epochs, self.epochs
            )));
        }
        self.theta0.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub best: Option<Observation>,
    pub history: Vec<HistoryEntry>,
    /// Best score after each completed epoch.
    pub best_so_far: Vec<f64>,
    /// Hyperparameters of the last fitted model.
    pub theta: Option<KernelParams>,
    /// The space ran out of unexplored codes.
    pub exhausted: bool,
}

/// Append-only JSON-lines history file.
pub struct HistoryLog {
    path: PathBuf,
    file: File,
}

impl HistoryLog {
    /// Opens `path` for appending and returns the entries already in it.
    pub fn open(path: &Path) -> Result<(Self, Vec<HistoryEntry>)> {
        let entries = if path.exists() { read_history(path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((
            HistoryLog {
                path: path.to_path_buf(),
                file,
            },
            entries,
        ))
    }

    pub fn append(&mut self, e: &HistoryEntry) -> Result<()> {
        let mut line = serde_json::to_vec(e)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryEntry>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: HistoryEntry = serde_json::from_str(&line)
            .map_err(|err| Error::Format(format!("{} line {}: {err}", path.display(), i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Number of evaluations up to and including the first one of `target`.
pub fn evaluations_to(history: &[HistoryEntry], target: &ArchCode) -> Option<usize> {
    let text = target.to_string();
    history.iter().position(|e| e.arch == text).map(|i| i + 1)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(epoch as u64);
    r
}

fn run_batch<F>(codes: &[ArchCode], eval_fn: &F, jobs: usize) -> Vec<Result<f64>>
where
    F: Fn(&ArchCode) -> Result<f64> + Sync,
{
    if jobs <= 1 || codes.len() <= 1 {
        return codes.iter().map(eval_fn).collect();
    }
    let per = codes.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = codes
            .chunks(per)
            .map(|c| s.spawn(move || c.iter().map(eval_fn).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    })
}

fn checked_score(r: Result<f64>) -> (f64, Option<String>) {
    match r {
        Ok(s) if (0.0..=1.0).contains(&s) => (s, None),
        Ok(s) => (0.0, Some(format!("score {s} outside [0, 1]"))),
        Err(e) => (0.0, Some(e.to_string())),
    }
}

/// Bayesian-optimisation search: `init_epochs` of uniform batches, then
/// batches ranked by acquisition under a refitted GP. A failing evaluation
/// scores 0 and its error is kept in the history.
///
/// Entries in `resume` (from an earlier run with the same configuration) are
/// reused instead of re-evaluated; new entries go to `log`.
pub fn search<F>(
    space: &SearchSpace,
    eval_fn: F,
    cfg: &SearchConfig,
    resume: &[HistoryEntry],
    mut log: Option<&mut HistoryLog>,
) -> Result<SearchOutcome>
where
    F: Fn(&ArchCode) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let mut done: HashMap<(usize, String), HistoryEntry> = HashMap::new();
    for e in resume {
        done.insert((e.epoch, e.arch.clone()), e.clone());
    }
    let mut observations: Vec<Observation> = Vec::new();
    let mut explored: HashSet<ArchCode> = HashSet::new();
    let mut history = Vec::new();
    let mut best_so_far = Vec::new();
    let mut best: Option<Observation> = None;
    let mut theta = cfg.theta0;
    let mut fitted = None;
    let mut exhausted = false;

    for epoch in 0..cfg.epochs {
        let mut rng = epoch_rng(cfg.seed, epoch);
        let phase = if epoch < cfg.init_epochs || observations.len() < 2 {
            Phase::Init
        } else {
            Phase::Bo
        };
        let model: Option<GpModel> = match (phase, cfg.propose.acquisition) {
            (Phase::Bo, AcquisitionKind::ProbabilityOfImprovement) => {
                let m = gp_fit(&observations, &theta, &cfg.gp, &mut rng)?;
                theta = *m.theta();
                fitted = Some(theta);
                Some(m)
            }
            (Phase::Bo, AcquisitionKind::Constant) => Some(GpModel::prior(theta, 0.0)?),
            (Phase::Init, _) => None,
        };
        let proposal = propose_batch(model.as_ref(), space, cfg.population, &explored, &cfg.propose, &mut rng)?;
        exhausted |= proposal.exhausted;
        if proposal.codes.is_empty() {
            break;
        }

        let todo: Vec<ArchCode> = proposal
            .codes
            .iter()
            .filter(|a| !done.contains_key(&(epoch, a.to_string())))
            .copied()
            .collect();
        let mut fresh = todo.iter().zip(run_batch(&todo, &eval_fn, cfg.jobs));
        for (arch, acq) in proposal.codes.iter().zip(&proposal.acquisitions) {
            let entry = match done.remove(&(epoch, arch.to_string())) {
                Some(e) => e,
                None => {
                    let (a, r) = fresh.next().expect("one result per fresh code");
                    debug_assert_eq!(a, arch);
                    let (score, error) = checked_score(r);
                    let e = HistoryEntry {
                        epoch,
                        arch: arch.to_string(),
                        score,
                        acquisition: *acq,
                        phase,
                        error,
                    };
                    if let Some(l) = log.as_deref_mut() {
                        l.append(&e)?;
                    }
                    e
                }
            };
            let obs = Observation {
                arch: *arch,
                score: entry.score,
            };
            if best.is_none_or(|b| obs.score > b.score) {
                best = Some(obs);
            }
            observations.push(obs);
            explored.insert(*arch);
            history.push(entry);
        }
        let b = best.map_or(0.0, |b| b.score);
        best_so_far.push(b);
        if cfg.target_score.is_some_and(|t| b >= t) {
            break;
        }
    }
    if let Some(((epoch, arch), _)) = done.into_iter().next() {
        return Err(Error::Format(format!(
            "history entry for `{arch}` in epoch {epoch} does not match this search configuration"
        )));
    }
    Ok(SearchOutcome {
        best,
        history,
        best_so_far,
        theta: fitted,
        exhausted,
    })
}
