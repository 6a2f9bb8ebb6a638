use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use autoshot::annotation::{render_thumbnail, synth_video, write_annotation, ThumbnailConfig};
use autoshot::blocks::{count_flops, ArchCode, Model};
use autoshot::metrics::{predictions_to_boundaries, score_predictions, EvalReport};
use autoshot::search::{search, HistoryLog, SearchSpace};
use autoshot::train::{
    evaluate, graft_networks, predict_video, retrain_candidate, train_supernet, CandidateEvaluator, Checkpoint,
    CheckpointKind, SuperNet,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::run::{calibration_batches, load_video, read_annotation, read_json, rng, write_atomic, write_json, RunDir, SPLITS};

pub struct Outcome {
    pub json: Value,
    pub summary: String,
}

/// Accepts `transnet_v2`, `autoshot_f1`, `autoshot_prec` or a full code.
pub fn parse_arch(s: &str) -> Result<ArchCode> {
    Ok(match s {
        "transnet_v2" => ArchCode::transnet_v2(),
        "autoshot_f1" => ArchCode::autoshot_f1(),
        "autoshot_prec" => ArchCode::autoshot_prec(),
        _ => s.parse().with_context(|| format!("invalid architecture `{s}`"))?,
    })
}

pub fn synth(run: &RunDir, cfg: &RunConfig) -> Result<Outcome> {
    let data = run.data_dir();
    if data.exists() {
        bail!("{} already exists", data.display());
    }
    let partial = run.path("data.partial");
    if partial.exists() {
        fs::remove_dir_all(&partial).with_context(|| format!("removing stale {}", partial.display()))?;
    }
    let counts = [cfg.synth_train, cfg.synth_val, cfg.synth_test, cfg.synth_hard_test];
    let mut frames = 0;
    for (stream, (split, &n)) in SPLITS.iter().zip(&counts).enumerate() {
        let spec = cfg.synth_spec(*split == "hard");
        let dir = partial.join(split);
        fs::create_dir_all(&dir)?;
        let mut r = rng(cfg.seed, stream as u64 + 10);
        for i in 0..n {
            let (video, ann) = synth_video(&mut r, &spec)?;
            frames += video.frames();
            write_atomic(&dir.join(format!("{i:04}.frames")), &video.to_bytes())?;
            write_atomic(&dir.join(format!("{i:04}.txt")), write_annotation(&ann).as_bytes())?;
        }
    }
    let manifest = json!({
        "seed": cfg.seed,
        "splits": SPLITS.iter().zip(&counts).map(|(s, n)| (s.to_string(), json!(n))).collect::<serde_json::Map<_, _>>(),
        "frames_per_video": cfg.synth_frames,
        "height": cfg.synth_height,
        "width": cfg.synth_width,
        "gradual_prob": cfg.synth_gradual_prob,
    });
    write_json(&partial.join("manifest.json"), &manifest)?;
    fs::rename(&partial, &data).with_context(|| format!("moving {} into place", partial.display()))?;
    let videos: usize = counts.iter().sum();
    Ok(Outcome {
        summary: format!("wrote {videos} videos ({frames} frames) to {}", data.display()),
        json: manifest,
    })
}

fn log_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn train_supernet_cmd(run: &RunDir, cfg: &RunConfig) -> Result<Outcome> {
    let net = cfg.network();
    let pool = run.shot_pool(cfg)?;
    let mut supernet = SuperNet::new(&net, &mut rng(cfg.seed, 1))?;
    let log_path = run.path("supernet_log.jsonl");
    let mut log = log_file(&log_path)?;
    let report = train_supernet(&mut supernet, &pool, &cfg.sgd(cfg.epochs), Some(&mut log))?;
    log.flush()?;
    let ckpt = Checkpoint {
        kind: CheckpointKind::Supernet,
        arch: None,
        network: supernet.cfg,
        store: supernet.store,
    };
    let out = run.path("supernet.ascp");
    write_atomic(&out, &ckpt.to_bytes())?;
    let first = report.probe_loss.first().copied();
    let last = report.probe_loss.last().copied();
    Ok(Outcome {
        summary: format!(
            "trained the supernet for {} steps on {} shots; probe loss {} -> {}",
            report.steps,
            pool.len(),
            fmt_opt(first),
            fmt_opt(last)
        ),
        json: json!({
            "checkpoint": out,
            "log": log_path,
            "steps": report.steps,
            "last_loss": report.last_loss,
            "probe_loss": report.probe_loss,
        }),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn load_supernet(path: &Path) -> Result<SuperNet> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    ensure!(ckpt.kind == CheckpointKind::Supernet, "{} is not a supernet checkpoint", path.display());
    Ok(SuperNet::from_store(ckpt.network, ckpt.store)?)
}

pub fn load_model(path: &Path) -> Result<Model> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    ensure!(ckpt.kind == CheckpointKind::Model, "{} is not a model checkpoint", path.display());
    Ok(ckpt.into_model()?)
}

pub fn search_cmd(run: &RunDir, cfg: &RunConfig, jobs: usize) -> Result<Outcome> {
    let supernet = load_supernet(&run.path("supernet.ascp"))?;
    let pool = run.shot_pool(cfg)?;
    let evaluator = CandidateEvaluator {
        calibration: calibration_batches(cfg, &pool)?,
        videos: run.eval_videos("val", supernet.cfg.height, supernet.cfg.width)?,
        window: cfg.window(),
        metric: cfg.metric(),
    };
    let (mut log, resume) = HistoryLog::open(&run.path("search_history.jsonl"))?;
    let outcome = search(
        &SearchSpace::full(),
        |a| evaluator.evaluate(&supernet, a),
        &cfg.search(jobs),
        &resume,
        Some(&mut log),
    )?;
    let best = outcome.best.as_ref().ok_or_else(|| anyhow!("search evaluated no candidates"))?;
    let failures = outcome.history.iter().filter(|e| e.error.is_some()).count();
    let result = json!({
        "best": { "arch": best.arch.to_string(), "score": best.score },
        "evaluations": outcome.history.len(),
        "resumed": resume.len(),
        "failures": failures,
        "best_so_far": outcome.best_so_far,
        "theta": outcome.theta,
        "exhausted": outcome.exhausted,
    });
    write_json(&run.path("search.json"), &result)?;
    Ok(Outcome {
        summary: format!(
            "{} evaluations ({} resumed, {failures} failed); best {:.4}: {}",
            outcome.history.len(),
            resume.len(),
            best.score,
            best.arch
        ),
        json: result,
    })
}

#[derive(Deserialize)]
struct SearchResult {
    best: BestEntry,
}

#[derive(Deserialize)]
struct BestEntry {
    arch: String,
}

pub fn retrain_cmd(run: &RunDir, cfg: &RunConfig, arch: Option<&str>, teacher: Option<&Path>) -> Result<Outcome> {
    let arch = match arch {
        Some(a) => parse_arch(a)?,
        None => {
            let path = run.path("search.json");
            ensure!(path.exists(), "no --arch given and {} does not exist", path.display());
            parse_arch(&read_json::<SearchResult>(&path)?.best.arch)?
        }
    };
    let net = cfg.network();
    let teacher = teacher.map(load_model).transpose()?;
    let pool = run.shot_pool(cfg)?;
    let log_path = run.path("retrain_log.jsonl");
    let mut log = log_file(&log_path)?;
    let (model, report) = retrain_candidate(&arch, &net, &pool, &cfg.sgd(cfg.retrain_epochs), teacher.as_ref(), Some(&mut log))?;
    log.flush()?;
    let out = run.path("model.ascp");
    write_atomic(&out, &Checkpoint::from_model(&model).to_bytes())?;
    let val = evaluate(&model, &run.eval_videos("val", net.height, net.width)?, &cfg.window(), cfg.threshold)?;
    Ok(Outcome {
        summary: format!(
            "retrained {arch} for {} steps; validation F1 {:.4} (P {:.4}, R {:.4})",
            report.steps, val.f1, val.precision, val.recall
        ),
        json: json!({
            "arch": arch.to_string(),
            "checkpoint": out,
            "log": log_path,
            "steps": report.steps,
            "last_loss": report.last_loss,
            "validation": val,
        }),
    })
}

pub fn graft_cmd(run: &RunDir, cfg: &RunConfig, models: &[PathBuf]) -> Result<Outcome> {
    let loaded = models.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
    let mut stores: Vec<_> = loaded.iter().map(|m| m.store.clone()).collect();
    let records = graft_networks(&mut stores, &cfg.graft())?;
    let dir = run.path("graft");
    let mut outputs = Vec::new();
    for (i, (model, store)) in loaded.iter().zip(stores).enumerate() {
        let grafted = Model::from_store(model.arch, model.cfg.clone(), store)?;
        let path = dir.join(format!("model_{i}.ascp"));
        write_atomic(&path, &Checkpoint::from_model(&grafted).to_bytes())?;
        outputs.push(path);
    }
    write_json(&dir.join("records.json"), &records)?;
    let mean_alpha = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.alpha).sum::<f64>() / records.len() as f64
    };
    Ok(Outcome {
        summary: format!("grafted {} networks over {} layer pairs; mean alpha {mean_alpha:.4}", models.len(), records.len()),
        json: json!({
            "models": outputs,
            "records": dir.join("records.json"),
            "layers": records.len(),
            "mean_alpha": mean_alpha,
        }),
    })
}

/// Per-frame probabilities: either `{"single": [...], "all": [...]}` or a
/// bare array of single-frame probabilities.
#[derive(Deserialize)]
#[serde(untagged)]
enum PredFile {
    Heads { single: Vec<f64> },
    Bare(Vec<f64>),
}

pub fn read_predictions(path: &Path) -> Result<Vec<f64>> {
    Ok(match read_json::<PredFile>(path)? {
        PredFile::Heads { single } | PredFile::Bare(single) => single,
    })
}

pub enum EvalSource<'a> {
    Predictions { pred: &'a Path, ann: &'a Path },
    Video { model: &'a Path, video: &'a Path, ann: &'a Path },
    Split { model: &'a Path, split: &'a str },
}

pub fn eval_cmd(run: Option<&RunDir>, cfg: &RunConfig, source: EvalSource<'_>) -> Result<Outcome> {
    let thr = cfg.threshold;
    let (report, extra): (EvalReport, Value) = match source {
        EvalSource::Predictions { pred, ann } => {
            let p = read_predictions(pred)?;
            let ann = read_annotation(ann)?;
            ensure!(
                p.len() as u64 == ann.frame_count(),
                "{} has {} predictions but the annotation covers {} frames",
                pred.display(),
                p.len(),
                ann.frame_count()
            );
            (score_predictions(&p, &ann, thr)?, json!({}))
        }
        EvalSource::Video { model, video, ann } => {
            let model = load_model(model)?;
            let video = load_video(video)?;
            let ann = read_annotation(ann)?;
            let frames = video.to_tensor(0..video.frames(), model.cfg.height, model.cfg.width)?;
            let (single, all) = predict_video(&model, &frames, &cfg.window())?;
            let report = score_predictions(&single, &ann, thr)?;
            let detected = predictions_to_boundaries(&single, thr)?.frames();
            let extra = match run {
                Some(run) => {
                    let path = run.path("pred.json");
                    write_json(&path, &json!({ "single": single, "all": all }))?;
                    json!({ "predictions": path, "detected": detected })
                }
                None => json!({ "detected": detected }),
            };
            (report, extra)
        }
        EvalSource::Split { model, split } => {
            let run = run.ok_or_else(|| anyhow!("--split needs --run"))?;
            let model = load_model(model)?;
            let videos = run.eval_videos(split, model.cfg.height, model.cfg.width)?;
            (evaluate(&model, &videos, &cfg.window(), thr)?, json!({ "split": split, "videos": videos.len() }))
        }
    };
    let mut json = serde_json::to_value(report)?;
    if let (Value::Object(m), Value::Object(e)) = (&mut json, extra) {
        m.extend(e);
    }
    Ok(Outcome {
        summary: format!(
            "tp {} fp {} fn {}: precision {:.4} recall {:.4} F1 {:.4} at threshold {thr}",
            report.tp, report.fp, report.fn_, report.precision, report.recall, report.f1
        ),
        json,
    })
}

pub fn flops_cmd(cfg: &RunConfig, arch: &str) -> Result<Outcome> {
    let arch = parse_arch(arch)?;
    let net = cfg.network();
    net.validate()?;
    let report = count_flops(&arch, &net);
    let mut summary = format!("{arch}\n");
    for (i, macs) in report.blocks.iter().enumerate() {
        summary.push_str(&format!("  {:<10} {:>10.4} GMACs\n", format!("block {}", i + 1), *macs as f64 / 1e9));
    }
    summary.push_str(&format!("  {:<10} {:>10.4} GMACs\n", "attention", report.attention as f64 / 1e9));
    summary.push_str(&format!("  {:<10} {:>10.4} GMACs\n", "head", report.head as f64 / 1e9));
    summary.push_str(&format!("  {:<10} {:>10.4} GMACs", "total", report.gmacs()));
    Ok(Outcome {
        json: json!({ "arch": arch.to_string(), "gmacs": report.gmacs(), "macs": report }),
        summary,
    })
}

pub fn thumbs_cmd(cfg: &RunConfig, video: &Path, ann: Option<&Path>, pred: Option<&Path>, out: &Path) -> Result<Outcome> {
    let video = load_video(video)?;
    let ann = ann.map(read_annotation).transpose()?;
    let detected = match pred {
        Some(p) => {
            let probs = read_predictions(p)?;
            ensure!(
                probs.len() == video.frames(),
                "{} has {} predictions for a {}-frame video",
                p.display(),
                probs.len(),
                video.frames()
            );
            Some(predictions_to_boundaries(&probs, cfg.threshold)?.frames())
        }
        None => None,
    };
    let image = render_thumbnail(&video, &ThumbnailConfig::default(), ann.as_ref(), detected.as_deref())?;
    write_atomic(out, &image.to_ppm())?;
    Ok(Outcome {
        summary: format!("wrote a {}-frame contact sheet to {}", video.frames(), out.display()),
        json: json!({ "out": out, "frames": video.frames(), "detected": detected }),
    })
}
