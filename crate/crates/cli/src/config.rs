//! Flat `key = value` run configuration.
//!
//! Every key has a default, so an empty file (or no file) is a complete
//! configuration. `net.preset` is applied before any other `net.*` key, so
//! explicit values override the preset regardless of line order.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use autoshot::annotation::SynthSpec;
use autoshot::blocks::NetworkConfig;
use autoshot::search::{AcquisitionKind, ProposeOptions, SearchConfig};
use autoshot::train::{GraftConfig, LossWeights, SampleConfig, SearchMetric, SgdConfig, WindowConfig};

pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("`{s}`: {e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(f64, u64, usize);

impl ConfigValue for Option<f64> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s == "none" {
            Ok(None)
        } else {
            f64::parse_value(s).map(Some)
        }
    }

    fn render(&self) -> String {
        self.map_or_else(|| "none".into(), |v| v.to_string())
    }
}

macro_rules! enum_value {
    ($name:ident { $($variant:ident => $text:literal),* $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq)]
        pub enum $name { $($variant),* }

        impl ConfigValue for $name {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)*
                    _ => Err(format!("`{s}` is not one of {}", [$($text),*].join(", "))),
                }
            }
            fn render(&self) -> String {
                match self { $($name::$variant => $text.into()),* }
            }
        }
    };
}

enum_value!(NetPreset { Paper => "paper", Desk => "desk" });
enum_value!(Acquisition { Pi => "pi", Random => "random" });
enum_value!(MetricKind { F1 => "f1", PrecisionAtRecall => "precision_at_recall" });

macro_rules! run_config {
    ($($key:literal => $field:ident: $ty:ty = $default:expr,)*) => {
        /// All pipeline settings.
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $(pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($field: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $($key => self.$field = <$ty as ConfigValue>::parse_value(value)?,)*
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            }

            fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$field.render()),)*]
            }
        }
    };
}

run_config! {
    "seed" => seed: u64 = 0,

    "net.preset" => net_preset: NetPreset = NetPreset::Paper,
    "net.base_filters" => base_filters: usize = 16,
    "net.height" => height: usize = 27,
    "net.width" => width: usize = 48,
    "net.frames" => net_frames: usize = 100,
    "net.cos_dim" => cos_dim: usize = 128,
    "net.sim_dim" => sim_dim: usize = 128,
    "net.hidden" => hidden: usize = 1024,
    "net.dropout" => dropout: f64 = 0.5,

    "loss.lambda1" => lambda1: f64 = 5.0,
    "loss.lambda2" => lambda2: f64 = 0.1,

    "sgd.lr" => lr: f64 = 0.1,
    "sgd.momentum" => momentum: f64 = 0.9,
    "sgd.batch" => batch: usize = 16,
    "sgd.epochs" => epochs: usize = 12,
    "sgd.steps_per_epoch" => steps_per_epoch: usize = 100,
    "sgd.clip_norm" => clip_norm: Option<f64> = None,
    "sgd.probe_batch" => probe_batch: usize = 4,
    "retrain.epochs" => retrain_epochs: usize = 12,

    "sample.frames" => sample_frames: usize = 60,
    "sample.crossfade_prob" => crossfade_prob: f64 = 0.3,
    "sample.fade_min" => fade_min: usize = 4,
    "sample.fade_max" => fade_max: usize = 12,

    "graft.a" => graft_a: f64 = 0.4,
    "graft.c" => graft_c: f64 = 1.0,
    "graft.bins" => graft_bins: usize = 10,
    "graft.networks" => graft_networks: usize = 3,

    "search.population" => population: usize = 48,
    "search.epochs" => search_epochs: usize = 100,
    "search.init_epochs" => init_epochs: usize = 20,
    "search.pool_size" => pool_size: usize = 10_000,
    "search.acquisition" => acquisition: Acquisition = Acquisition::Pi,
    "search.metric" => metric: MetricKind = MetricKind::F1,
    "search.recall_target" => recall_target: f64 = 0.71,
    "search.target_score" => target_score: Option<f64> = None,
    "search.calibration_batches" => calibration_batches: usize = 4,

    "eval.threshold" => threshold: f64 = 0.5,
    "eval.window" => window: usize = 60,
    "eval.context" => context: usize = 15,
    "eval.batch" => eval_batch: usize = 8,

    "synth.train" => synth_train: usize = 170,
    "synth.val" => synth_val: usize = 10,
    "synth.test" => synth_test: usize = 20,
    "synth.hard_test" => synth_hard_test: usize = 20,
    "synth.frames" => synth_frames: usize = 300,
    "synth.gradual_prob" => synth_gradual_prob: f64 = 0.3,
    "synth.height" => synth_height: usize = 27,
    "synth.width" => synth_width: usize = 48,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {no}: expected `key = value`, got `{line}`");
            };
            let (key, value) = (key.trim(), value.trim());
            if !Self::KEYS.contains(&key) {
                bail!("line {no}: unknown key `{key}`");
            }
            if let Some(prev) = seen.insert(key.to_string(), no) {
                bail!("line {no}: `{key}` already set on line {prev}");
            }
            lines.push((no, key, value));
        }

        let mut cfg = RunConfig::default();
        lines.sort_by_key(|&(_, key, _)| key != "net.preset");
        for (no, key, value) in lines {
            cfg.set(key, value).map_err(|e| anyhow::anyhow!("line {no}: {key}: {e}"))?;
            if key == "net.preset" {
                cfg.apply_preset();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    fn apply_preset(&mut self) {
        let n = match self.net_preset {
            NetPreset::Paper => NetworkConfig::default(),
            NetPreset::Desk => NetworkConfig::desk(),
        };
        self.base_filters = n.base_filters;
        self.height = n.height;
        self.width = n.width;
        self.net_frames = n.frames;
        self.cos_dim = n.cos_dim;
        self.sim_dim = n.sim_dim;
        self.hidden = n.hidden;
        self.dropout = n.dropout;
    }

    pub fn validate(&self) -> Result<()> {
        self.network().validate()?;
        self.sgd(self.epochs).validate()?;
        self.graft().validate()?;
        self.search(1).validate()?;
        self.synth_spec(false).validate()?;
        if !(0.0..=1.0).contains(&self.recall_target) {
            bail!("search.recall_target must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            bail!("eval.threshold must be in [0, 1]");
        }
        if self.window <= 2 * self.context || self.eval_batch == 0 {
            bail!("eval.window must exceed 2 * eval.context and eval.batch must be positive");
        }
        if self.synth_train == 0 || self.synth_val == 0 {
            bail!("synth.train and synth.val must be positive");
        }
        Ok(())
    }

    pub fn network(&self) -> NetworkConfig {
        let base = match self.net_preset {
            NetPreset::Paper => NetworkConfig::default(),
            NetPreset::Desk => NetworkConfig::desk(),
        };
        NetworkConfig {
            base_filters: self.base_filters,
            height: self.height,
            width: self.width,
            frames: self.net_frames,
            cos_dim: self.cos_dim,
            sim_dim: self.sim_dim,
            hidden: self.hidden,
            dropout: self.dropout,
            ..base
        }
    }

    pub fn sgd(&self, epochs: usize) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            batch: self.batch,
            epochs,
            steps_per_epoch: self.steps_per_epoch,
            loss: LossWeights {
                lambda1: self.lambda1,
                lambda2: self.lambda2,
            },
            seed: self.seed,
            sample: SampleConfig {
                frames: self.sample_frames,
                crossfade_prob: self.crossfade_prob,
                fade_min: self.fade_min,
                fade_max: self.fade_max,
            },
            probe_batch: self.probe_batch,
            clip_norm: self.clip_norm,
        }
    }

    pub fn graft(&self) -> GraftConfig {
        GraftConfig {
            a: self.graft_a,
            c: self.graft_c,
            bins: self.graft_bins,
            networks: self.graft_networks,
        }
    }

    pub fn search(&self, jobs: usize) -> SearchConfig {
        SearchConfig {
            epochs: self.search_epochs,
            init_epochs: self.init_epochs,
            population: self.population,
            propose: ProposeOptions {
                pool_size: self.pool_size,
                acquisition: match self.acquisition {
                    Acquisition::Pi => AcquisitionKind::ProbabilityOfImprovement,
                    Acquisition::Random => AcquisitionKind::Constant,
                },
            },
            seed: self.seed,
            target_score: self.target_score,
            jobs,
            ..SearchConfig::default()
        }
    }

    pub fn metric(&self) -> SearchMetric {
        match self.metric {
            MetricKind::F1 => SearchMetric::F1 {
                threshold: self.threshold,
            },
            MetricKind::PrecisionAtRecall => SearchMetric::PrecisionAtRecall {
                recall: self.recall_target,
            },
        }
    }

    pub fn window(&self) -> WindowConfig {
        WindowConfig {
            window: self.window,
            context: self.context,
            batch: self.eval_batch,
        }
    }

    pub fn synth_spec(&self, hard_only: bool) -> SynthSpec {
        SynthSpec {
            total_frames: Some(self.synth_frames),
            gradual_prob: if hard_only { 0.0 } else { self.synth_gradual_prob },
            height: self.synth_height,
            width: self.synth_width,
            ..SynthSpec::default()
        }
    }
}

impl fmt::Display for RunConfig {
    /// The resolved configuration; parsing it back yields the same value.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# resolved configuration")?;
        for (k, v) in self.entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let s = cfg.sgd(cfg.epochs);
        assert_eq!((s.lr, s.momentum, s.batch, s.epochs), (0.1, 0.9, 16, 12));
        assert_eq!((s.loss.lambda1, s.loss.lambda2), (5.0, 0.1));
        assert_eq!(s.sample.frames, 60);
        assert_eq!(cfg.graft(), GraftConfig::default());
        let search = cfg.search(1);
        assert_eq!((search.population, search.epochs, search.init_epochs), (48, 100, 20));
        assert_eq!(cfg.recall_target, 0.71);
        assert_eq!(cfg.network(), NetworkConfig::default());
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = RunConfig::parse("net.preset = desk\nsgd.lr = 0.03\nsgd.clip_norm = 1\nsearch.acquisition = random\n").unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_string()).unwrap(), cfg);
        assert_eq!(cfg.to_string().lines().count(), RunConfig::KEYS.len() + 1);
    }

    #[test]
    fn preset_applies_before_overrides() {
        let cfg = RunConfig::parse("net.dropout = 0.2 # lower\nnet.preset = desk\n").unwrap();
        assert_eq!(cfg.network(), NetworkConfig { dropout: 0.2, ..NetworkConfig::desk() });
    }

    #[test]
    fn bad_lines_are_rejected_with_line_numbers() {
        let err = |t: &str| format!("{:#}", RunConfig::parse(t).unwrap_err());
        assert!(err("seed = 1\nsgd.learning_rate = 0.1").contains("line 2: unknown key `sgd.learning_rate`"));
        assert!(err("seed 1").contains("line 1"));
        assert!(err("seed = 1\nseed = 2").contains("already set on line 1"));
        assert!(err("sgd.lr = fast").contains("sgd.lr"));
        assert!(err("search.acquisition = ei").contains("pi, random"));
        assert!(err("loss.lambda1 = 0").contains("positive"));
        assert!(err("search.init_epochs = 200").contains("exceed"));
    }
}
