//! Experiment configuration files.
//!
//! A file is a list of `key = value` lines; `#` starts a comment and blank
//! lines are ignored. Keys are the long CLI flag names without the leading
//! dashes, and command-line flags override file values.
//!
//! ```text
//! # cora, heavy-ball
//! dataset = cora
//! optimizer = heavy-ball
//! lr = 0.05
//! neighbors = 2
//! batch-size = 50
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::CacheInit;
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::sampling::{SamplingMode, ScaleRule};
use crate::trainer::{OutputIterate, TrainConfig};

/// Every recognized key, in the order [`ExperimentSpec::to_config_string`]
/// writes them.
pub const KEYS: &[&str] = &[
    "dataset",
    "dataset-dir",
    "large-scale",
    "optimizer",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight-decay",
    "adam-bias-correction",
    "layers",
    "hidden-dim",
    "dropout",
    "neighbors",
    "batch-size",
    "sampling-mode",
    "scale-rule",
    "epochs",
    "eval-every",
    "seed",
    "sampler-seed",
    "runs",
    "output-iterate",
    "cache-init",
    "deterministic",
    "metrics-out",
    "checkpoint-out",
];

/// Where a setting came from, for error messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Flag,
    File { path: PathBuf, line: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Entry {
    value: String,
    origin: Origin,
}

/// Raw key/value settings before interpretation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Settings {
    entries: BTreeMap<String, Entry>,
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses configuration text. `path` is only used in messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut settings = Settings::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::parse(path, i + 1, format!("unknown key {key:?}")));
            }
            if value.is_empty() {
                return Err(Error::parse(path, i + 1, format!("missing value for {key:?}")));
            }
            let origin = Origin::File { path: path.to_path_buf(), line: i + 1 };
            if settings.entries.insert(key.to_string(), Entry { value: value.to_string(), origin }).is_some() {
                return Err(Error::parse(path, i + 1, format!("duplicate key {key:?}")));
            }
        }
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Records a command-line flag, replacing any file value.
    pub fn set_flag(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown setting {key:?}")));
        }
        self.entries.insert(key.to_string(), Entry { value: value.into(), origin: Origin::Flag });
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// `--key` for flags, `key (file:line)` for file values.
    pub fn describe(&self, key: &str) -> String {
        match self.entries.get(key).map(|e| &e.origin) {
            Some(Origin::File { path, line }) => format!("{key} ({}:{line})", path.display()),
            _ => format!("--{key}"),
        }
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| Error::Config(format!("{}: invalid value {v:?}: {e}", self.describe(key))))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!("{}: expected true or false, got {v:?}", self.describe(key)))),
            })
            .transpose()
    }
}

/// A complete, validated-for-consistency experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    /// Short dataset name, e.g. `cora`.
    pub dataset: Option<String>,
    pub dataset_dir: Option<PathBuf>,
    /// Too large for routine runs.
    pub large_scale: bool,
    pub train: TrainConfig,
    pub runs: usize,
    pub metrics_out: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            dataset: None,
            dataset_dir: None,
            large_scale: false,
            train: TrainConfig::default(),
            runs: 1,
            metrics_out: None,
            checkpoint_out: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        spec.dataset = s.get("dataset").map(str::to_string);
        spec.dataset_dir = s.get("dataset-dir").map(PathBuf::from);
        spec.large_scale = s.flag("large-scale")?.unwrap_or(false);
        spec.metrics_out = s.get("metrics-out").map(PathBuf::from);
        spec.checkpoint_out = s.get("checkpoint-out").map(PathBuf::from);
        spec.runs = s.parsed("runs")?.unwrap_or(1);
        if spec.runs == 0 {
            return Err(Error::Config(format!("{}: at least one run is required", s.describe("runs"))));
        }

        let kind: OptimizerKind = s.parsed("optimizer")?.unwrap_or(OptimizerKind::Adam);
        let lr = s.parsed("lr")?.unwrap_or(spec.train.optimizer.lr);
        let mut opt = OptimizerConfig::new(kind, lr);
        if let Some(b1) = s.parsed::<f64>("beta1")? {
            if kind == OptimizerKind::Sgd && b1 != 0.0 {
                return Err(conflict(s, "beta1", "optimizer", "sgd has no momentum; use heavy-ball"));
            }
            opt.beta1 = b1;
        }
        if let Some(b2) = s.parsed("beta2")? {
            if !kind.uses_beta2() {
                return Err(conflict(s, "beta2", "optimizer", &format!("{kind} has no second-moment EMA")));
            }
            opt.beta2 = b2;
        }
        if let Some(bc) = s.flag("adam-bias-correction")? {
            if bc && kind != OptimizerKind::Adam {
                return Err(conflict(s, "adam-bias-correction", "optimizer", "bias correction applies to adam only"));
            }
            opt.adam_bias_correction = bc;
        }
        if let Some(eps) = s.parsed("eps")? {
            opt.eps = eps;
        }
        if let Some(wd) = s.parsed("weight-decay")? {
            opt.weight_decay = wd;
        }
        opt.validate()?;

        let t = &mut spec.train;
        t.optimizer = opt;
        t.layers = s.parsed("layers")?.unwrap_or(t.layers);
        t.hidden_dim = s.parsed("hidden-dim")?.unwrap_or(t.hidden_dim);
        t.dropout = s.parsed("dropout")?.unwrap_or(t.dropout);
        t.epochs = s.parsed("epochs")?.unwrap_or(t.epochs);
        t.eval_every = s.parsed("eval-every")?.unwrap_or(t.eval_every);
        t.seed = s.parsed("seed")?.unwrap_or(t.seed);
        t.output_iterate = s.parsed::<OutputIterate>("output-iterate")?.unwrap_or_default();
        t.cache_init = s.parsed::<CacheInit>("cache-init")?.unwrap_or_default();
        t.record_wall_time = !s.flag("deterministic")?.unwrap_or(false);
        t.sampler.neighbors = s.parsed("neighbors")?.unwrap_or(t.sampler.neighbors);
        t.sampler.batch_size = s.parsed("batch-size")?.unwrap_or(t.sampler.batch_size);
        t.sampler.mode = s.parsed::<SamplingMode>("sampling-mode")?.unwrap_or_default();
        t.sampler.scale = s.parsed::<ScaleRule>("scale-rule")?.unwrap_or_default();
        t.sampler.seed = s.parsed("sampler-seed")?.unwrap_or(t.seed);
        Ok(spec)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        Self::from_settings(&Settings::parse(text, path)?)
    }

    /// Writes every setting, in a form [`ExperimentSpec::parse`] reads back
    /// to an equal spec.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        if let Some(d) = &self.dataset {
            put("dataset", d);
        }
        if let Some(d) = &self.dataset_dir {
            put("dataset-dir", &d.display());
        }
        if self.large_scale {
            put("large-scale", &true);
        }
        let t = &self.train;
        let o = &t.optimizer;
        put("optimizer", &o.kind);
        put("lr", &o.lr);
        if o.kind != OptimizerKind::Sgd {
            put("beta1", &o.beta1);
        }
        if o.kind.uses_beta2() {
            put("beta2", &o.beta2);
        }
        put("eps", &o.eps);
        put("weight-decay", &o.weight_decay);
        if o.kind == OptimizerKind::Adam {
            put("adam-bias-correction", &o.adam_bias_correction);
        }
        put("layers", &t.layers);
        put("hidden-dim", &t.hidden_dim);
        put("dropout", &t.dropout);
        put("neighbors", &t.sampler.neighbors);
        put("batch-size", &t.sampler.batch_size);
        put("sampling-mode", &t.sampler.mode.as_str());
        put("scale-rule", &t.sampler.scale.as_str());
        put("epochs", &t.epochs);
        put("eval-every", &t.eval_every);
        put("seed", &t.seed);
        if t.sampler.seed != t.seed {
            put("sampler-seed", &t.sampler.seed);
        }
        put("runs", &self.runs);
        put("output-iterate", &t.output_iterate.as_str());
        put("cache-init", &t.cache_init.as_str());
        put("deterministic", &!t.record_wall_time);
        if let Some(p) = &self.metrics_out {
            put("metrics-out", &p.display());
        }
        if let Some(p) = &self.checkpoint_out {
            put("checkpoint-out", &p.display());
        }
        out
    }
}

fn conflict(s: &Settings, a: &str, b: &str, why: &str) -> Error {
    let b_desc = if s.contains(b) { s.describe(b) } else { format!("the default --{b}") };
    let b_val = s.get(b).unwrap_or("adam");
    Error::Usage(format!("{} conflicts with {} {b_val}: {why}", s.describe(a), b_desc))
}

/// Datasets with shipped reproduction configs.
pub const REPRO_DATASETS: [&str; 5] = ["cora", "citeseer", "ogbn-arxiv", "flickr", "reddit"];

macro_rules! repro_table {
    ($($ds:literal / $opt:literal),* $(,)?) => {
        &[$((concat!($ds, "-", $opt), include_str!(concat!("../configs/", $ds, "-", $opt, ".conf")))),*]
    };
}

/// `(name, text)` of every shipped configuration.
pub const REPRO_CONFIGS: &[(&str, &str)] = repro_table![
    "cora" / "adam",
    "cora" / "heavy-ball",
    "cora" / "amsgrad",
    "cora" / "adagrad",
    "cora" / "sgd",
    "citeseer" / "adam",
    "citeseer" / "heavy-ball",
    "citeseer" / "amsgrad",
    "citeseer" / "adagrad",
    "citeseer" / "sgd",
    "ogbn-arxiv" / "adam",
    "ogbn-arxiv" / "heavy-ball",
    "ogbn-arxiv" / "amsgrad",
    "ogbn-arxiv" / "adagrad",
    "ogbn-arxiv" / "sgd",
    "flickr" / "adam",
    "flickr" / "heavy-ball",
    "flickr" / "amsgrad",
    "flickr" / "adagrad",
    "flickr" / "sgd",
    "reddit" / "adam",
    "reddit" / "heavy-ball",
    "reddit" / "amsgrad",
    "reddit" / "adagrad",
    "reddit" / "sgd",
];

/// Text of the shipped configuration for `dataset` and `optimizer`.
pub fn repro_config_text(dataset: &str, optimizer: OptimizerKind) -> Result<&'static str> {
    let name = format!("{}-{}", dataset.to_ascii_lowercase(), optimizer.as_str());
    REPRO_CONFIGS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text).ok_or_else(|| {
        Error::Config(format!("no reproduction config for {dataset:?}; known: {}", REPRO_DATASETS.join(", ")))
    })
}

/// Settings of the shipped configuration, with origins pointing at the
/// embedded file name.
pub fn repro_settings(dataset: &str, optimizer: OptimizerKind) -> Result<Settings> {
    let text = repro_config_text(dataset, optimizer)?;
    let name = format!("configs/{}-{}.conf", dataset.to_ascii_lowercase(), optimizer.as_str());
    Settings::parse(text, Path::new(&name))
}
