//! Run configuration: flat `key = value` text with dotted namespaces.
//!
//! ```text
//! # comment
//! paths.left = left.csv
//! train.epochs = 30
//! lsh.k = 8
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors. An empty value clears an optional setting. Relative paths are
//! resolved against the directory holding the config file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::blocking::{LshConfig, TuningGoal};
use crate::classifier::TrainConfig;
use crate::error::{Error, Result};
use crate::retrofit::RetrofitConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    pub left: Option<PathBuf>,
    /// Absent for deduplication within `left`.
    pub right: Option<PathBuf>,
    pub matches: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Defaults to `model.json` inside the output directory.
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Optional LSH tuning target; `n` defaults to the number of indexed tuples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TuneSettings {
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub n: Option<u64>,
}

impl TuneSettings {
    pub fn is_set(&self) -> bool {
        self.p1.is_some() || self.p2.is_some()
    }

    pub fn goal(&self, default_n: u64) -> Result<TuningGoal> {
        match (self.p1, self.p2) {
            (Some(p1), Some(p2)) => {
                let goal = TuningGoal {
                    p1,
                    p2,
                    n: self.n.unwrap_or(default_n),
                };
                goal.validate()?;
                Ok(goal)
            }
            _ => Err(Error::Config("tuning needs both tune.p1 and tune.p2".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub id_column: String,
    /// `train.seed` and `lsh.seed` follow `seed`.
    pub train: TrainConfig,
    pub lsh: LshConfig,
    pub tune: TuneSettings,
    pub retrofit_enabled: bool,
    pub retrofit: RetrofitConfig,
    /// When false, the pipeline skips training and uses `paths.model`.
    pub pipeline_train: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            id_column: "id".into(),
            train: TrainConfig::default(),
            lsh: LshConfig::default(),
            tune: TuneSettings::default(),
            retrofit_enabled: false,
            retrofit: RetrofitConfig::default(),
            pipeline_train: true,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Every key in echo order.
    pub const KEYS: &'static [&'static str] = &[
        "paths.left",
        "paths.right",
        "paths.matches",
        "paths.embeddings",
        "paths.model",
        "paths.out",
        "table.id_column",
        "compose.method",
        "similarity.kind",
        "train.learning_rate",
        "train.epochs",
        "train.batch_size",
        "train.l2",
        "train.embedding_update_rate",
        "train.neg_ratio",
        "train.folds",
        "train.noise_fraction",
        "train.lstm_hidden",
        "train.head_hidden",
        "train.fine_tune_embeddings",
        "lsh.k",
        "lsh.l",
        "lsh.probe_radius",
        "lsh.top_n",
        "tune.p1",
        "tune.p2",
        "tune.n",
        "retrofit.enabled",
        "retrofit.alpha",
        "retrofit.beta",
        "retrofit.iterations",
        "retrofit.init_neighbors",
        "pipeline.train",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "paths.left" => self.paths.left = path(value),
            "paths.right" => self.paths.right = path(value),
            "paths.matches" => self.paths.matches = path(value),
            "paths.embeddings" => self.paths.embeddings = path(value),
            "paths.model" => self.paths.model = path(value),
            "paths.out" => self.paths.out = path(value),
            "table.id_column" => {
                if value.is_empty() {
                    return Err(Error::Config("table.id_column must not be empty".into()));
                }
                self.id_column = value.to_owned();
            }
            "compose.method" => t.composition = value.parse()?,
            "similarity.kind" => t.similarity = value.parse()?,
            "train.learning_rate" => t.learning_rate = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.l2" => t.l2 = parse(key, value)?,
            "train.embedding_update_rate" => t.embedding_update_rate = parse(key, value)?,
            "train.neg_ratio" => t.neg_ratio = parse(key, value)?,
            "train.folds" => t.folds = parse(key, value)?,
            "train.noise_fraction" => t.noise_fraction = parse(key, value)?,
            "train.lstm_hidden" => t.lstm_hidden = parse(key, value)?,
            "train.head_hidden" => t.head_hidden = parse(key, value)?,
            "train.fine_tune_embeddings" => t.fine_tune_embeddings = parse(key, value)?,
            "lsh.k" => self.lsh.k = parse(key, value)?,
            "lsh.l" => self.lsh.l = parse(key, value)?,
            "lsh.probe_radius" => self.lsh.probe_radius = parse(key, value)?,
            "lsh.top_n" => self.lsh.top_n = parse(key, value)?,
            "tune.p1" => self.tune.p1 = optional(key, value)?,
            "tune.p2" => self.tune.p2 = optional(key, value)?,
            "tune.n" => self.tune.n = optional(key, value)?,
            "retrofit.enabled" => self.retrofit_enabled = parse(key, value)?,
            "retrofit.alpha" => self.retrofit.alpha = parse(key, value)?,
            "retrofit.beta" => self.retrofit.beta = parse(key, value)?,
            "retrofit.iterations" => self.retrofit.iterations = parse(key, value)?,
            "retrofit.init_neighbors" => self.retrofit.init_neighbors = parse(key, value)?,
            "pipeline.train" => self.pipeline_train = parse(key, value)?,
            "seed" => self.set_seed(parse(key, value)?),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        Some(match key {
            "paths.left" => show_path(&self.paths.left),
            "paths.right" => show_path(&self.paths.right),
            "paths.matches" => show_path(&self.paths.matches),
            "paths.embeddings" => show_path(&self.paths.embeddings),
            "paths.model" => show_path(&self.paths.model),
            "paths.out" => show_path(&self.paths.out),
            "table.id_column" => self.id_column.clone(),
            "compose.method" => t.composition.to_string(),
            "similarity.kind" => t.similarity.to_string(),
            "train.learning_rate" => t.learning_rate.to_string(),
            "train.epochs" => t.epochs.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.l2" => t.l2.to_string(),
            "train.embedding_update_rate" => t.embedding_update_rate.to_string(),
            "train.neg_ratio" => t.neg_ratio.to_string(),
            "train.folds" => t.folds.to_string(),
            "train.noise_fraction" => t.noise_fraction.to_string(),
            "train.lstm_hidden" => t.lstm_hidden.to_string(),
            "train.head_hidden" => t.head_hidden.to_string(),
            "train.fine_tune_embeddings" => t.fine_tune_embeddings.to_string(),
            "lsh.k" => self.lsh.k.to_string(),
            "lsh.l" => self.lsh.l.to_string(),
            "lsh.probe_radius" => self.lsh.probe_radius.to_string(),
            "lsh.top_n" => self.lsh.top_n.to_string(),
            "tune.p1" => show(&self.tune.p1),
            "tune.p2" => show(&self.tune.p2),
            "tune.n" => show(&self.tune.n),
            "retrofit.enabled" => self.retrofit_enabled.to_string(),
            "retrofit.alpha" => self.retrofit.alpha.to_string(),
            "retrofit.beta" => self.retrofit.beta.to_string(),
            "retrofit.iterations" => self.retrofit.iterations.to_string(),
            "retrofit.init_neighbors" => self.retrofit.init_neighbors.to_string(),
            "pipeline.train" => self.pipeline_train.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.lsh.seed = seed;
    }

    /// Parses config text on top of the defaults. Paths are left as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(line_no, format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(Error::format(line_no, format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {line_no}: {m}")),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.left,
            &mut p.right,
            &mut p.matches,
            &mut p.embeddings,
            &mut p.model,
            &mut p.out,
        ] {
            if let Some(v) = slot.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        }
    }

    /// Output directory, defaulting to `run` next to the current directory.
    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("run"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.model.clone().unwrap_or_else(|| self.out_dir().join("model.json"))
    }

    /// Checks settings that do not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.lsh.validate()?;
        self.retrofit.validate()?;
        Ok(())
    }

    /// Fully resolved `key=value` text, one key per line, every key present.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            let _ = writeln!(s, "{key}={}", self.get(key).unwrap_or_default());
        }
        s
    }
}
