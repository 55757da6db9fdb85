//! Config files for every command. Each file fully determines its command's
//! outputs; the only things flags may change are the seed, the output
//! directory and the worker count.

use std::fmt;
use std::path::{Path, PathBuf};

use ggc::gae::{AutoencoderKind, EncoderConfig};
use ggc::trainer::{ClassifierKind, SearchSpace, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Every problem found in a config file, reported together.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

/// A config file that can check itself and take a seed override.
pub trait CommandConfig: DeserializeOwned + Serialize {
    /// Every violated constraint, each naming its field. Relative paths have
    /// already been resolved when this runs.
    fn validate(&self) -> Vec<String>;
    fn set_seed(&mut self, seed: u64);
    fn seed(&self) -> u64;
    /// Rewrites relative paths against the directory holding the config file.
    fn resolve_paths(&mut self, _base: &Path) {}
}

/// Reads, resolves and validates a config file.
pub fn load<C: CommandConfig>(path: &Path, seed: Option<u64>) -> Result<C, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("config {}: {e}", path.display())]))?;
    parse(&text, path.parent().unwrap_or(Path::new(".")), seed)
}

pub fn parse<C: CommandConfig>(text: &str, base: &Path, seed: Option<u64>) -> Result<C, ConfigErrors> {
    let mut cfg: C = toml::from_str(text).map_err(|e| ConfigErrors(vec![one_line(&e.to_string())]))?;
    cfg.resolve_paths(base);
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let problems = cfg.validate();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(problems))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() && !p.as_os_str().is_empty() {
        *p = base.join(&*p);
    }
}

fn require_file(out: &mut Vec<String>, field: &str, p: &Path) {
    if p.as_os_str().is_empty() {
        out.push(format!("{field} is required"));
    } else if !p.is_file() {
        out.push(format!("{field} {} does not exist", p.display()));
    }
}

fn require_dir(out: &mut Vec<String>, field: &str, p: &Path) {
    if p.as_os_str().is_empty() {
        out.push(format!("{field} is required"));
    } else if !p.is_dir() {
        out.push(format!("{field} {} is not a directory", p.display()));
    }
}

fn prefixed(prefix: &str, problems: Vec<String>) -> impl Iterator<Item = String> + '_ {
    problems.into_iter().map(move |p| format!("{prefix}.{p}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Synthetic,
    Jets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    /// Synthetic only: graphs to generate before splitting.
    pub samples: usize,
    /// Synthetic only: class separation, 0 makes the classes identical.
    pub separation: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Jets only: a `GGCJ` container, or the text format when the extension is `.txt`.
    pub path: PathBuf,
    /// Jets only: scale the continuous columns by training-split maxima.
    pub normalize: bool,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            kind: SourceKind::Synthetic,
            samples: 3500,
            separation: 1.0,
            min_nodes: 10,
            max_nodes: 40,
            path: PathBuf::new(),
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self { train: 2000, val: 500, test: 1000 }
    }
}

impl SplitSizes {
    pub fn as_array(self) -> [usize; 3] {
        [self.train, self.val, self.test]
    }

    fn validate(&self, out: &mut Vec<String>) {
        for (name, v) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if v == 0 {
                out.push(format!("split.{name} must be positive"));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub seed: u64,
    pub source: SourceConfig,
    pub split: SplitSizes,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self { seed: 42, source: SourceConfig::default(), split: SplitSizes::default() }
    }
}

fn validate_synthetic(out: &mut Vec<String>, prefix: &str, samples: usize, separation: f64, min: usize, max: usize) {
    if samples == 0 {
        out.push(format!("{prefix}samples must be positive"));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        out.push(format!("{prefix}separation {separation} must be finite and non-negative"));
    }
    if min == 0 {
        out.push(format!("{prefix}min_nodes must be at least 1"));
    }
    if max < min {
        out.push(format!("{prefix}max_nodes {max} is below min_nodes {min}"));
    }
}

impl CommandConfig for PrepareConfig {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let s = &self.source;
        match s.kind {
            SourceKind::Synthetic => {
                validate_synthetic(&mut out, "source.", s.samples, s.separation, s.min_nodes, s.max_nodes);
                let need = self.split.train + self.split.val + self.split.test;
                if need > s.samples {
                    out.push(format!("split sizes total {need}, more than source.samples {}", s.samples));
                }
            }
            SourceKind::Jets => require_file(&mut out, "source.path", &s.path),
        }
        self.split.validate(&mut out);
        out
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.source.path);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    pub val: PathBuf,
}

impl DataPaths {
    fn validate(&self, out: &mut Vec<String>) {
        require_file(out, "data.train", &self.train);
        require_file(out, "data.val", &self.val);
    }

    fn resolve(&mut self, base: &Path) {
        resolve(base, &mut self.train);
        resolve(base, &mut self.val);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub data: DataPaths,
    #[serde(default)]
    pub model: TrainConfig,
}

impl CommandConfig for TrainFile {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.data.validate(&mut out);
        out.extend(prefixed("model", self.model.validate()));
        out
    }

    fn set_seed(&mut self, seed: u64) {
        self.model.seed = seed;
    }

    fn seed(&self) -> u64 {
        self.model.seed
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.data.resolve(base);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchPlan {
    Exhaustive,
    Sequential,
    /// Batch size × learning rate exhaustively, then λ.
    Classical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchFile {
    pub mode: SearchPlan,
    pub data: DataPaths,
    #[serde(default)]
    pub base: TrainConfig,
    #[serde(default = "SearchSpace::standard")]
    pub space: SearchSpace,
}

impl CommandConfig for SearchFile {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.data.validate(&mut out);
        out.extend(prefixed("base", self.base.validate()));
        let sp = &self.space;
        if sp.batch_size.is_empty() && sp.learning_rate.is_empty() && sp.layers.is_empty() && sp.lambda.is_empty() {
            out.push("space has no values to search".into());
        }
        if sp.batch_size.contains(&0) {
            out.push("space.batch_size entries must be positive".into());
        }
        if sp.learning_rate.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            out.push("space.learning_rate entries must be positive".into());
        }
        if sp.layers.contains(&0) {
            out.push("space.layers entries must be positive".into());
        }
        if sp.lambda.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            out.push("space.lambda entries must lie in [0, 1]".into());
        }
        out
    }

    fn set_seed(&mut self, seed: u64) {
        self.base.seed = seed;
    }

    fn seed(&self) -> u64 {
        self.base.seed
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.data.resolve(base);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateFile {
    /// Output directory of a `train` run.
    pub run: PathBuf,
    /// Held-out dataset to score.
    pub data: PathBuf,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_folds() -> usize {
    5
}

fn default_seed() -> u64 {
    42
}

impl CommandConfig for EvaluateFile {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        require_dir(&mut out, "run", &self.run);
        require_file(&mut out, "data", &self.data);
        if self.folds == 0 {
            out.push("folds must be at least 1".into());
        }
        out
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.run);
        resolve(base, &mut self.data);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressFile {
    pub data: PathBuf,
    /// A `train` run whose autoencoder to use. Without it a freshly
    /// initialised encoder is built from the fields below.
    #[serde(default)]
    pub run: Option<PathBuf>,
    #[serde(default = "default_autoencoder")]
    pub autoencoder: AutoencoderKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub encoder: EncoderConfig,
}

fn default_autoencoder() -> AutoencoderKind {
    AutoencoderKind::Miagae
}

impl CommandConfig for CompressFile {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        require_file(&mut out, "data", &self.data);
        match &self.run {
            Some(r) => require_dir(&mut out, "run", r),
            None => out.extend(self.encoder.validate()),
        }
        out
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.data);
        if let Some(r) = &mut self.run {
            resolve(base, r);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceConfig {
    pub seed: u64,
    pub samples: usize,
    pub separation: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub split: SplitSizes,
    pub folds: usize,
    pub autoencoders: Vec<AutoencoderKind>,
    pub classifiers: Vec<ClassifierKind>,
    /// Shared hyperparameters for every row.
    pub model: TrainConfig,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            samples: 3500,
            separation: 1.0,
            min_nodes: 10,
            max_nodes: 40,
            split: SplitSizes::default(),
            folds: 5,
            autoencoders: vec![AutoencoderKind::Miagae, AutoencoderKind::Sag],
            classifiers: vec![ClassifierKind::Gnn, ClassifierKind::Qgnn1, ClassifierKind::Qgnn2],
            model: TrainConfig::default(),
        }
    }
}

impl CommandConfig for ReproduceConfig {
    fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        validate_synthetic(&mut out, "", self.samples, self.separation, self.min_nodes, self.max_nodes);
        self.split.validate(&mut out);
        let need = self.split.train + self.split.val + self.split.test;
        if need > self.samples {
            out.push(format!("split sizes total {need}, more than samples {}", self.samples));
        }
        if self.folds == 0 {
            out.push("folds must be at least 1".into());
        }
        if self.autoencoders.is_empty() {
            out.push("autoencoders must list at least one kind".into());
        }
        if self.classifiers.is_empty() {
            out.push("classifiers must list at least one kind".into());
        }
        out.extend(prefixed("model", self.model.validate()));
        out
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.model.seed = seed;
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_file_lists_every_problem() {
        let text = "[data]\ntrain = \"missing.ggcd\"\nval = \"\"\n[model]\nlambda = 1.5\nbatch_size = 0\n";
        let err = parse::<TrainFile>(text, Path::new("/nonexistent"), None).unwrap_err();
        let joined = err.to_string();
        for field in ["data.train", "data.val", "model.lambda", "model.batch_size"] {
            assert!(joined.contains(field), "{field} missing from {joined}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse::<PrepareConfig>("seeed = 3\n", Path::new("."), None).unwrap_err();
        assert!(err.to_string().contains("seeed"));
    }

    #[test]
    fn seed_override_reaches_the_model() {
        let cfg: ReproduceConfig = parse("", Path::new("."), Some(7)).unwrap();
        assert_eq!((cfg.seed, cfg.model.seed), (7, 7));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut cfg = EvaluateFile { run: "r".into(), data: "/abs/t.ggcd".into(), folds: 5, seed: 1 };
        cfg.resolve_paths(Path::new("/base"));
        assert_eq!(cfg.run, PathBuf::from("/base/r"));
        assert_eq!(cfg.data, PathBuf::from("/abs/t.ggcd"));
    }
}
