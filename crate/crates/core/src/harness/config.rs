use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curriculum::{one_class_tasks, TaskSpec};
use crate::data::{generate_synthetic, load_feature_csv, planted_geometry, Dataset, DatasetManifest, SyntheticSpec};
use crate::distance::Metric;
use crate::error::{Error, Result};
use crate::learner::{StrategyConfig, TrainConfig};
use crate::metrics::{TTestKind, DEFAULT_TIERS};

/// Where the features come from. Exactly one of `preset`, `spec` or `csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "default_dataset_name")]
    pub name: String,
    /// Named planted geometry, see [`crate::data::PRESETS`].
    #[serde(default)]
    pub preset: Option<String>,
    /// JSON file holding a [`SyntheticSpec`].
    #[serde(default)]
    pub spec: Option<PathBuf>,
    /// Feature CSV; needs `manifest`.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "default_train_per_class")]
    pub train_per_class: usize,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_dataset_name() -> String {
    "dataset".into()
}
fn default_dim() -> usize {
    8
}
fn default_spread() -> f64 {
    0.5
}
fn default_train_per_class() -> usize {
    200
}
fn default_test_per_class() -> usize {
    100
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            name: default_dataset_name(),
            preset: Some("hub-twin".into()),
            spec: None,
            csv: None,
            manifest: None,
            dim: default_dim(),
            spread: default_spread(),
            train_per_class: default_train_per_class(),
            test_per_class: default_test_per_class(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    /// Generates or loads the dataset; relative paths resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Dataset> {
        let at = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        match (&self.preset, &self.spec, &self.csv) {
            (Some(kind), None, None) => {
                let spec = planted_geometry(kind, self.dim, self.spread, self.seed)?;
                generate_synthetic(&self.name, &spec, self.train_per_class, self.test_per_class)
            }
            (None, Some(path), None) => {
                let spec: SyntheticSpec = serde_json::from_reader(std::fs::File::open(at(path))?)?;
                generate_synthetic(&self.name, &spec, self.train_per_class, self.test_per_class)
            }
            (None, None, Some(csv)) => {
                let manifest = self
                    .manifest
                    .as_ref()
                    .ok_or_else(|| Error::Config("dataset.csv needs dataset.manifest".into()))?;
                load_feature_csv(&at(csv), &DatasetManifest::read(&at(manifest))?)
            }
            _ => Err(Error::Config(
                "dataset needs exactly one of `preset`, `spec` or `csv`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignerConfig {
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Training vectors averaged per class prototype; 0 means all.
    #[serde(default)]
    pub sample_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl Default for DesignerConfig {
    fn default() -> Self {
        DesignerConfig {
            metric: Metric::Cosine,
            normalize: true,
            sample_size: 0,
            seed: 0,
        }
    }
}

/// How classes are grouped into tasks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Paradigm {
    /// One class per task.
    #[default]
    OneClassTasks,
    /// Explicit class groups; each group is one task.
    GroupedTasks(Vec<Vec<usize>>),
}

impl Paradigm {
    /// The base task list; curricula are its permutations.
    pub fn tasks(&self, n_classes: usize) -> Vec<TaskSpec> {
        match self {
            Paradigm::OneClassTasks => one_class_tasks(n_classes),
            Paradigm::GroupedTasks(groups) => groups.iter().map(|g| TaskSpec::new(g.iter().copied())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_random_repeats")]
    pub random_repeats: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_tiers")]
    pub tiers: usize,
    /// Curricula per side of the top-vs-bottom F t-test.
    #[serde(default = "default_ttest_k")]
    pub ttest_k: usize,
    #[serde(default)]
    pub ttest: TTestKind,
    /// Strategies whose empirical rankings enter Recall@K, H and Spearman;
    /// empty means every strategy.
    #[serde(default)]
    pub agreement: Vec<String>,
    #[serde(default)]
    pub paradigm: Paradigm,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub fail_fast: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_random_repeats() -> usize {
    100
}
fn default_k_max() -> usize {
    30
}
fn default_tiers() -> usize {
    DEFAULT_TIERS
}
fn default_ttest_k() -> usize {
    10
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            seeds: default_seeds(),
            master_seed: 0,
            random_repeats: default_random_repeats(),
            k_max: default_k_max(),
            tiers: default_tiers(),
            ttest_k: default_ttest_k(),
            ttest: TTestKind::default(),
            agreement: Vec::new(),
            paradigm: Paradigm::default(),
            workers: None,
            out: default_out(),
            fail_fast: false,
        }
    }
}

/// One configured learner: a strategy plus its training regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub strategy: StrategyConfig,
    pub train: TrainConfig,
}

const TRAIN_KEYS: [&str; 8] = ["epochs", "batch_size", "lr", "beta1", "beta2", "eps", "init", "shuffle_within_task"];
const STRATEGY_KEYS: [&str; 5] = ["kind", "lambda", "temperature", "buffer_fraction", "policy"];

impl LearnerConfig {
    /// Parses a `[learner.<name>]` table. `kind` defaults to `name`.
    fn from_table(name: &str, table: &toml::Table) -> Result<Self> {
        if let Some(k) = table
            .keys()
            .find(|k| !TRAIN_KEYS.contains(&k.as_str()) && !STRATEGY_KEYS.contains(&k.as_str()))
        {
            return Err(Error::Config(format!("unknown key `{k}` in [learner.{name}]")));
        }
        let (mut strat, mut train) = (toml::Table::new(), toml::Table::new());
        for (k, v) in table {
            let dest = if TRAIN_KEYS.contains(&k.as_str()) { &mut train } else { &mut strat };
            dest.insert(k.clone(), v.clone());
        }
        strat
            .entry("kind")
            .or_insert_with(|| toml::Value::String(name.to_string()));
        let err = |e: toml::de::Error| Error::Config(format!("[learner.{name}]: {e}"));
        let strategy: StrategyConfig = strat.try_into().map_err(err)?;
        let train: TrainConfig = train.try_into().map_err(err)?;
        strategy.validate()?;
        train.validate()?;
        Ok(LearnerConfig { strategy, train })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    dataset: DatasetConfig,
    #[serde(default)]
    designer: DesignerConfig,
    #[serde(default)]
    learner: BTreeMap<String, toml::Table>,
    #[serde(default)]
    experiment: ExperimentSettings,
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub designer: DesignerConfig,
    /// Learners by name; the map order is the canonical strategy order.
    pub learner: BTreeMap<String, LearnerConfig>,
    pub experiment: ExperimentSettings,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let learner = raw
            .learner
            .iter()
            .map(|(name, t)| Ok((name.clone(), LearnerConfig::from_table(name, t)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let cfg = ExperimentConfig {
            dataset: raw.dataset,
            designer: raw.designer,
            learner,
            experiment: raw.experiment,
            base_dir: PathBuf::from("."),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let x = &self.experiment;
        if x.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds must not be empty".into()));
        }
        let mut seeds = x.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != x.seeds.len() {
            return Err(Error::Config("experiment.seeds has duplicates".into()));
        }
        if self.learner.is_empty() {
            return Err(Error::Config("at least one [learner.<name>] section is required".into()));
        }
        if x.tiers == 0 || x.k_max == 0 || x.ttest_k < 2 {
            return Err(Error::Config("tiers and k_max must be positive, ttest_k at least 2".into()));
        }
        if let Some(a) = x.agreement.iter().find(|a| !self.learner.contains_key(*a)) {
            return Err(Error::Config(format!("agreement strategy `{a}` has no [learner.{a}] section")));
        }
        if x.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        Ok(())
    }

    /// Strategy names in canonical order.
    pub fn strategy_names(&self) -> Vec<&str> {
        self.learner.keys().map(String::as_str).collect()
    }

    /// Names entering the agreement metrics.
    pub fn agreement_names(&self) -> Vec<&str> {
        if self.experiment.agreement.is_empty() {
            self.strategy_names()
        } else {
            self.experiment.agreement.iter().map(String::as_str).collect()
        }
    }

    /// Output directory, resolved against the config location.
    pub fn out_dir(&self) -> PathBuf {
        let out = &self.experiment.out;
        if out.is_absolute() {
            out.clone()
        } else {
            self.base_dir.join(out)
        }
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
