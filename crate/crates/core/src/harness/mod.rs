//! Experiment plumbing behind the `gnnevo` binary: run configuration,
//! history logs, and the search / train / tune / compare / report
//! commands.

pub mod commands;
pub mod history;
pub mod report;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{generate_sbm, load_bundle, DataError, GraphDataset, SbmParams};
use crate::evolution::{default_sample_size, EvolutionError, SearchConfig, Strategy, TuningConfig};
use crate::genome::{GenomeError, GenomeSpace, Task};
use crate::gnn::{GnnError, Hyperparams, DEFAULT_PARAM_CAP};
use crate::hyperopt::HyperoptError;

pub use commands::{
    cmd_compare, cmd_generate_sbm, cmd_report, cmd_search, cmd_train, cmd_tune, CompareDoc, MetricsDoc,
    ResultDoc, TuneDoc,
};
pub use history::{read_history, History, HistoryEntry, HistoryHeader};
pub use report::{report, ReportDoc};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("genome: {0}")]
    Genome(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Hyperopt(#[from] HyperoptError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error("{0}")]
    Failed(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short stable tag for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Data(_) => "data",
            HarnessError::Genome(_) => "genome",
            HarnessError::Gnn(_) => "training",
            HarnessError::Hyperopt(_) => "tuning",
            HarnessError::Evolution(_) => "search",
            HarnessError::Failed(_) => "failed",
        }
    }
}

impl From<GenomeError> for HarnessError {
    fn from(e: GenomeError) -> Self {
        HarnessError::Genome(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    /// Train every candidate; fitness is the validation metric.
    Train,
    /// Fitness is the depth. For exercising the search without training.
    Depth,
}

/// Everything a run needs. Loaded from TOML, every key optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub tuning: Toggle,
    pub evaluator: EvaluatorKind,
    pub population_size: usize,
    /// Tournament size; a quarter of the population when absent.
    pub sample_size: Option<usize>,
    pub budget: usize,
    pub max_layers: usize,
    pub seed: u64,
    pub workers: usize,
    pub param_cap: usize,
    /// Dataset bundle directory. Without one the `sbm` section is used.
    pub dataset: Option<PathBuf>,
    /// Expected task; checked against the dataset when set.
    pub task: Option<Task>,
    pub hyperparams: Hyperparams,
    pub tuner: TuningConfig,
    pub space: GenomeSpace,
    pub sbm: SbmParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Evolution,
            tuning: Toggle::On,
            evaluator: EvaluatorKind::Train,
            population_size: 100,
            sample_size: None,
            budget: 2000,
            max_layers: 10,
            seed: 0,
            workers: 1,
            param_cap: DEFAULT_PARAM_CAP,
            dataset: None,
            task: None,
            hyperparams: Hyperparams::default(),
            tuner: TuningConfig::default(),
            space: GenomeSpace::default(),
            sbm: SbmParams::default(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML document, then applies dotted `key=value` overrides
    /// (`hyperparams.lr=0.005`, `space.heads=[1,2]`). Values are TOML;
    /// anything that does not parse as TOML is taken as a string.
    pub fn from_toml(text: &str, sets: &[String]) -> Result<Self, HarnessError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        for set in sets {
            apply_set(&mut table, set)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.message().to_string()))
    }

    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self, HarnessError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, sets)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size.unwrap_or_else(|| default_sample_size(self.population_size))
    }

    pub fn search_config(&self, output_classes: u32, task: Task) -> SearchConfig {
        SearchConfig {
            population_size: self.population_size,
            sample_size: self.sample_size(),
            budget: self.budget,
            max_layers: self.max_layers,
            seed: self.seed,
            workers: self.workers,
            output_classes,
            task,
        }
    }

    pub fn tuning_config(&self) -> Option<TuningConfig> {
        (self.tuning == Toggle::On).then(|| self.tuner.clone())
    }

    /// Checks every setting that does not need the dataset. Commands call
    /// this before touching any file.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.check_settings().map_err(|e| match e {
            HarnessError::Config(_) => e,
            other => HarnessError::Config(other.to_string()),
        })
    }

    fn check_settings(&self) -> Result<(), HarnessError> {
        self.search_config(1, Task::SingleLabel).check(self.strategy)?;
        self.space.check()?;
        if self.param_cap == 0 {
            return Err(HarnessError::Config("param_cap must be >= 1".into()));
        }
        self.hyperparams.check()?;
        self.tuner.space.check()?;
        self.tuner.tpe.check()?;
        if self.tuner.max_trials == 0 {
            return Err(HarnessError::Config("tuner.max_trials must be >= 1".into()));
        }
        // unknown dimension names surface here rather than mid-run
        let probe: Vec<f64> = self.tuner.space.dims.iter().map(|d| first_value(&d.dim)).collect();
        self.tuner.space.apply(&probe, &self.hyperparams)?;
        match &self.dataset {
            Some(p) if !p.is_dir() => {
                return Err(HarnessError::Config(format!("dataset {} is not a directory", p.display())))
            }
            Some(_) => {}
            None => self.sbm.check()?,
        }
        Ok(())
    }

    /// Loads the bundle, or generates the SBM fixture when none is set.
    pub fn dataset(&self) -> Result<GraphDataset, HarnessError> {
        let data = match &self.dataset {
            Some(p) => load_bundle(p)?,
            None => generate_sbm(&self.sbm)?,
        };
        if let Some(task) = self.task {
            if task != data.task() {
                return Err(HarnessError::Config(format!(
                    "task is {task} but dataset {} is {}",
                    data.name,
                    data.task()
                )));
            }
        }
        Ok(data)
    }
}

fn first_value(dim: &crate::hyperopt::Dimension) -> f64 {
    use crate::hyperopt::Dimension;
    match dim {
        Dimension::LogUniform { lo, .. } | Dimension::Uniform { lo, .. } => *lo,
        Dimension::Discrete { values } => values[0],
    }
}

fn apply_set(table: &mut toml::Table, set: &str) -> Result<(), HarnessError> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {set:?} is not key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty());
    let last = last.ok_or_else(|| HarnessError::Config(format!("empty key in {set:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("{p} in {key} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_toml("", &[]).unwrap(), RunConfig::default());
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig {
            sample_size: Some(7),
            task: Some(Task::MultiLabel),
            dataset: Some("data/x".into()),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml(), &[]).unwrap(), cfg);
    }

    #[test]
    fn overrides_reach_nested_sections() {
        let cfg = RunConfig::from_toml(
            "budget = 50\n[hyperparams]\nlr = 0.1\n",
            &[
                "hyperparams.lr=0.005".into(),
                "space.heads=[1, 2]".into(),
                "strategy=random".into(),
                "sbm.communities=3".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.budget, 50);
        assert_eq!(cfg.hyperparams.lr, 0.005);
        assert_eq!(cfg.hyperparams.patience, Hyperparams::default().patience);
        assert_eq!(cfg.space.heads, vec![1, 2]);
        assert_eq!(cfg.strategy, Strategy::Random);
        assert_eq!(cfg.sbm.communities, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("buget = 5", &[]).is_err());
        assert!(RunConfig::from_toml("", &["hyperparams.learning_rate=0.1".into()]).is_err());
        assert!(RunConfig::from_toml("", &["budget".into()]).is_err());
        assert!(RunConfig::from_toml("", &["budget.x=1".into()]).is_err());
    }

    #[test]
    fn validation_catches_bad_settings() {
        let bad = |cfg: RunConfig| assert!(cfg.validate().is_err(), "{cfg:?}");
        bad(RunConfig { budget: 0, ..RunConfig::default() });
        bad(RunConfig { population_size: 10, budget: 5, ..RunConfig::default() });
        bad(RunConfig { sample_size: Some(200), ..RunConfig::default() });
        bad(RunConfig { max_layers: 1, ..RunConfig::default() });
        bad(RunConfig { workers: 0, ..RunConfig::default() });
        bad(RunConfig { param_cap: 0, ..RunConfig::default() });
        bad(RunConfig { dataset: Some("/nonexistent/bundle".into()), ..RunConfig::default() });
        let mut c = RunConfig::default();
        c.hyperparams.lr = -1.0;
        bad(c);
        let mut c = RunConfig::default();
        c.space.heads.clear();
        bad(c);
        let mut c = RunConfig::default();
        c.sbm.train_frac = 0.9;
        bad(c);
        let mut c = RunConfig::default();
        c.tuner.space.dims[0].name = "momentum".into();
        bad(c);
        // random search has no population constraints
        RunConfig {
            strategy: Strategy::Random,
            population_size: 10,
            budget: 5,
            ..RunConfig::default()
        }
        .validate()
        .unwrap();
    }

    #[test]
    fn task_mismatch_is_reported() {
        let cfg = RunConfig {
            task: Some(Task::MultiLabel),
            ..RunConfig::default()
        };
        assert!(matches!(cfg.dataset(), Err(HarnessError::Config(_))));
    }
}
