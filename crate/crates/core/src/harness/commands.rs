use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::history::{read_history, HistoryEntry, HistoryHeader, JsonlWriter, TimingEntry};
use super::report::{report, ReportDoc};
use super::{EvaluatorKind, HarnessError, RunConfig};
use crate::data::{write_bundle, DatasetStats, GraphDataset};
use crate::evolution::{
    run_strategy, tune_genome, CandidateRecord, DepthEvaluator, EvalDetails, Evaluator, SearchResult, Strategy,
    TrainingEvaluator,
};
use crate::genome::{canonical_parse, ArchitectureGenome, GenomeSpace};
use crate::gnn::{evaluate, train, Hyperparams, Split};
use crate::hyperopt::HyperoptError;

pub const HISTORY_FILE: &str = "history.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const RESULT_FILE: &str = "result.json";
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const COMPARE_FILE: &str = "compare.csv";
pub const PLOT_FILE: &str = "compare_plot.csv";
pub const COMPARE_SUMMARY_FILE: &str = "compare.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestDoc {
    pub index: u64,
    pub depth: usize,
    pub genome: ArchitectureGenome,
    pub fitness: f64,
    pub val_loss: Option<f64>,
    /// Only ever computed for this final candidate.
    pub test_metric: Option<f64>,
    #[serde(flatten)]
    pub details: EvalDetails,
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDoc {
    pub strategy: Strategy,
    pub seed: u64,
    pub evaluations: usize,
    pub failed_evaluations: usize,
    pub max_depth_evaluated: usize,
    pub dataset: Option<DatasetStats>,
    pub best: Option<BestDoc>,
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Failed(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn read_genome(path: &Path, space: &GenomeSpace) -> Result<ArchitectureGenome, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let genome = canonical_parse(&text)?;
    genome.validate(space).map_err(|v| {
        HarnessError::Genome(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })?;
    Ok(genome)
}

/// The dataset, unless the depth stub makes it unnecessary.
fn search_dataset(cfg: &RunConfig) -> Result<Option<GraphDataset>, HarnessError> {
    match (cfg.evaluator, &cfg.dataset) {
        (EvaluatorKind::Depth, None) => Ok(None),
        _ => cfg.dataset().map(Some),
    }
}

fn classes_and_task(cfg: &RunConfig, data: Option<&GraphDataset>) -> (u32, crate::genome::Task) {
    match data {
        Some(d) => (d.classes as u32, d.task()),
        None => {
            let task = if cfg.sbm.multi_label {
                crate::genome::Task::MultiLabel
            } else {
                crate::genome::Task::SingleLabel
            };
            (cfg.sbm.communities as u32, cfg.task.unwrap_or(task))
        }
    }
}

fn run_with<E: Evaluator + ?Sized>(
    cfg: &RunConfig,
    strategy: Strategy,
    data: Option<&GraphDataset>,
    evaluator: &E,
    observer: &mut crate::evolution::Observer<'_>,
) -> Result<SearchResult, HarnessError> {
    let (classes, task) = classes_and_task(cfg, data);
    let search = cfg.search_config(classes, task);
    Ok(run_strategy(strategy, &search, &cfg.space, evaluator, observer)?)
}

fn training_evaluator<'a>(cfg: &RunConfig, data: &'a GraphDataset) -> TrainingEvaluator<'a> {
    TrainingEvaluator {
        dataset: data,
        hyperparams: cfg.hyperparams,
        param_cap: cfg.param_cap,
        tuning: cfg.tuning_config(),
    }
}

fn run_configured(
    cfg: &RunConfig,
    strategy: Strategy,
    data: Option<&GraphDataset>,
    observer: &mut crate::evolution::Observer<'_>,
) -> Result<SearchResult, HarnessError> {
    match (cfg.evaluator, data) {
        (EvaluatorKind::Depth, _) => run_with(cfg, strategy, data, &DepthEvaluator, observer),
        (EvaluatorKind::Train, Some(d)) => run_with(cfg, strategy, data, &training_evaluator(cfg, d), observer),
        (EvaluatorKind::Train, None) => Err(HarnessError::Config("training needs a dataset".into())),
    }
}

/// Runs a search and writes `history.jsonl`, `timing.jsonl` and
/// `result.json` into `out_dir`. History lines are flushed as candidates
/// finish, so an interrupted run keeps its partial log.
pub fn cmd_search(cfg: &RunConfig, out_dir: &Path) -> Result<ResultDoc, HarnessError> {
    cfg.validate()?;
    let data = search_dataset(cfg)?;
    create_dir(out_dir)?;
    let mut history = JsonlWriter::create(&out_dir.join(HISTORY_FILE))?;
    let mut timing = JsonlWriter::create(&out_dir.join(TIMING_FILE))?;
    let config = serde_json::to_value(cfg).map_err(|e| HarnessError::Config(e.to_string()))?;
    history.write(&HistoryHeader::new(cfg.strategy, cfg.seed, cfg.budget, cfg.max_layers, config))?;

    let mut observer = |rec: &CandidateRecord| -> std::io::Result<()> {
        let entry = serde_json::to_string(&HistoryEntry::from_record(rec))?;
        history.write_line(&entry)?;
        let t = serde_json::to_string(&TimingEntry {
            index: rec.birth_index,
            wall_time_secs: rec.wall_time_secs,
        })?;
        timing.write_line(&t)
    };
    let result = run_configured(cfg, cfg.strategy, data.as_ref(), &mut observer)?;

    let best = result.best();
    let best_doc = if best.failed() {
        None
    } else {
        let test_metric = match (&data, cfg.evaluator) {
            (Some(d), EvaluatorKind::Train) => {
                Some(training_evaluator(cfg, d).final_record(&best.genome, &best.details)?.test_metric)
            }
            _ => None,
        }
        .flatten();
        Some(BestDoc {
            index: best.birth_index,
            depth: best.genome.depth(),
            genome: best.genome.clone(),
            fitness: best.fitness,
            val_loss: best.val_loss,
            test_metric,
            details: EvalDetails {
                trials: Vec::new(),
                ..best.details.clone()
            },
        })
    };
    let doc = ResultDoc {
        strategy: cfg.strategy,
        seed: cfg.seed,
        evaluations: result.evaluations(),
        failed_evaluations: result.history.iter().filter(|c| c.failed()).count(),
        max_depth_evaluated: result.history.iter().map(|c| c.genome.depth()).max().unwrap_or(0),
        dataset: data.as_ref().map(GraphDataset::stats),
        best: best_doc,
    };
    write_json(&out_dir.join(RESULT_FILE), &doc)?;
    if doc.best.is_none() {
        return Err(HarnessError::Failed(format!("all {} evaluations failed", doc.evaluations)));
    }
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub dataset: String,
    pub depth: usize,
    pub parameter_count: usize,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_loss: f64,
    pub train_metric: f64,
    pub val_metric: f64,
    pub test_metric: f64,
}

/// Trains one genome with the configured hyperparameters and seed.
pub fn cmd_train(
    cfg: &RunConfig,
    genome_path: &Path,
    model_out: Option<&Path>,
) -> Result<MetricsDoc, HarnessError> {
    cfg.validate()?;
    let genome = read_genome(genome_path, &cfg.space)?;
    let data = cfg.dataset()?;
    let rec = train(&genome, &data, &cfg.hyperparams, cfg.seed, cfg.param_cap)?;
    if let Some(path) = model_out {
        let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        crate::gnn::tensor_io::write_tensors(&mut out, &rec.model)
            .and_then(|()| out.flush())
            .map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(MetricsDoc {
        dataset: data.name.clone(),
        depth: genome.depth(),
        parameter_count: rec.parameter_count,
        hyperparams: cfg.hyperparams,
        seed: cfg.seed,
        best_epoch: rec.best_epoch,
        epochs_run: rec.epochs_run,
        val_loss: rec.best_val_loss,
        train_metric: evaluate(&rec, &data, Split::Train)?,
        val_metric: rec.val_metric,
        test_metric: evaluate(&rec, &data, Split::Test)?,
    })
}

/// One line of `trials.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLogEntry {
    pub trial: usize,
    pub params: BTreeMap<String, f64>,
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    pub train_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneDoc {
    pub trials: usize,
    pub failed_trials: usize,
    pub best_trial: usize,
    pub hyperparams: Hyperparams,
    pub train_seed: u64,
    pub val_metric: f64,
    pub val_loss: f64,
    pub test_metric: f64,
}

/// Tunes one genome's hyperparameters with TPE and streams each trial to
/// `trials.jsonl` in `out_dir`.
pub fn cmd_tune(cfg: &RunConfig, genome_path: &Path, out_dir: &Path) -> Result<TuneDoc, HarnessError> {
    cfg.validate()?;
    let genome = read_genome(genome_path, &cfg.space)?;
    let data = cfg.dataset()?;
    data.check_task(&genome)?;
    create_dir(out_dir)?;
    let log_path = out_dir.join(TRIALS_FILE);
    let mut log = JsonlWriter::create(&log_path)?;
    let names: Vec<String> = cfg.tuner.space.dims.iter().map(|d| d.name.clone()).collect();
    let mut log_err: Option<std::io::Error> = None;
    let outcome = tune_genome(
        &genome,
        &data,
        &cfg.hyperparams,
        &cfg.tuner,
        cfg.seed,
        cfg.param_cap,
        |t, res| {
            let train_seed = crate::evolution::derive_seed(cfg.seed, 2, t as u64);
            let (params, score, val_loss, best_epoch, error) = match res {
                Ok(r) => (
                    hyperparam_values(&names, &r.hyperparams),
                    Some(r.val_metric),
                    Some(r.val_loss),
                    Some(r.best_epoch),
                    None,
                ),
                Err(e) => (BTreeMap::new(), None, None, None, Some(e.clone())),
            };
            let entry = TrialLogEntry {
                trial: t,
                params,
                score,
                val_loss,
                best_epoch,
                train_seed,
                error,
            };
            let line = serde_json::to_string(&entry).expect("trial entry serializes");
            if let Err(e) = log.write_line(&line) {
                log_err.get_or_insert(e);
            }
        },
    );
    if let Some(e) = log_err {
        return Err(HarnessError::io(&log_path, e));
    }
    let (result, runs) = match outcome {
        Err(HyperoptError::AllFailed { trials }) => {
            return Err(HarnessError::Failed(format!("all {trials} tuning trials failed")))
        }
        other => other?,
    };
    let best = runs[result.best.index].as_ref().expect("best trial succeeded");
    let mut rec = train(&genome, &data, &best.hyperparams, best.train_seed, cfg.param_cap)?;
    rec.test_metric = Some(evaluate(&rec, &data, Split::Test)?);
    Ok(TuneDoc {
        trials: result.trials.len(),
        failed_trials: runs.iter().filter(|r| r.is_none()).count(),
        best_trial: result.best.index,
        hyperparams: best.hyperparams,
        train_seed: best.train_seed,
        val_metric: best.val_metric,
        val_loss: best.val_loss,
        test_metric: rec.test_metric.expect("just set"),
    })
}

fn hyperparam_values(names: &[String], hp: &Hyperparams) -> BTreeMap<String, f64> {
    names
        .iter()
        .filter_map(|n| {
            let v = match n.as_str() {
                "lr" => hp.lr,
                "weight_decay" => hp.weight_decay,
                "dropout" => hp.dropout,
                "max_epochs" => hp.max_epochs as f64,
                "patience" => hp.patience as f64,
                _ => return None,
            };
            Some((n.clone(), v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub strategy: Strategy,
    pub seeds: Vec<u64>,
    pub final_best: Vec<f64>,
    pub median_final_best: f64,
    pub max_depth: Vec<usize>,
    /// Median running best after each evaluation.
    pub median_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareDoc {
    pub budget: usize,
    pub strategies: Vec<CurveSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => {
            let (a, b) = (v[n / 2 - 1], v[n / 2]);
            if a == b {
                a
            } else {
                (a + b) / 2.0
            }
        }
    }
}

fn csv_number(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

/// Runs each strategy for `seeds` consecutive seeds starting at the
/// configured one and writes the running-best curves.
///
/// `compare.csv` has one row per strategy, seed and evaluation;
/// `compare_plot.csv` one row per evaluation with the median curve of each
/// strategy.
pub fn cmd_compare(
    cfg: &RunConfig,
    strategies: &[Strategy],
    seeds: usize,
    out_dir: &Path,
) -> Result<CompareDoc, HarnessError> {
    if strategies.is_empty() {
        return Err(HarnessError::Config("no strategies to compare".into()));
    }
    if seeds == 0 {
        return Err(HarnessError::Config("seeds must be >= 1".into()));
    }
    for &s in strategies {
        RunConfig { strategy: s, ..cfg.clone() }.validate()?;
    }
    let data = search_dataset(cfg)?;
    create_dir(out_dir)?;
    let csv_path = out_dir.join(COMPARE_FILE);
    let mut csv = JsonlWriter::create(&csv_path)?;
    csv.write_line("strategy,seed,evaluation,best_fitness")
        .map_err(|e| HarnessError::io(&csv_path, e))?;

    let mut summaries = Vec::new();
    for &strategy in strategies {
        let mut curves = Vec::new();
        let mut seed_list = Vec::new();
        let mut depths = Vec::new();
        for i in 0..seeds {
            let seed = cfg.seed.wrapping_add(i as u64);
            let run_cfg = RunConfig { seed, ..cfg.clone() };
            let result = run_configured(&run_cfg, strategy, data.as_ref(), &mut crate::evolution::no_observer)?;
            let curve = result.running_best();
            for (e, v) in curve.iter().enumerate() {
                csv.write_line(&format!("{strategy},{seed},{},{}", e + 1, csv_number(*v)))
                    .map_err(|e| HarnessError::io(&csv_path, e))?;
            }
            depths.push(result.history.iter().map(|c| c.genome.depth()).max().unwrap_or(0));
            seed_list.push(seed);
            curves.push(curve);
        }
        let final_best: Vec<f64> = curves.iter().map(|c| *c.last().expect("budget >= 1")).collect();
        let median_curve = (0..cfg.budget)
            .map(|e| median(&curves.iter().map(|c| c[e]).collect::<Vec<_>>()))
            .collect();
        summaries.push(CurveSummary {
            strategy,
            seeds: seed_list,
            median_final_best: median(&final_best),
            final_best,
            max_depth: depths,
            median_curve,
        });
    }

    let plot_path = out_dir.join(PLOT_FILE);
    let mut plot = String::from("evaluation");
    for s in &summaries {
        plot.push_str(&format!(",{}_median", s.strategy));
    }
    plot.push('\n');
    for e in 0..cfg.budget {
        plot.push_str(&(e + 1).to_string());
        for s in &summaries {
            plot.push(',');
            plot.push_str(&csv_number(s.median_curve[e]));
        }
        plot.push('\n');
    }
    fs::write(&plot_path, plot).map_err(|e| HarnessError::io(&plot_path, e))?;

    let doc = CompareDoc {
        budget: cfg.budget,
        strategies: summaries,
    };
    write_json(&out_dir.join(COMPARE_SUMMARY_FILE), &doc)?;
    Ok(doc)
}

/// Summarizes a history log; corrupt lines are skipped and counted.
pub fn cmd_report(history_path: &Path) -> Result<ReportDoc, HarnessError> {
    let history = read_history(history_path)?;
    if !history.skipped_lines.is_empty() {
        let _ = writeln!(
            std::io::stderr(),
            "warning: {}: skipped {} unreadable line(s): {:?}",
            history_path.display(),
            history.skipped_lines.len(),
            history.skipped_lines
        );
    }
    Ok(report(&history))
}

/// Writes the configured SBM fixture as a dataset bundle.
pub fn cmd_generate_sbm(cfg: &RunConfig, out_dir: &Path) -> Result<DatasetStats, HarnessError> {
    cfg.sbm.check()?;
    let data = crate::data::generate_sbm(&cfg.sbm)?;
    create_dir(out_dir)?;
    write_bundle(&data, out_dir)?;
    Ok(data.stats())
}

/// Standard output locations inside a run directory.
pub fn history_path(out_dir: &Path) -> PathBuf {
    out_dir.join(HISTORY_FILE)
}
