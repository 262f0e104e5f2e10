use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, EvalDetails, Evaluation, Evaluator};
use crate::data::GraphDataset;
use crate::genome::ArchitectureGenome;
use crate::gnn::{evaluate, train, GnnError, Hyperparams, Split, TrainedModelRecord};
use crate::hyperopt::{tune, HyperoptError, HyperparamSpace, TpeConfig, TuneResult};

/// Fitness equals the number of layers. Cheap stand-in for training.
#[derive(Debug, Clone, Copy, Default)]
pub struct DepthEvaluator;

impl Evaluator for DepthEvaluator {
    fn evaluate(&self, genome: &ArchitectureGenome, _seed: u64) -> Result<Evaluation, String> {
        Ok(Evaluation {
            fitness: genome.depth() as f64,
            val_loss: f64::NAN,
            details: EvalDetails::default(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub space: HyperparamSpace,
    pub max_trials: usize,
    pub tpe: TpeConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            space: HyperparamSpace::default(),
            max_trials: 50,
            tpe: TpeConfig::default(),
        }
    }
}

/// Per-trial training summary collected while tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTraining {
    pub hyperparams: Hyperparams,
    pub train_seed: u64,
    pub val_metric: f64,
    pub val_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub parameter_count: usize,
}

/// Tunes the training hyperparameters of one genome with TPE, the
/// validation metric being the objective. Trial `t` trains with
/// `derive_seed(seed, 2, t)`.
pub fn tune_genome(
    genome: &ArchitectureGenome,
    dataset: &GraphDataset,
    base: &Hyperparams,
    tuning: &TuningConfig,
    seed: u64,
    param_cap: usize,
    mut on_trial: impl FnMut(usize, &Result<TrialTraining, String>),
) -> Result<(TuneResult, Vec<Option<TrialTraining>>), HyperoptError> {
    tuning.space.check()?;
    // reject unknown dimension names before any training happens
    tuning.space.apply(&tuning.space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(0)), base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs: Vec<Option<TrialTraining>> = Vec::new();
    let result = tune(
        |point| {
            let t = runs.len();
            let train_seed = derive_seed(seed, 2, t as u64);
            let outcome = tuning
                .space
                .apply(point, base)
                .map_err(|e| e.to_string())
                .and_then(|hp| {
                    train(genome, dataset, &hp, train_seed, param_cap)
                        .map(|rec| TrialTraining {
                            hyperparams: hp,
                            train_seed,
                            val_metric: rec.val_metric,
                            val_loss: rec.best_val_loss,
                            best_epoch: rec.best_epoch,
                            epochs_run: rec.epochs_run,
                            parameter_count: rec.parameter_count,
                        })
                        .map_err(|e| e.to_string())
                });
            on_trial(t, &outcome);
            let score = outcome.as_ref().ok().map(|r| r.val_metric);
            runs.push(outcome.ok());
            score
        },
        &tuning.space,
        tuning.max_trials,
        &tuning.tpe,
        &mut rng,
    )?;
    Ok((result, runs))
}

/// Trains each candidate on a dataset; fitness is the validation metric.
#[derive(Debug, Clone)]
pub struct TrainingEvaluator<'a> {
    pub dataset: &'a GraphDataset,
    pub hyperparams: Hyperparams,
    pub param_cap: usize,
    /// TPE tuning per candidate; `None` trains once with `hyperparams`.
    pub tuning: Option<TuningConfig>,
}

impl TrainingEvaluator<'_> {
    /// Retrains a finished candidate from its recorded settings and adds
    /// the test metric. Deterministic, so the result matches the search.
    pub fn final_record(
        &self,
        genome: &ArchitectureGenome,
        details: &EvalDetails,
    ) -> Result<TrainedModelRecord, GnnError> {
        let hp = details.hyperparams.unwrap_or(self.hyperparams);
        let seed = details
            .train_seed
            .ok_or_else(|| GnnError::Config("candidate has no training seed".into()))?;
        let mut rec = train(genome, self.dataset, &hp, seed, self.param_cap)?;
        rec.test_metric = Some(evaluate(&rec, self.dataset, Split::Test)?);
        Ok(rec)
    }
}

impl Evaluator for TrainingEvaluator<'_> {
    fn evaluate(&self, genome: &ArchitectureGenome, seed: u64) -> Result<Evaluation, String> {
        match &self.tuning {
            None => {
                let rec = train(genome, self.dataset, &self.hyperparams, seed, self.param_cap)
                    .map_err(|e| e.to_string())?;
                Ok(Evaluation {
                    fitness: rec.val_metric,
                    val_loss: rec.best_val_loss,
                    details: EvalDetails {
                        hyperparams: Some(self.hyperparams),
                        train_seed: Some(seed),
                        best_epoch: Some(rec.best_epoch),
                        epochs_run: Some(rec.epochs_run),
                        parameter_count: Some(rec.parameter_count),
                        trials: Vec::new(),
                    },
                })
            }
            Some(tuning) => {
                let (result, runs) = tune_genome(
                    genome,
                    self.dataset,
                    &self.hyperparams,
                    tuning,
                    seed,
                    self.param_cap,
                    |_, _| {},
                )
                .map_err(|e| e.to_string())?;
                let best = runs[result.best.index].as_ref().expect("best trial succeeded");
                Ok(Evaluation {
                    fitness: best.val_metric,
                    val_loss: best.val_loss,
                    details: EvalDetails {
                        hyperparams: Some(best.hyperparams),
                        train_seed: Some(best.train_seed),
                        best_epoch: Some(best.best_epoch),
                        epochs_run: Some(best.epochs_run),
                        parameter_count: Some(best.parameter_count),
                        trials: result.trials,
                    },
                })
            }
        }
    }
}
