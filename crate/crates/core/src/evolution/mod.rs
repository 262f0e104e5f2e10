//! Aging evolution over architecture genomes.
//!
//! A fixed-size population is seeded with random two-layer genomes. Each step
//! samples `S` members without replacement, mutates the fittest one (ties go
//! to the youngest), evaluates the child, evicts the oldest member and
//! appends the child. Every evaluation also lands in an append-only history
//! whose best entry is the search result.

mod evaluator;

use std::collections::VecDeque;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{new_initial_genome, random_genome, ArchitectureGenome, GenomeError, GenomeSpace, Task};
use crate::gnn::Hyperparams;
use crate::hyperopt::TrialRecord;
use crate::mutation::{mutate, MutationDiff, MutationError};

pub use evaluator::{tune_genome, DepthEvaluator, TrainingEvaluator, TuningConfig};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Mutation(#[from] MutationError),
    #[error("history observer failed: {0}")]
    Observer(#[from] std::io::Error),
}

/// Scores one genome. `seed` fixes every random choice made while training.
pub trait Evaluator: Sync {
    fn evaluate(&self, genome: &ArchitectureGenome, seed: u64) -> Result<Evaluation, String>;
}

impl<F> Evaluator for F
where
    F: Fn(&ArchitectureGenome, u64) -> Result<Evaluation, String> + Sync,
{
    fn evaluate(&self, genome: &ArchitectureGenome, seed: u64) -> Result<Evaluation, String> {
        self(genome, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Validation metric, higher is better.
    pub fitness: f64,
    pub val_loss: f64,
    pub details: EvalDetails,
}

/// Training summary kept with a candidate; enough to retrain it exactly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalDetails {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<Hyperparams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trials: Vec<TrialRecord>,
}

/// One evaluated genome.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    /// Position in the history; doubles as the age stamp.
    pub birth_index: u64,
    pub genome: ArchitectureGenome,
    pub parent: Option<u64>,
    pub diff: Option<MutationDiff>,
    pub seed: u64,
    /// `-inf` when evaluation failed.
    pub fitness: f64,
    pub val_loss: Option<f64>,
    pub details: EvalDetails,
    pub error: Option<String>,
    pub wall_time_secs: f64,
}

impl CandidateRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Bounded queue ordered by birth; the front is the oldest member.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    capacity: usize,
    members: VecDeque<CandidateRecord>,
}

impl Population {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            members: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() == self.capacity
    }

    pub fn members(&self) -> impl Iterator<Item = &CandidateRecord> {
        self.members.iter()
    }

    /// Appends a member, evicting and returning the oldest when full.
    pub fn insert(&mut self, record: CandidateRecord) -> Option<CandidateRecord> {
        let evicted = if self.is_full() {
            self.members.pop_front()
        } else {
            None
        };
        self.members.push_back(record);
        evicted
    }
}

/// Tournament: `s` members without replacement, highest fitness wins, the
/// younger member wins ties.
pub fn select_parent<'a, R: Rng + ?Sized>(
    population: &'a Population,
    s: usize,
    rng: &mut R,
) -> Result<&'a CandidateRecord, EvolutionError> {
    if s == 0 || s > population.len() {
        return Err(EvolutionError::Config(format!(
            "sample size {s} outside 1..={}",
            population.len()
        )));
    }
    let picked = sample(rng, population.len(), s);
    Ok(picked
        .iter()
        .map(|i| &population.members[i])
        .max_by(|a, b| a.fitness.total_cmp(&b.fitness).then(a.birth_index.cmp(&b.birth_index)))
        .expect("s >= 1"))
}

/// Index of the best history entry: highest fitness, earliest on ties.
pub fn best_index(history: &[CandidateRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in history.iter().enumerate() {
        if best.is_none_or(|b| c.fitness > history[b].fitness) {
            best = Some(i);
        }
    }
    best
}

/// Tournament size used when none is configured: a quarter of the
/// population, at least 1.
pub fn default_sample_size(population_size: usize) -> usize {
    ((population_size as f64 / 4.0).round() as usize).max(1)
}

/// Independent 64-bit seed for item `index` of stream `stream`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // SplitMix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Evolution,
    Random,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Evolution => "evolution",
            Strategy::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub population_size: usize,
    pub sample_size: usize,
    /// Total evaluations, initial population included.
    pub budget: usize,
    pub max_layers: usize,
    pub seed: u64,
    /// Parallel evaluations; 1 runs the bit-deterministic sequential loop.
    pub workers: usize,
    pub output_classes: u32,
    pub task: Task,
}

impl SearchConfig {
    pub fn check(&self, strategy: Strategy) -> Result<(), EvolutionError> {
        let err = |m: String| Err(EvolutionError::Config(m));
        if self.budget == 0 {
            return err("budget must be >= 1".into());
        }
        if self.workers == 0 {
            return err("workers must be >= 1".into());
        }
        if self.max_layers < 2 {
            return err(format!("max_layers {} < 2", self.max_layers));
        }
        if self.output_classes == 0 {
            return err("output_classes must be >= 1".into());
        }
        if strategy == Strategy::Evolution {
            if self.population_size < 2 {
                return err(format!("population_size {} < 2", self.population_size));
            }
            if self.sample_size == 0 || self.sample_size > self.population_size {
                return err(format!(
                    "sample_size {} outside 1..={}",
                    self.sample_size, self.population_size
                ));
            }
            if self.budget < self.population_size {
                return err(format!(
                    "budget {} < population_size {}",
                    self.budget, self.population_size
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub strategy: Strategy,
    pub history: Vec<CandidateRecord>,
    pub best_index: usize,
}

impl SearchResult {
    pub fn best(&self) -> &CandidateRecord {
        &self.history[self.best_index]
    }

    pub fn evaluations(&self) -> usize {
        self.history.len()
    }

    /// Best fitness after each evaluation.
    pub fn running_best(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::NEG_INFINITY, |best, c| {
                *best = best.max(c.fitness);
                Some(*best)
            })
            .collect()
    }
}

/// Called once per finished evaluation, in history order.
pub type Observer<'a> = dyn FnMut(&CandidateRecord) -> std::io::Result<()> + 'a;

struct Job {
    genome: ArchitectureGenome,
    parent: Option<u64>,
    diff: Option<MutationDiff>,
    seed: u64,
}

struct Outcome {
    result: Result<Evaluation, String>,
    wall_time_secs: f64,
}

fn run_job<E: Evaluator + ?Sized>(evaluator: &E, job: &Job) -> Outcome {
    let started = Instant::now();
    let result = evaluator
        .evaluate(&job.genome, job.seed)
        .and_then(|e| {
            if e.fitness.is_nan() {
                Err("evaluator returned NaN fitness".to_string())
            } else {
                Ok(e)
            }
        });
    Outcome {
        result,
        wall_time_secs: started.elapsed().as_secs_f64(),
    }
}

/// Shared state of both strategies: the controller RNG, the history and
/// the population (unused by random search).
struct Controller<'o, 'a> {
    strategy: Strategy,
    cfg: SearchConfig,
    space: GenomeSpace,
    rng: ChaCha8Rng,
    population: Population,
    history: Vec<CandidateRecord>,
    observer: &'o mut Observer<'a>,
}

impl Controller<'_, '_> {
    fn job_seed(&self, dispatched: usize) -> u64 {
        derive_seed(self.cfg.seed, 1, dispatched as u64)
    }

    /// Next job, or `None` while evolution waits for the initial
    /// population to finish.
    fn next_job(&mut self, dispatched: usize) -> Result<Option<Job>, EvolutionError> {
        let seed = self.job_seed(dispatched);
        let cfg = &self.cfg;
        let job = match self.strategy {
            Strategy::Random => {
                let depth = self.rng.random_range(2..=cfg.max_layers);
                let genome = random_genome(&mut self.rng, &self.space, depth, cfg.output_classes, cfg.task)?;
                Job {
                    genome,
                    parent: None,
                    diff: None,
                    seed,
                }
            }
            Strategy::Evolution if dispatched < cfg.population_size => Job {
                genome: new_initial_genome(&mut self.rng, &self.space, cfg.output_classes, cfg.task)?,
                parent: None,
                diff: None,
                seed,
            },
            Strategy::Evolution if !self.population.is_full() => return Ok(None),
            Strategy::Evolution => {
                let parent = select_parent(&self.population, cfg.sample_size, &mut self.rng)?;
                let (genome, diff) = mutate(&parent.genome, &mut self.rng, &self.space, cfg.max_layers)?;
                Job {
                    genome,
                    parent: Some(parent.birth_index),
                    diff: Some(diff),
                    seed,
                }
            }
        };
        Ok(Some(job))
    }

    fn complete(&mut self, job: Job, outcome: Outcome) -> Result<(), EvolutionError> {
        let (fitness, val_loss, details, error) = match outcome.result {
            Ok(e) => (e.fitness, Some(e.val_loss).filter(|v| v.is_finite()), e.details, None),
            Err(msg) => (f64::NEG_INFINITY, None, EvalDetails::default(), Some(msg)),
        };
        let record = CandidateRecord {
            birth_index: self.history.len() as u64,
            genome: job.genome,
            parent: job.parent,
            diff: job.diff,
            seed: job.seed,
            fitness,
            val_loss,
            details,
            error,
            wall_time_secs: outcome.wall_time_secs,
        };
        (self.observer)(&record)?;
        if self.strategy == Strategy::Evolution {
            self.population.insert(record.clone());
        }
        self.history.push(record);
        Ok(())
    }

    fn run_sequential<E: Evaluator + ?Sized>(&mut self, evaluator: &E) -> Result<(), EvolutionError> {
        for dispatched in 0..self.cfg.budget {
            let job = self
                .next_job(dispatched)?
                .expect("sequential runs always have a full population");
            let outcome = run_job(evaluator, &job);
            self.complete(job, outcome)?;
        }
        Ok(())
    }

    /// Worker pool; results are folded in as they complete.
    fn run_parallel<E: Evaluator + ?Sized>(&mut self, evaluator: &E) -> Result<(), EvolutionError> {
        let workers = self.cfg.workers;
        let budget = self.cfg.budget;
        std::thread::scope(|scope| {
            let (job_tx, job_rx) = crossbeam_channel::unbounded::<Job>();
            let (done_tx, done_rx) = crossbeam_channel::unbounded::<(Job, Outcome)>();
            for _ in 0..workers {
                let job_rx = job_rx.clone();
                let done_tx = done_tx.clone();
                scope.spawn(move || {
                    for job in job_rx.iter() {
                        let outcome = run_job(evaluator, &job);
                        if done_tx.send((job, outcome)).is_err() {
                            break;
                        }
                    }
                });
            }
            drop(done_tx);
            let mut dispatched = 0;
            let mut in_flight = 0;
            let result = loop {
                while in_flight < workers && dispatched < budget {
                    match self.next_job(dispatched) {
                        Ok(Some(job)) => {
                            job_tx.send(job).expect("workers alive");
                            dispatched += 1;
                            in_flight += 1;
                        }
                        Ok(None) => break,
                        Err(e) => return Err(e),
                    }
                }
                if in_flight == 0 {
                    break Ok(());
                }
                let (job, outcome) = done_rx.recv().expect("a job is in flight");
                in_flight -= 1;
                if let Err(e) = self.complete(job, outcome) {
                    break Err(e);
                }
            };
            drop(job_tx);
            result
        })
    }
}

fn search<E: Evaluator + ?Sized>(
    strategy: Strategy,
    cfg: &SearchConfig,
    space: &GenomeSpace,
    evaluator: &E,
    observer: &mut Observer<'_>,
) -> Result<SearchResult, EvolutionError> {
    cfg.check(strategy)?;
    space.check()?;
    let mut ctl = Controller {
        strategy,
        cfg: cfg.clone(),
        space: space.clone(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        population: Population::new(cfg.population_size),
        history: Vec::with_capacity(cfg.budget),
        observer,
    };
    if cfg.workers == 1 {
        ctl.run_sequential(evaluator)?;
    } else {
        ctl.run_parallel(evaluator)?;
    }
    let best_index = best_index(&ctl.history).expect("budget >= 1");
    Ok(SearchResult {
        strategy,
        history: ctl.history,
        best_index,
    })
}

/// Aging evolution: `population_size` random two-layer genomes, then
/// `budget - population_size` mutation steps.
pub fn run_search<E: Evaluator + ?Sized>(
    cfg: &SearchConfig,
    space: &GenomeSpace,
    evaluator: &E,
    observer: &mut Observer<'_>,
) -> Result<SearchResult, EvolutionError> {
    search(Strategy::Evolution, cfg, space, evaluator, observer)
}

/// Baseline: `budget` independent genomes with depth uniform in
/// `2..=max_layers`.
pub fn random_search<E: Evaluator + ?Sized>(
    cfg: &SearchConfig,
    space: &GenomeSpace,
    evaluator: &E,
    observer: &mut Observer<'_>,
) -> Result<SearchResult, EvolutionError> {
    search(Strategy::Random, cfg, space, evaluator, observer)
}

pub fn run_strategy<E: Evaluator + ?Sized>(
    strategy: Strategy,
    cfg: &SearchConfig,
    space: &GenomeSpace,
    evaluator: &E,
    observer: &mut Observer<'_>,
) -> Result<SearchResult, EvolutionError> {
    search(strategy, cfg, space, evaluator, observer)
}

/// Observer that ignores every record.
pub fn no_observer(_: &CandidateRecord) -> std::io::Result<()> {
    Ok(())
}
