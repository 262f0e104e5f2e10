use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{backward, forward, Mode};
use super::loss::{loss, loss_and_grad};
use super::metrics::split_metric;
use super::model::{build_model, Model};
use super::GnnError;
use crate::data::GraphDataset;
use crate::genome::ArchitectureGenome;

/// Training hyperparameters of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement tolerated before stopping.
    pub patience: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            max_epochs: 1000,
            patience: 50,
        }
    }
}

impl Hyperparams {
    pub fn check(&self) -> Result<(), GnnError> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(GnnError::Config(format!("learning rate {} must be >= 0", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(GnnError::Config("weight_decay must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GnnError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_epochs == 0 {
            return Err(GnnError::Config("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Largest model the engine builds unless told otherwise.
pub const DEFAULT_PARAM_CAP: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Outcome of training one genome.
#[derive(Debug, Clone)]
pub struct TrainedModelRecord {
    pub genome: ArchitectureGenome,
    /// Parameters from the best validation epoch.
    pub model: Model,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_val_loss: f64,
    pub val_metric: f64,
    pub test_metric: Option<f64>,
    pub hyperparams: Hyperparams,
    pub parameter_count: usize,
    pub wall_time_secs: f64,
}

struct Adam {
    m: Model,
    v: Model,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &Model) -> Self {
        Self {
            m: model.zeros_like(),
            v: model.zeros_like(),
            step: 0,
        }
    }

    /// One update with L2 weight decay folded into the gradient.
    fn step(&mut self, model: &mut Model, grads: &Model, lr: f64, weight_decay: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let params = model.tensors_mut();
        let grads = grads.named_tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((w, (_, g)), m), v) in params.into_iter().zip(grads).zip(ms).zip(vs) {
            ndarray::Zip::from(w)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    let g = g + weight_decay * *w;
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
                });
        }
    }
}

/// Full-batch Adam training with early stopping on validation loss.
///
/// Stops once the validation loss has not improved for more than
/// `patience` consecutive epochs and returns the parameters of the best
/// epoch.
pub fn train(
    genome: &ArchitectureGenome,
    dataset: &GraphDataset,
    hp: &Hyperparams,
    seed: u64,
    param_cap: usize,
) -> Result<TrainedModelRecord, GnnError> {
    let started = Instant::now();
    hp.check()?;
    dataset.check_task(genome)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = build_model(genome, dataset.feature_dim(), &mut rng, param_cap)?;
    let mut adam = Adam::new(&model);
    let graph = &dataset.graph;
    let x = &dataset.features;

    let mut best: Option<(f64, usize, Model, f64)> = None;
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut stale = 0usize;

    for epoch in 1..=hp.max_epochs {
        let out = forward(&model, genome, graph, x, Mode::Train, hp.dropout, &mut rng)
            .map_err(|e| diverged(e, epoch))?;
        let (train_loss, d_logits) = loss_and_grad(&out.logits, &dataset.labels, &dataset.train)?;
        if !train_loss.is_finite() {
            return Err(GnnError::Diverged { epoch });
        }
        let grads = backward(&model, genome, graph, &out.activations, &d_logits)
            .map_err(|e| diverged(e, epoch))?;
        adam.step(&mut model, &grads, hp.lr, hp.weight_decay);
        if !model.is_finite() {
            return Err(GnnError::Diverged { epoch });
        }

        let eval = forward(&model, genome, graph, x, Mode::Eval, 0.0, &mut rng)
            .map_err(|e| diverged(e, epoch))?;
        let val_loss = loss(&eval.logits, &dataset.labels, &dataset.val)?;
        if !val_loss.is_finite() {
            return Err(GnnError::Diverged { epoch });
        }
        train_curve.push(train_loss);
        val_curve.push(val_loss);

        let improved = best.as_ref().is_none_or(|(b, ..)| val_loss < *b);
        if improved {
            let metric = split_metric(&eval.logits, &dataset.labels, &dataset.val)?;
            best = Some((val_loss, epoch, model.clone(), metric));
            stale = 0;
        } else {
            stale += 1;
            if stale > hp.patience {
                break;
            }
        }
    }

    let (best_val_loss, best_epoch, model, val_metric) = best.expect("at least one epoch ran");
    Ok(TrainedModelRecord {
        genome: genome.clone(),
        parameter_count: model.parameter_count(),
        model,
        best_epoch,
        epochs_run: val_curve.len(),
        train_loss: train_curve,
        val_loss: val_curve,
        best_val_loss,
        val_metric,
        test_metric: None,
        hyperparams: *hp,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

fn diverged(err: GnnError, epoch: usize) -> GnnError {
    match err {
        GnnError::Numeric { .. } => GnnError::Diverged { epoch },
        other => other,
    }
}

/// Metric of the trained parameters on one split.
pub fn evaluate(
    record: &TrainedModelRecord,
    dataset: &GraphDataset,
    split: Split,
) -> Result<f64, GnnError> {
    let out = forward(
        &record.model,
        &record.genome,
        &dataset.graph,
        &dataset.features,
        Mode::Eval,
        0.0,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    split_metric(&out.logits, &dataset.labels, dataset.mask(split))
}
