//! Tree-structured Parzen Estimator over independent dimensions.
//!
//! Finished trials are split by score into a good and a bad set. Each set
//! gets a per-dimension density (truncated Gaussian kernels plus a uniform
//! prior for continuous axes, add-one smoothed frequencies for discrete
//! ones). Candidates are drawn from the good density and the one with the
//! highest good/bad ratio is returned.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::Hyperparams;

#[derive(Debug, Error, PartialEq)]
pub enum HyperoptError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("need at least 2 successful trials, have {ok}")]
    TooFewTrials { ok: usize },
    #[error("all {trials} tuning trials failed")]
    AllFailed { trials: usize },
    #[error("invalid tuner configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dimension {
    LogUniform { lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    Discrete { values: Vec<f64> },
}

impl Dimension {
    fn check(&self, name: &str) -> Result<(), HyperoptError> {
        match self {
            Dimension::LogUniform { lo, hi } if !(*lo > 0.0 && lo < hi && hi.is_finite()) => Err(
                HyperoptError::Space(format!("{name}: log_uniform needs 0 < lo < hi, got [{lo}, {hi}]")),
            ),
            Dimension::Uniform { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => Err(
                HyperoptError::Space(format!("{name}: uniform needs lo < hi, got [{lo}, {hi}]")),
            ),
            Dimension::Discrete { values } if values.is_empty() => {
                Err(HyperoptError::Space(format!("{name}: empty discrete set")))
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            Dimension::LogUniform { lo, hi } | Dimension::Uniform { lo, hi } => (*lo..=*hi).contains(&x),
            Dimension::Discrete { values } => values.contains(&x),
        }
    }

    /// Continuous axis bounds after the log transform.
    fn axis(&self) -> Option<(f64, f64)> {
        match *self {
            Dimension::LogUniform { lo, hi } => Some((lo.ln(), hi.ln())),
            Dimension::Uniform { lo, hi } => Some((lo, hi)),
            Dimension::Discrete { .. } => None,
        }
    }

    fn to_axis(&self, x: f64) -> f64 {
        match self {
            Dimension::LogUniform { .. } => x.ln(),
            _ => x,
        }
    }

    fn from_axis(&self, t: f64) -> f64 {
        match *self {
            Dimension::LogUniform { lo, hi } => t.exp().clamp(lo, hi),
            Dimension::Uniform { lo, hi } => t.clamp(lo, hi),
            Dimension::Discrete { .. } => t,
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Dimension::Discrete { values } => *values.choose(rng).expect("non-empty"),
            _ => {
                let (a, b) = self.axis().unwrap();
                self.from_axis(rng.random_range(a..=b))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDimension {
    pub name: String,
    #[serde(flatten)]
    pub dim: Dimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperparamSpace {
    pub dims: Vec<NamedDimension>,
}

impl Default for HyperparamSpace {
    /// Learning rate, weight decay and dropout.
    fn default() -> Self {
        let d = |name: &str, dim| NamedDimension {
            name: name.into(),
            dim,
        };
        Self {
            dims: vec![
                d("lr", Dimension::LogUniform { lo: 1e-4, hi: 1e-1 }),
                d("weight_decay", Dimension::LogUniform { lo: 1e-6, hi: 1e-2 }),
                d("dropout", Dimension::Uniform { lo: 0.0, hi: 0.8 }),
            ],
        }
    }
}

impl HyperparamSpace {
    pub fn check(&self) -> Result<(), HyperoptError> {
        if self.dims.is_empty() {
            return Err(HyperoptError::Space("no dimensions".into()));
        }
        for (i, d) in self.dims.iter().enumerate() {
            d.dim.check(&d.name)?;
            if self.dims[..i].iter().any(|o| o.name == d.name) {
                return Err(HyperoptError::Space(format!("duplicate dimension {}", d.name)));
            }
        }
        Ok(())
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims.len() && self.dims.iter().zip(point).all(|(d, &x)| d.dim.contains(x))
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.dims.iter().map(|d| d.dim.sample_uniform(rng)).collect()
    }

    /// Overrides the named training settings in `base` with a point.
    /// Unknown names are a space error.
    pub fn apply(&self, point: &[f64], base: &Hyperparams) -> Result<Hyperparams, HyperoptError> {
        let mut hp = *base;
        for (d, &x) in self.dims.iter().zip(point) {
            match d.name.as_str() {
                "lr" => hp.lr = x,
                "weight_decay" => hp.weight_decay = x,
                "dropout" => hp.dropout = x,
                "max_epochs" => hp.max_epochs = x as usize,
                "patience" => hp.patience = x as usize,
                other => {
                    return Err(HyperoptError::Space(format!("unknown training hyperparameter {other}")))
                }
            }
        }
        Ok(hp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub point: Vec<f64>,
    /// Higher is better; `None` for failed trials.
    pub score: Option<f64>,
    pub status: TrialStatus,
}

impl TrialRecord {
    fn ok_score(&self) -> Option<f64> {
        match self.status {
            TrialStatus::Ok => self.score,
            TrialStatus::Failed => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 10,
            n_candidates: 24,
        }
    }
}

impl TpeConfig {
    pub fn check(&self) -> Result<(), HyperoptError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(HyperoptError::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.n_candidates == 0 {
            return Err(HyperoptError::Config("n_candidates must be >= 1".into()));
        }
        Ok(())
    }
}

/// Splits successful trials into the top `ceil(gamma * n)` and the rest.
/// Equal scores keep trial order.
pub fn tpe_split(
    trials: &[TrialRecord],
    gamma: f64,
) -> Result<(Vec<&TrialRecord>, Vec<&TrialRecord>), HyperoptError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(HyperoptError::Config(format!("gamma {gamma} outside (0, 1)")));
    }
    let mut ok: Vec<(&TrialRecord, f64)> =
        trials.iter().filter_map(|t| t.ok_score().map(|s| (t, s))).collect();
    if ok.len() < 2 {
        return Err(HyperoptError::TooFewTrials { ok: ok.len() });
    }
    ok.sort_by(|(a, sa), (b, sb)| sb.total_cmp(sa).then(a.index.cmp(&b.index)));
    let n_good = ((gamma * ok.len() as f64).ceil() as usize).clamp(1, ok.len());
    let mut good: Vec<&TrialRecord> = ok.iter().map(|(t, _)| *t).collect();
    let bad = good.split_off(n_good);
    Ok((good, bad))
}

/// One-dimensional Parzen density on a bounded axis.
enum Density {
    Continuous {
        lo: f64,
        hi: f64,
        centers: Vec<f64>,
        bandwidth: f64,
    },
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

impl Density {
    fn fit(dim: &Dimension, observed: &[f64]) -> Density {
        match dim {
            Dimension::Discrete { values } => {
                let k = values.len() as f64;
                let probs = values
                    .iter()
                    .map(|v| (observed.iter().filter(|&&x| x == *v).count() as f64 + 1.0) / (observed.len() as f64 + k))
                    .collect();
                Density::Discrete {
                    values: values.clone(),
                    probs,
                }
            }
            _ => {
                let (lo, hi) = dim.axis().unwrap();
                let centers: Vec<f64> = observed.iter().map(|&x| dim.to_axis(x)).collect();
                let n = centers.len() as f64;
                let sd = if centers.len() > 1 {
                    let mean = centers.iter().sum::<f64>() / n;
                    (centers.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                // Silverman's rule, floored at range / (n + 1) so a small
                // good set still explores; the floor bottoms out at 1%
                let floor = (hi - lo) / (n + 1.0).min(100.0);
                let bandwidth = (1.06 * sd * n.max(1.0).powf(-0.2)).max(floor);
                Density::Continuous {
                    lo,
                    hi,
                    centers,
                    bandwidth,
                }
            }
        }
    }

    /// Mixture weight of every kernel and of the uniform prior.
    fn weight(n: usize) -> f64 {
        1.0 / (n as f64 + 1.0)
    }

    fn pdf(&self, t: f64) -> f64 {
        match self {
            Density::Discrete { values, probs } => values
                .iter()
                .position(|&v| v == t)
                .map_or(0.0, |i| probs[i]),
            Density::Continuous {
                lo,
                hi,
                centers,
                bandwidth,
            } => {
                let w = Self::weight(centers.len());
                let mut p = w / (hi - lo);
                for &c in centers {
                    let mass = normal_cdf((hi - c) / bandwidth) - normal_cdf((lo - c) / bandwidth);
                    let z = (t - c) / bandwidth;
                    let g = (-0.5 * z * z).exp() / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
                    p += w * g / mass.max(1e-300);
                }
                p
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Density::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
            Density::Continuous {
                lo,
                hi,
                centers,
                bandwidth,
            } => {
                let pick = rng.random_range(0..=centers.len());
                if pick == centers.len() {
                    return rng.random_range(*lo..=*hi);
                }
                // rejection keeps the kernel truncated to the axis
                for _ in 0..64 {
                    let z: f64 = rng.sample(StandardNormal);
                    let t = centers[pick] + bandwidth * z;
                    if (*lo..=*hi).contains(&t) {
                        return t;
                    }
                }
                centers[pick].clamp(*lo, *hi)
            }
        }
    }
}

/// Next point to evaluate. Falls back to uniform sampling while fewer than
/// `n_startup` (or 2) trials have succeeded.
pub fn suggest<R: Rng + ?Sized>(
    trials: &[TrialRecord],
    space: &HyperparamSpace,
    cfg: &TpeConfig,
    rng: &mut R,
) -> Result<Vec<f64>, HyperoptError> {
    space.check()?;
    cfg.check()?;
    let ok = trials.iter().filter(|t| t.ok_score().is_some()).count();
    if ok < cfg.n_startup.max(2) {
        return Ok(space.sample_uniform(rng));
    }
    let (good, bad) = tpe_split(trials, cfg.gamma)?;
    let column = |set: &[&TrialRecord], d: usize| set.iter().map(|t| t.point[d]).collect::<Vec<_>>();
    let densities: Vec<(Density, Density)> = space
        .dims
        .iter()
        .enumerate()
        .map(|(d, nd)| {
            (
                Density::fit(&nd.dim, &column(&good, d)),
                Density::fit(&nd.dim, &column(&bad, d)),
            )
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.n_candidates {
        let axis_point: Vec<f64> = densities.iter().map(|(l, _)| l.sample(rng)).collect();
        let score: f64 = densities
            .iter()
            .zip(&axis_point)
            .map(|((l, g), &t)| l.pdf(t).ln() - g.pdf(t).ln())
            .sum();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, axis_point));
        }
    }
    let (_, axis_point) = best.expect("n_candidates >= 1");
    Ok(space
        .dims
        .iter()
        .zip(axis_point)
        .map(|(nd, t)| nd.dim.from_axis(t))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: TrialRecord,
    pub trials: Vec<TrialRecord>,
}

/// Runs `max_trials` suggest/evaluate rounds. The objective returns `None`
/// (or a non-finite score) for a failed evaluation, which is recorded and not
/// retried. The best trial is the highest score, earliest on ties.
pub fn tune<R, F>(
    mut objective: F,
    space: &HyperparamSpace,
    max_trials: usize,
    cfg: &TpeConfig,
    rng: &mut R,
) -> Result<TuneResult, HyperoptError>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Option<f64>,
{
    if max_trials == 0 {
        return Err(HyperoptError::Config("max_trials must be >= 1".into()));
    }
    let mut trials: Vec<TrialRecord> = Vec::with_capacity(max_trials);
    for index in 0..max_trials {
        let point = suggest(&trials, space, cfg, rng)?;
        let score = objective(&point).filter(|s| s.is_finite());
        trials.push(TrialRecord {
            index,
            point,
            status: if score.is_some() { TrialStatus::Ok } else { TrialStatus::Failed },
            score,
        });
    }
    let best = trials
        .iter()
        .filter_map(|t| t.ok_score().map(|s| (t, s)))
        .fold(None::<(&TrialRecord, f64)>, |acc, (t, s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((t, s)),
        })
        .map(|(t, _)| t.clone())
        .ok_or(HyperoptError::AllFailed { trials: max_trials })?;
    Ok(TuneResult { best, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trial(index: usize, point: Vec<f64>, score: f64) -> TrialRecord {
        TrialRecord {
            index,
            point,
            score: Some(score),
            status: TrialStatus::Ok,
        }
    }

    fn one_dim(dim: Dimension) -> HyperparamSpace {
        HyperparamSpace {
            dims: vec![NamedDimension { name: "x".into(), dim }],
        }
    }

    #[test]
    fn split_sizes() {
        let trials: Vec<_> = (0..10).map(|i| trial(i, vec![0.0], i as f64)).collect();
        let (good, bad) = tpe_split(&trials, 0.25).unwrap();
        assert_eq!(good.len(), 3);
        assert_eq!(bad.len(), 7);
        assert_eq!(good.iter().map(|t| t.index).collect::<Vec<_>>(), vec![9, 8, 7]);
        for gamma in [0.01, 0.25, 0.5] {
            assert_eq!(tpe_split(&trials[..2], gamma).unwrap().0.len(), 1);
        }
        assert_eq!(tpe_split(&trials[..1], 0.25), Err(HyperoptError::TooFewTrials { ok: 1 }));
    }

    #[test]
    fn split_ties_follow_trial_order() {
        let trials: Vec<_> = [1.0, 5.0, 5.0, 5.0, 0.0]
            .iter()
            .enumerate()
            .map(|(i, &s)| trial(i, vec![0.0], s))
            .collect();
        let (good, _) = tpe_split(&trials, 0.4).unwrap();
        assert_eq!(good.iter().map(|t| t.index).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn failed_trials_are_excluded_from_split() {
        let mut trials: Vec<_> = (0..4).map(|i| trial(i, vec![0.0], i as f64)).collect();
        trials[3].status = TrialStatus::Failed;
        trials[3].score = None;
        let (good, bad) = tpe_split(&trials, 0.25).unwrap();
        assert_eq!(good.len() + bad.len(), 3);
        assert_eq!(good[0].index, 2);
    }

    #[test]
    fn clustered_good_trials_attract_suggestions() {
        let space = one_dim(Dimension::Uniform { lo: 0.0, hi: 1.0 });
        let mut near = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut trials = Vec::new();
            for i in 0..5 {
                trials.push(trial(i, vec![0.1 + rng.random_range(-0.02..0.02)], 1.0));
            }
            for i in 5..20 {
                trials.push(trial(i, vec![0.9 + rng.random_range(-0.02..0.02)], 0.0));
            }
            let x = suggest(&trials, &space, &TpeConfig::default(), &mut rng).unwrap()[0];
            if (x - 0.1).abs() < (x - 0.9).abs() {
                near += 1;
            }
        }
        assert!(near > 90, "{near}/100");
    }

    #[test]
    fn discrete_frequencies_follow_smoothed_ratio() {
        // good = {a, a, b}, bad = {c, c, c}; add-one smoothing gives
        // l = (3, 2, 1) / 6 and g = (1, 1, 4) / 6, so the ratio ranks a > b > c.
        // `c` wins only when all 24 candidates are `c`: probability (1/6)^24.
        // `a` wins whenever one candidate is `a`: probability 1 - (1/2)^24.
        let space = one_dim(Dimension::Discrete {
            values: vec![0.0, 1.0, 2.0],
        });
        let trials = vec![
            trial(0, vec![0.0], 3.0),
            trial(1, vec![0.0], 3.0),
            trial(2, vec![1.0], 3.0),
            trial(3, vec![2.0], 0.0),
            trial(4, vec![2.0], 0.0),
            trial(5, vec![2.0], 0.0),
        ];
        let cfg = TpeConfig {
            gamma: 0.5,
            n_startup: 6,
            n_candidates: 24,
        };
        let mut counts = [0usize; 3];
        for seed in 0..2000u64 {
            let x = suggest(&trials, &space, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()[0];
            counts[x as usize] += 1;
        }
        assert!(counts[0] > counts[2]);
        assert_eq!(counts[0], 2000);

        let l = Density::fit(&space.dims[0].dim, &[0.0, 0.0, 1.0]);
        let g = Density::fit(&space.dims[0].dim, &[2.0, 2.0, 2.0]);
        let ratio = |v: f64| l.pdf(v) / g.pdf(v);
        assert!((ratio(0.0) - 3.0).abs() < 1e-12);
        assert!((ratio(1.0) - 2.0).abs() < 1e-12);
        assert!((ratio(2.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn startup_phase_is_uniform() {
        let space = one_dim(Dimension::Uniform { lo: 2.0, hi: 4.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs: Vec<f64> = (0..4000)
            .map(|_| suggest(&[], &space, &TpeConfig::default(), &mut rng).unwrap()[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        // uniform(2, 4): sd 1/sqrt(3), standard error of the mean ~ 0.0091
        assert!((mean - 3.0).abs() < 4.0 * (1.0 / 3f64.sqrt()) / (4000f64).sqrt());
        let below = xs.iter().filter(|&&x| x < 2.5).count() as f64 / 4000.0;
        assert!((below - 0.25).abs() < 0.03);
    }

    #[test]
    fn continuous_density_integrates_to_one() {
        let dim = Dimension::Uniform { lo: 0.0, hi: 1.0 };
        let d = Density::fit(&dim, &[0.0, 0.05, 0.7, 1.0]);
        let steps = 20_000;
        let h = 1.0 / steps as f64;
        let total: f64 = (0..steps).map(|i| d.pdf((i as f64 + 0.5) * h) * h).sum();
        assert!((total - 1.0).abs() < 1e-6);
        // a single point gets half the axis; a large tight cluster 1%
        let Density::Continuous { bandwidth, .. } = Density::fit(&dim, &[0.5]) else { unreachable!() };
        assert!((bandwidth - 0.5).abs() < 1e-15);
        let Density::Continuous { bandwidth, .. } = Density::fit(&dim, &[0.5; 200]) else { unreachable!() };
        assert!((bandwidth - 0.01).abs() < 1e-15);
    }

    #[test]
    fn tune_single_trial_and_failures() {
        let space = HyperparamSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = tune(|p| Some(p[2]), &space, 1, &TpeConfig::default(), &mut rng).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best, r.trials[0]);
        let err = tune(|_| None, &space, 3, &TpeConfig::default(), &mut rng).unwrap_err();
        assert_eq!(err, HyperoptError::AllFailed { trials: 3 });
        let r = tune(|p| (p[2] > 0.4).then_some(f64::NAN), &space, 5, &TpeConfig::default(), &mut rng);
        assert!(r.is_err());
    }

    #[test]
    fn tune_is_deterministic_and_bounded() {
        let space = HyperparamSpace::default();
        let run = || {
            let mut calls = 0;
            let r = tune(
                |p| {
                    calls += 1;
                    Some(-(p[0].ln() + 5.0).powi(2) - p[2])
                },
                &space,
                25,
                &TpeConfig::default(),
                &mut ChaCha8Rng::seed_from_u64(4),
            )
            .unwrap();
            (r, calls)
        };
        let (a, calls) = run();
        assert_eq!(calls, 25);
        assert_eq!(a, run().0);
        let max = a.trials.iter().filter_map(|t| t.score).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best.score, Some(max));
    }

    #[test]
    fn apply_maps_named_dims() {
        let space = HyperparamSpace::default();
        let hp = space.apply(&[0.02, 1e-4, 0.3], &Hyperparams::default()).unwrap();
        assert_eq!((hp.lr, hp.weight_decay, hp.dropout), (0.02, 1e-4, 0.3));
        let bad = one_dim(Dimension::Uniform { lo: 0.0, hi: 1.0 });
        assert!(bad.apply(&[0.5], &Hyperparams::default()).is_err());
    }

    #[test]
    fn invalid_spaces() {
        assert!(one_dim(Dimension::Uniform { lo: 1.0, hi: 1.0 }).check().is_err());
        assert!(one_dim(Dimension::LogUniform { lo: 0.0, hi: 1.0 }).check().is_err());
        assert!(one_dim(Dimension::Discrete { values: vec![] }).check().is_err());
    }

    fn mixed_space() -> HyperparamSpace {
        HyperparamSpace {
            dims: vec![
                NamedDimension { name: "a".into(), dim: Dimension::LogUniform { lo: 1e-5, hi: 1.0 } },
                NamedDimension { name: "b".into(), dim: Dimension::Uniform { lo: -2.0, hi: 3.0 } },
                NamedDimension { name: "c".into(), dim: Dimension::Discrete { values: vec![4.0, 8.0, 16.0] } },
            ],
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn suggestions_stay_in_bounds(seed in 0u64..10_000, n in 0usize..30) {
            let space = mixed_space();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trials: Vec<_> = (0..n)
                .map(|i| trial(i, space.sample_uniform(&mut rng), rng.random_range(-1.0..1.0)))
                .collect();
            let p = suggest(&trials, &space, &TpeConfig::default(), &mut rng).unwrap();
            prop_assert!(space.contains(&p), "{:?}", p);
        }

        #[test]
        fn split_partitions_ok_trials(scores in proptest::collection::vec(-5i32..5, 2..40), gamma in 0.01f64..0.99) {
            let trials: Vec<_> = scores.iter().enumerate().map(|(i, &s)| trial(i, vec![0.0], s as f64)).collect();
            let (good, bad) = tpe_split(&trials, gamma).unwrap();
            prop_assert!(!good.is_empty());
            prop_assert_eq!(good.len() + bad.len(), trials.len());
            let mut seen: Vec<usize> = good.iter().chain(&bad).map(|t| t.index).collect();
            seen.sort();
            prop_assert_eq!(seen, (0..trials.len()).collect::<Vec<_>>());
            let worst_good = good.iter().map(|t| t.score.unwrap()).fold(f64::INFINITY, f64::min);
            prop_assert!(bad.iter().all(|t| t.score.unwrap() <= worst_good));
        }

        #[test]
        fn monotone_relabeling_does_not_change_suggestion(seed in 0u64..10_000, n in 10usize..30) {
            let space = mixed_space();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trials: Vec<_> = (0..n)
                .map(|i| trial(i, space.sample_uniform(&mut rng), rng.random_range(-1.0..1.0)))
                .collect();
            let relabeled: Vec<_> = trials
                .iter()
                .map(|t| TrialRecord { score: t.score.map(|s| (3.0 * s).exp() + 7.0), ..t.clone() })
                .collect();
            let a = suggest(&trials, &space, &TpeConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed + 1)).unwrap();
            let b = suggest(&relabeled, &space, &TpeConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed + 1)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
