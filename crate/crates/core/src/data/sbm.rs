use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, GraphDataset, Labels};
use crate::gnn::Graph;

/// Stochastic block model with community-dependent Gaussian features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmParams {
    pub communities: usize,
    pub nodes_per_community: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Mean shift on the feature coordinates owned by a node's community.
    pub signal: f64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    /// Each node also carries the label of the next community.
    pub multi_label: bool,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            communities: 4,
            nodes_per_community: 100,
            p_in: 0.1,
            p_out: 0.01,
            feature_dim: 16,
            signal: 1.0,
            train_frac: 0.2,
            val_frac: 0.2,
            test_frac: 0.6,
            multi_label: false,
            seed: 0,
        }
    }
}

impl SbmParams {
    pub fn check(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Config(m));
        if self.communities < 2 {
            return err(format!("need at least 2 communities, got {}", self.communities));
        }
        if self.nodes_per_community == 0 || self.feature_dim == 0 {
            return err("nodes_per_community and feature_dim must be >= 1".into());
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} = {p} is not a probability"));
            }
        }
        if !self.signal.is_finite() {
            return err("signal must be finite".into());
        }
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || fracs.iter().sum::<f64>() > 1.0 + 1e-9 {
            return err(format!("infeasible split fractions {fracs:?}"));
        }
        let per = self.nodes_per_community as f64;
        if (self.train_frac * per).round() < 1.0 || (self.val_frac * per).round() < 1.0 {
            return err(format!(
                "infeasible splits: {} nodes per community leave an empty train or validation split",
                self.nodes_per_community
            ));
        }
        Ok(())
    }
}

/// Samples a labelled graph. Every pair inside a community is connected with
/// probability `p_in`, across communities with `p_out`. Splits are stratified
/// by community.
pub fn generate_sbm(params: &SbmParams) -> Result<GraphDataset, DataError> {
    params.check()?;
    let c = params.communities;
    let per = params.nodes_per_community;
    let n = c * per;
    let community = |i: usize| i / per;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if community(u) == community(v) {
                params.p_in
            } else {
                params.p_out
            };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let raw_edge_count = edges.len();
    let graph = Graph::from_undirected(n, &edges).expect("generated edges are in range");

    // rounded through f32 so a dataset survives the bundle format bit-exactly
    let features = Array2::from_shape_fn((n, params.feature_dim), |(i, j)| {
        let mean = if j % c == community(i) { params.signal } else { 0.0 };
        let noise: f64 = rng.sample(StandardNormal);
        (mean + noise) as f32 as f64
    });

    let labels = if params.multi_label {
        Labels::Multi(Array2::from_shape_fn((n, c), |(i, l)| {
            let own = community(i);
            (l == own || l == (own + 1) % c) as u8
        }))
    } else {
        Labels::Single((0..n).map(|i| Some(community(i) as u32)).collect())
    };

    let mut train = vec![false; n];
    let mut val = vec![false; n];
    let mut test = vec![false; n];
    let n_train = (params.train_frac * per as f64).round() as usize;
    let n_val = (params.val_frac * per as f64).round() as usize;
    let n_test = ((params.test_frac * per as f64).round() as usize).min(per - n_train - n_val);
    for block in 0..c {
        let mut members: Vec<usize> = (block * per..(block + 1) * per).collect();
        members.shuffle(&mut rng);
        for &i in &members[..n_train] {
            train[i] = true;
        }
        for &i in &members[n_train..n_train + n_val] {
            val[i] = true;
        }
        for &i in &members[n_train + n_val..n_train + n_val + n_test] {
            test[i] = true;
        }
    }

    let dataset = GraphDataset {
        name: format!("sbm-{c}x{per}-seed{}", params.seed),
        graph,
        features,
        labels,
        classes: c,
        train,
        val,
        test,
        raw_edge_count,
    };
    dataset.validate().map_err(DataError::Invalid)?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let p = SbmParams::default();
        assert_eq!(generate_sbm(&p).unwrap(), generate_sbm(&p).unwrap());
        let q = SbmParams { seed: 1, ..p.clone() };
        assert_ne!(generate_sbm(&p).unwrap().graph, generate_sbm(&q).unwrap().graph);
    }

    #[test]
    fn split_sizes_are_stratified() {
        let d = generate_sbm(&SbmParams::default()).unwrap();
        let s = d.stats();
        assert_eq!((s.train, s.val, s.test), (80, 80, 240));
        let Labels::Single(ys) = &d.labels else { unreachable!() };
        for c in 0..4 {
            let k = (0..400).filter(|&i| d.train[i] && ys[i] == Some(c)).count();
            assert_eq!(k, 20);
        }
    }

    #[test]
    fn infeasible_splits_are_rejected() {
        let over = SbmParams {
            train_frac: 0.6,
            val_frac: 0.6,
            ..SbmParams::default()
        };
        assert!(matches!(generate_sbm(&over), Err(DataError::Config(_))));
        let tiny = SbmParams {
            nodes_per_community: 2,
            ..SbmParams::default()
        };
        assert!(matches!(generate_sbm(&tiny), Err(DataError::Config(_))));
    }

    #[test]
    fn pooled_density_within_three_sigma() {
        let base = SbmParams::default();
        let per = base.nodes_per_community as f64;
        let n = per * base.communities as f64;
        let pairs_in = base.communities as f64 * per * (per - 1.0) / 2.0;
        let pairs_out = n * (n - 1.0) / 2.0 - pairs_in;
        let seeds = 50u64;
        let (mut e_in, mut e_out) = (0.0, 0.0);
        for seed in 0..seeds {
            let d = generate_sbm(&SbmParams { seed, ..base.clone() }).unwrap();
            for &(u, v) in d.graph.directed_edges() {
                if u < v {
                    if u / 100 == v / 100 {
                        e_in += 1.0;
                    } else {
                        e_out += 1.0;
                    }
                }
            }
        }
        for (e, pairs, p) in [(e_in, pairs_in, base.p_in), (e_out, pairs_out, base.p_out)] {
            let trials = pairs * seeds as f64;
            let sd = (trials * p * (1.0 - p)).sqrt();
            assert!((e - trials * p).abs() <= 3.0 * sd, "{e} vs {}", trials * p);
        }
    }

    #[test]
    fn multi_label_has_two_bits() {
        let d = generate_sbm(&SbmParams {
            multi_label: true,
            ..SbmParams::default()
        })
        .unwrap();
        let Labels::Multi(ys) = &d.labels else { unreachable!() };
        assert!(ys.rows().into_iter().all(|r| r.iter().map(|&b| b as u32).sum::<u32>() == 2));
    }
}
