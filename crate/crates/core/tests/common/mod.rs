//! Helpers shared by the engine tests and the acceptance suite.
#![allow(dead_code)]

use gnnevo::data::Labels;
use gnnevo::genome::{Activation, Aggregator, ArchitectureGenome, AttentionFn, LayerGene};
use gnnevo::gnn::{backward, build_model, forward, loss, loss_and_grad, Graph, Mode, Model, DEFAULT_PARAM_CAP};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gene(attention_fn: AttentionFn, heads: u32, hidden: u32, aggregator: Aggregator, activation: Activation, skip_mask: u64) -> LayerGene {
    LayerGene {
        attention_fn,
        heads,
        hidden_dim: hidden,
        aggregator,
        activation,
        skip_mask,
    }
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_undirected(n, &edges).unwrap()
}

pub fn eval_loss(model: &Model, g: &ArchitectureGenome, graph: &Graph, x: &Array2<f64>, labels: &Labels, mask: &[bool]) -> f64 {
    let out = forward(model, g, graph, x, Mode::Eval, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    loss(&out.logits, labels, mask).unwrap()
}

pub fn tensor_mut(model: &mut Model, t: usize) -> &mut Array2<f64> {
    model.tensors_mut().into_iter().nth(t).unwrap()
}

/// Central-difference check of every parameter for one genome. Returns the
/// worst relative error.
pub fn gradient_check(g: &ArchitectureGenome, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 20;
    let graph = random_graph(&mut rng, n, 0.2);
    let x = Array2::from_shape_simple_fn((n, 5), || rng.random_range(-1.0..1.0));
    let labels = Labels::Single((0..n).map(|_| Some(rng.random_range(0..3))).collect());
    let mask: Vec<bool> = (0..n).map(|i| i % 4 != 3).collect();
    let model = build_model(g, 5, &mut rng, DEFAULT_PARAM_CAP).unwrap();

    let out = forward(&model, g, &graph, &x, Mode::Eval, 0.0, &mut rng).unwrap();
    let (_, d_logits) = loss_and_grad(&out.logits, &labels, &mask).unwrap();
    let grads = backward(&model, g, &graph, &out.activations, &d_logits).unwrap();
    let analytic: Vec<Array2<f64>> = grads.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();

    let mut worst = 0.0f64;
    for (t, grad) in analytic.iter().enumerate() {
        for idx in 0..grad.len() {
            let (r, c) = (idx / grad.ncols(), idx % grad.ncols());
            let f = |e: f64| {
                let mut m = model.clone();
                tensor_mut(&mut m, t)[[r, c]] += e;
                eval_loss(&m, g, &graph, &x, &labels, &mask)
            };
            let a = grad[[r, c]];
            let rel = |num: f64| (a - num).abs() / a.abs().max(num.abs()).max(1e-4);
            let (up, down) = (f(1e-4), f(-1e-4));
            let mut err = rel((up - down) / 2e-4);
            if err >= 1e-4 {
                // A max tie or a ReLU-type hinge inside the stencil shows up as
                // disagreeing one-sided slopes; shrink the step past it.
                let f0 = f(0.0);
                let (right, left) = ((up - f0) / 1e-4, (f0 - down) / 1e-4);
                if (right - left).abs() > 1e-3 * right.abs().max(left.abs()).max(1e-4) {
                    err = rel((f(1e-6) - f(-1e-6)) / 2e-6);
                }
            }
            worst = worst.max(err);
        }
    }
    worst
}

/// Dense `sigma(L sigma(L X W1) W2) W_C` with `L = D^-1/2 (A + I) D^-1/2`.
pub fn dense_gcn(adj: &Array2<f64>, x: &Array2<f64>, w1: &Array2<f64>, w2: &Array2<f64>, wc: &Array2<f64>) -> Array2<f64> {
    let n = adj.nrows();
    let a = adj + &Array2::<f64>::eye(n);
    let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    let l = Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] / (deg[i] * deg[j]).sqrt());
    let relu = |m: Array2<f64>| m.mapv(|v| v.max(0.0));
    let h1 = relu(l.dot(&x.dot(w1)));
    let h2 = relu(l.dot(&h1.dot(w2)));
    h2.dot(wc)
}

