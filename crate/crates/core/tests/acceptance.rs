//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if an evaluated criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 1 7 8`. Criterion 5 needs a Cora
//! dataset bundle at `$GNNEVO_CORA_BUNDLE`.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gnnevo::data::{generate_sbm, SbmParams};
use gnnevo::evolution::Strategy;
use gnnevo::genome::{
    canonical_serialize, random_genome, skip_mask_decode, skip_mask_encode, Activation, Aggregator,
    ArchitectureGenome, AttentionFn, GenomeSpace, HeadCombine, Task,
};
use gnnevo::gnn::{build_model, forward, micro_f1, Graph, Mode, DEFAULT_PARAM_CAP};
use gnnevo::harness::commands::median;
use gnnevo::harness::{cmd_compare, cmd_tune, RunConfig, Toggle};
use gnnevo::hyperopt::{tune, Dimension, HyperparamSpace, NamedDimension, TpeConfig};
use gnnevo::mutation::{mutate, mutation_diff, MutationKind};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{dense_gcn, gene, gradient_check, random_graph};

// Tolerances and budgets, pinned.
const C1_TIME: Duration = Duration::from_secs(1);
const C2_PAIRS: usize = 10_000;
const C2_TIME: Duration = Duration::from_secs(30);
const C3_REL_ERR: f64 = 1e-4;
const C3_TIME: Duration = Duration::from_secs(300);
const C4_ABS_ERR: f64 = 1e-8;
const C5_TEST_ACC: f64 = 0.79;
const C5_TIME: Duration = Duration::from_secs(30 * 60);
const C6_SEEDS: usize = 10;
const C6_TIME: Duration = Duration::from_secs(2 * 3600);
const C7_SEEDS: u64 = 20;
const C7_TRIALS: usize = 50;
const C8_CASES: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn c1_skip_mask_round_trip() -> Outcome {
    let start = Instant::now();
    let mut checked = 0u64;
    let mut bad = Vec::new();
    for k in 1..=8usize {
        let bound = 1u64 << (k - 1);
        for s in 0..bound {
            let sources = skip_mask_decode(s, k).unwrap();
            if skip_mask_encode(&sources, k).ok() != Some(s) {
                bad.push((k, s));
            }
            checked += 1;
        }
        if skip_mask_decode(bound, k).is_ok() {
            bad.push((k, bound));
        }
    }
    let t = start.elapsed();
    outcome(
        bad.is_empty() && t < C1_TIME,
        format!("{checked} masks over k<=8, {} mismatches, {t:.3?} (limit {C1_TIME:?})", bad.len()),
    )
}

/// Explicit source sets per layer, input = 0.
fn sources(g: &ArchitectureGenome) -> Vec<Vec<usize>> {
    (1..=g.depth()).map(|k| skip_mask_decode(g.layers[k - 1].skip_mask, k).unwrap()).collect()
}

fn c2_mutation_contract() -> Outcome {
    let start = Instant::now();
    let space = GenomeSpace::default();
    let max_layers = 10;
    let (mut invalid, mut not_single, mut lost_connections, mut layer_adds) = (0, 0, 0, 0);
    for i in 0..C2_PAIRS {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let depth = rng.random_range(1..=max_layers);
        let parent = random_genome(&mut rng, &space, depth, 5, Task::SingleLabel).unwrap();
        let (child, diff) = mutate(&parent, &mut rng, &space, max_layers).unwrap();
        if child.validate(&space).is_err() {
            invalid += 1;
        }
        match mutation_diff(&parent, &child) {
            Some(d) if d.kind == diff.kind => {}
            _ => not_single += 1,
        }
        if diff.kind == MutationKind::LayerAdd {
            layer_adds += 1;
            // layer j of the parent sits at j, or j + 1 past the copy
            let idx = diff.layer;
            let shift = |j: usize| if j <= idx { j } else { j + 1 };
            let before = sources(&parent);
            let after = sources(&child);
            for k in 1..=parent.depth() {
                let want: Vec<usize> = before[k - 1].iter().map(|&j| shift(j)).collect();
                if after[shift(k) - 1] != want {
                    lost_connections += 1;
                }
            }
        }
    }
    let t = start.elapsed();
    outcome(
        invalid == 0 && not_single == 0 && lost_connections == 0 && layer_adds > 0 && t < C2_TIME,
        format!(
            "{C2_PAIRS} pairs: {invalid} invalid, {not_single} not a single change, \
             {lost_connections} lost connections over {layer_adds} layer_adds, {t:.2?} (limit {C2_TIME:?})"
        ),
    )
}

fn c3_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut combos = 0;
    for &att in &AttentionFn::ALL {
        for &agg in &Aggregator::ALL {
            for &act in &Activation::ALL {
                combos += 1;
                let g = ArchitectureGenome {
                    layers: vec![gene(att, 2, 3, agg, act, 0), gene(att, 2, 3, agg, act, 1)],
                    head_combine: HeadCombine::Average,
                    output_classes: 3,
                    task: Task::SingleLabel,
                };
                let err = gradient_check(&g, combos);
                if err > worst.0 {
                    worst = (err, format!("{}/{}/{}", att.name(), agg.name(), act.name()));
                }
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst.0 < C3_REL_ERR && t < C3_TIME,
        format!(
            "{combos} combinations, worst relative error {:.2e} at {} (limit {C3_REL_ERR:e}), {t:.1?} (limit {C3_TIME:?})",
            worst.0, worst.1
        ),
    )
}

fn gcn_point(hidden: u32, classes: u32) -> ArchitectureGenome {
    ArchitectureGenome {
        layers: vec![
            gene(AttentionFn::Gcn, 1, hidden, Aggregator::Sum, Activation::Relu, 0),
            gene(AttentionFn::Gcn, 1, hidden, Aggregator::Sum, Activation::Relu, 0),
        ],
        head_combine: HeadCombine::Average,
        output_classes: classes,
        task: Task::SingleLabel,
    }
}

fn c4_gcn_oracle() -> Outcome {
    let g = gcn_point(8, 4);
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let n = rng.random_range(5..40);
        let graph: Graph = random_graph(&mut rng, n, 0.15);
        let mut adj = Array2::<f64>::zeros((n, n));
        for &(u, v) in graph.directed_edges() {
            adj[[u, v]] = 1.0;
        }
        let x = Array2::from_shape_simple_fn((n, 7), || rng.random_range(-1.0..1.0));
        let model = build_model(&g, 7, &mut rng, DEFAULT_PARAM_CAP).unwrap();
        let got = forward(&model, &g, &graph, &x, Mode::Eval, 0.0, &mut rng).unwrap().logits;
        let want = dense_gcn(&adj, &x, &model.layers[0].weight, &model.layers[1].weight, &model.output);
        worst = worst.max((&got - &want).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b)));
    }
    outcome(
        worst < C4_ABS_ERR,
        format!("10 graphs, max abs difference {worst:.2e} (limit {C4_ABS_ERR:e})"),
    )
}

fn c5_cora() -> Outcome {
    let Some(bundle) = std::env::var_os("GNNEVO_CORA_BUNDLE").map(PathBuf::from) else {
        return outcome(false, "not run: no Cora bundle (set GNNEVO_CORA_BUNDLE to a bundle directory)");
    };
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        dataset: Some(bundle),
        seed: 0,
        ..RunConfig::default()
    };
    cfg.hyperparams.max_epochs = 200;
    cfg.hyperparams.patience = 20;
    cfg.tuner.max_trials = 50;
    let data = match cfg.dataset() {
        Ok(d) => d,
        Err(e) => return outcome(false, format!("bundle unusable: {e}")),
    };
    let genome = dir.path().join("gcn.json");
    std::fs::write(&genome, canonical_serialize(&gcn_point(16, data.classes as u32))).unwrap();
    match cmd_tune(&cfg, &genome, dir.path()) {
        Ok(doc) => {
            let t = start.elapsed();
            outcome(
                doc.test_metric >= C5_TEST_ACC && t < C5_TIME,
                format!(
                    "test accuracy {:.4} (need >= {C5_TEST_ACC}), val {:.4}, {t:.0?} (limit {C5_TIME:?})",
                    doc.test_metric, doc.val_metric
                ),
            )
        }
        Err(e) => outcome(false, format!("tuning failed: {e}")),
    }
}

fn c6_search_effectiveness() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        tuning: Toggle::Off,
        population_size: 20,
        sample_size: Some(5),
        budget: 100,
        max_layers: 10,
        param_cap: 50_000,
        seed: 0,
        workers: 1,
        ..RunConfig::default()
    };
    cfg.sbm = SbmParams {
        signal: 0.3,
        ..SbmParams::default()
    };
    cfg.hyperparams.max_epochs = 100;
    cfg.hyperparams.patience = 10;
    let doc = match cmd_compare(&cfg, &[Strategy::Evolution, Strategy::Random], C6_SEEDS, dir.path()) {
        Ok(d) => d,
        Err(e) => return outcome(false, format!("compare failed: {e}")),
    };
    let (evo, rnd) = (&doc.strategies[0], &doc.strategies[1]);
    let deep = evo.max_depth.iter().filter(|&&d| d >= 3).count();
    let t = start.elapsed();
    outcome(
        evo.median_final_best >= rnd.median_final_best && deep == C6_SEEDS && t < C6_TIME,
        format!(
            "median best val accuracy evolution {:.4} vs random {:.4} over {C6_SEEDS} seeds; \
             evolution reached depth >= 3 in {deep}/{C6_SEEDS} runs (max depths {:?}); {t:.0?} (limit {C6_TIME:?})",
            evo.median_final_best, rnd.median_final_best, evo.max_depth
        ),
    )
}

fn c7_tpe() -> Outcome {
    let space = HyperparamSpace {
        dims: vec![NamedDimension {
            name: "x".into(),
            dim: Dimension::Uniform { lo: 0.0, hi: 1.0 },
        }],
    };
    let f = |x: f64| -(x - 0.3) * (x - 0.3);
    let mut tpe_best = Vec::new();
    let mut rand_best = Vec::new();
    for seed in 0..C7_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = tune(|p| Some(f(p[0])), &space, C7_TRIALS, &TpeConfig::default(), &mut rng).unwrap();
        tpe_best.push(r.best.score.unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand_best.push((0..C7_TRIALS).map(|_| f(space.sample_uniform(&mut rng)[0])).fold(f64::NEG_INFINITY, f64::max));
    }
    let (t, r) = (median(&tpe_best), median(&rand_best));
    outcome(
        t > r,
        format!("median best over {C7_SEEDS} seeds x {C7_TRIALS} trials: TPE {t:.3e}, random {r:.3e}"),
    )
}

/// Scalar confusion-count oracle.
fn oracle_f1(pred: &[u8], truth: &[u8]) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fneg = 0.0;
    for i in 0..pred.len() {
        if pred[i] == 1 && truth[i] == 1 {
            tp += 1.0;
        } else if pred[i] == 1 {
            fp += 1.0;
        } else if truth[i] == 1 {
            fneg += 1.0;
        }
    }
    if tp + fp + fneg == 0.0 {
        1.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fneg)
    }
}

fn c8_micro_f1() -> Outcome {
    let p = Array2::from_shape_vec((2, 3), vec![1u8, 1, 1, 0, 1, 0]).unwrap();
    let y = Array2::from_shape_vec((2, 3), vec![1u8, 0, 0, 0, 1, 1]).unwrap();
    let hand = micro_f1(&p, &y).unwrap();
    let hand_ok = hand == 4.0 / 7.0 && oracle_f1(p.as_slice().unwrap(), y.as_slice().unwrap()) == 4.0 / 7.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for _ in 0..C8_CASES {
        let (n, c) = (rng.random_range(1..30), rng.random_range(1..10));
        let density = rng.random_range(0.0..1.0);
        let p = Array2::from_shape_simple_fn((n, c), || rng.random_bool(density) as u8);
        let y = Array2::from_shape_simple_fn((n, c), || rng.random_bool(density) as u8);
        if micro_f1(&p, &y).unwrap() != oracle_f1(p.as_slice().unwrap(), y.as_slice().unwrap()) {
            mismatches += 1;
        }
    }
    outcome(
        hand_ok && mismatches == 0,
        format!("hand case {hand} (want 4/7), {mismatches}/{C8_CASES} randomized mismatches"),
    )
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sbm_dir = dir.path().join("sbm");
    let data = generate_sbm(&SbmParams {
        nodes_per_community: 40,
        signal: 0.5,
        ..SbmParams::default()
    })
    .unwrap();
    gnnevo::data::write_bundle(&data, &sbm_dir).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_gnnevo"))
            .args(["--sequential", "--seed", "42", "search", "--tuning", "off", "--budget", "40"])
            .args(["--population-size", "10", "--max-layers", "5", "--max-epochs", "30", "--patience", "5"])
            .args(["--param-cap", "30000", "--dataset"])
            .arg(&sbm_dir)
            .arg("--out")
            .arg(&out)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success(), "search exited with {status}");
        std::fs::read(out.join("history.jsonl")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    let lines = a.iter().filter(|&&c| c == b'\n').count();
    outcome(
        a == b && lines == 41,
        format!("two sequential runs: {} bytes vs {} bytes, {lines} lines, identical = {}", a.len(), b.len(), a == b),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "skip-mask encoding round trip", c1_skip_mask_round_trip),
        (2, "mutation contract", c2_mutation_contract),
        (3, "gradient fidelity", c3_gradients),
        (4, "GCN equivalence oracle", c4_gcn_oracle),
        (5, "Cora baseline", c5_cora),
        (6, "search effectiveness on the SBM fixture", c6_search_effectiveness),
        (7, "TPE effectiveness", c7_tpe),
        (8, "micro-F1 oracle", c8_micro_f1),
        (9, "sequential search determinism", c9_determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let mut skipped = Vec::new();
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let o = run();
        println!("{} C{id} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            if o.detail.starts_with("not run") {
                skipped.push(id);
            } else {
                failed.push(id);
            }
        }
    }
    println!("acceptance: failed {failed:?}, not run {skipped:?}");
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
