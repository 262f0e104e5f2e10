use serde::{Deserialize, Serialize};

use super::history::History;
use crate::genome::ArchitectureGenome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBest {
    pub index: u64,
    pub depth: usize,
    pub fitness: f64,
    pub val_loss: Option<f64>,
    pub genome: ArchitectureGenome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub evaluated: usize,
    pub failed: usize,
    /// Best fitness among successful evaluations at this depth.
    pub best_fitness: Option<f64>,
    pub mean_fitness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub entries: usize,
    pub failed: usize,
    pub skipped_lines: usize,
    pub best: Option<ReportBest>,
    /// One row per depth from 2 to the deepest evaluated genome.
    pub by_depth: Vec<DepthRow>,
}

/// Summarizes a history. A pure function of the log, so a replayed log
/// gives the same report as the live run.
pub fn report(history: &History) -> ReportDoc {
    let entries = &history.entries;
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        if let Some(f) = e.fitness {
            if best.is_none_or(|b| f > entries[b].fitness.expect("best has fitness")) {
                best = Some(i);
            }
        }
    }
    let max_depth = entries.iter().map(|e| e.genome.depth()).max().unwrap_or(0);
    let by_depth = (2..=max_depth)
        .map(|depth| {
            let at: Vec<_> = entries.iter().filter(|e| e.genome.depth() == depth).collect();
            let ok: Vec<f64> = at.iter().filter_map(|e| e.fitness).collect();
            DepthRow {
                depth,
                evaluated: at.len(),
                failed: at.len() - ok.len(),
                best_fitness: ok.iter().copied().reduce(f64::max),
                mean_fitness: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
            }
        })
        .collect();
    ReportDoc {
        entries: entries.len(),
        failed: entries.iter().filter(|e| e.fitness.is_none()).count(),
        skipped_lines: history.skipped_lines.len(),
        best: best.map(|i| {
            let e = &entries[i];
            ReportBest {
                index: e.index,
                depth: e.genome.depth(),
                fitness: e.fitness.expect("best has fitness"),
                val_loss: e.val_loss,
                genome: e.genome.clone(),
            }
        }),
        by_depth,
    }
}
