//! Node-classification datasets: the in-memory representation, the on-disk
//! bundle format and a stochastic block model generator for fixtures.

mod bundle;
mod sbm;

use std::path::PathBuf;

use ndarray::Array2;
use thiserror::Error;

use crate::genome::{ArchitectureGenome, Task};
use crate::gnn::{GnnError, Graph, Split};

pub use bundle::{load_bundle, write_bundle, BUNDLE_FORMAT_VERSION};
pub use sbm::{generate_sbm, SbmParams};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid dataset: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Node labels: one optional class id per node, or a binary node-by-label
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Single(Vec<Option<u32>>),
    Multi(Array2<u8>),
}

impl Labels {
    pub fn task(&self) -> Task {
        match self {
            Labels::Single(_) => Task::SingleLabel,
            Labels::Multi(_) => Task::MultiLabel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub graph: Graph,
    pub features: Array2<f64>,
    pub labels: Labels,
    pub classes: usize,
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
    /// Edge lines as read from disk, before symmetrization and de-duplication.
    pub raw_edge_count: usize,
}

/// Summary counts, comparable against published dataset tables.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DatasetStats {
    pub nodes: usize,
    pub raw_edges: usize,
    pub undirected_edges: usize,
    pub features: usize,
    pub classes: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl GraphDataset {
    pub fn task(&self) -> Task {
        self.labels.task()
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn mask(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn stats(&self) -> DatasetStats {
        let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
        DatasetStats {
            nodes: self.node_count(),
            raw_edges: self.raw_edge_count,
            undirected_edges: self.graph.undirected_edge_count(),
            features: self.feature_dim(),
            classes: self.classes,
            train: count(&self.train),
            val: count(&self.val),
            test: count(&self.test),
        }
    }

    /// Fails when the genome's head does not fit this dataset.
    pub fn check_task(&self, genome: &ArchitectureGenome) -> Result<(), GnnError> {
        if genome.task != self.task() {
            return Err(GnnError::Config(format!(
                "genome task {} does not match dataset task {}",
                genome.task,
                self.task()
            )));
        }
        if genome.output_classes as usize != self.classes {
            return Err(GnnError::Config(format!(
                "genome has {} output classes, dataset has {}",
                genome.output_classes, self.classes
            )));
        }
        Ok(())
    }

    /// Checks every structural invariant; violations are returned as data.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let n = self.node_count();
        let mut v = Vec::new();
        if self.features.nrows() != n {
            v.push(format!("feature matrix has {} rows for {n} nodes", self.features.nrows()));
        }
        if self.features.ncols() == 0 {
            v.push("feature dimension is 0".into());
        }
        if self.features.iter().any(|x| !x.is_finite()) {
            v.push("non-finite feature value".into());
        }
        if self.classes == 0 {
            v.push("zero classes".into());
        }
        for (name, mask) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if mask.len() != n {
                v.push(format!("{name} mask has length {} for {n} nodes", mask.len()));
            }
        }
        if v.is_empty() {
            let overlap = (0..n)
                .filter(|&i| (self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8) > 1)
                .count();
            if overlap > 0 {
                v.push(format!("split masks overlap on {overlap} nodes"));
            }
            let masked = |i: usize| self.train[i] || self.val[i] || self.test[i];
            match &self.labels {
                Labels::Single(ys) => {
                    if ys.len() != n {
                        v.push(format!("{} labels for {n} nodes", ys.len()));
                    } else {
                        for i in 0..n {
                            match ys[i] {
                                None if masked(i) => {
                                    v.push(format!("node {i} is in a split but unlabeled"))
                                }
                                Some(y) if y as usize >= self.classes => v.push(format!(
                                    "node {i} has label {y} >= {} classes",
                                    self.classes
                                )),
                                _ => {}
                            }
                        }
                    }
                }
                Labels::Multi(ys) => {
                    if ys.dim() != (n, self.classes) {
                        v.push(format!(
                            "label matrix is {:?}, expected ({n}, {})",
                            ys.dim(),
                            self.classes
                        ));
                    } else if let Some(((i, c), y)) =
                        ys.indexed_iter().find(|(_, &y)| y > 1)
                    {
                        v.push(format!("label cell ({i}, {c}) = {y} is not binary"));
                    }
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }
}
