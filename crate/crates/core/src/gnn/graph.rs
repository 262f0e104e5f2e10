use std::sync::OnceLock;

use super::GnnError;

/// Undirected graph stored as a symmetrized, de-duplicated directed edge
/// list without self-loops. Self-loops are added once when the message
/// passing structure is built.
#[derive(Debug)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighborhoods: OnceLock<Neighborhoods>,
}

impl Clone for Graph {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            edges: self.edges.clone(),
            neighborhoods: OnceLock::new(),
        }
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.edges == other.edges
    }
}

/// Incoming edges grouped by destination (CSR), self-loops included.
#[derive(Debug, Clone)]
pub struct Neighborhoods {
    /// `offsets[i]..offsets[i + 1]` indexes the edges into node `i`.
    pub offsets: Vec<usize>,
    /// Source node of each edge, ascending within a destination.
    pub sources: Vec<usize>,
    /// Destination node of each edge.
    pub targets: Vec<usize>,
}

impl Neighborhoods {
    pub fn edge_count(&self) -> usize {
        self.sources.len()
    }

    /// Degree of `i` in `A + I`.
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub offsets: Vec<usize>,
    pub columns: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = self.offsets[i]..self.offsets[i + 1];
        self.columns[row.clone()]
            .binary_search(&j)
            .map(|pos| self.values[row.start + pos])
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut dense = ndarray::Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for e in self.offsets[i]..self.offsets[i + 1] {
                dense[[i, self.columns[e]]] = self.values[e];
            }
        }
        dense
    }
}

impl Graph {
    /// Builds a graph from undirected edges. Both directions are stored,
    /// duplicates and self-loops are dropped.
    pub fn from_undirected(n: usize, edges: &[(usize, usize)]) -> Result<Self, GnnError> {
        let mut directed = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GnnError::Config(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u != v {
                directed.push((u, v));
                directed.push((v, u));
            }
        }
        directed.sort_unstable();
        directed.dedup();
        Ok(Self {
            n,
            edges: directed,
            neighborhoods: OnceLock::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Directed edges, both orientations, no self-loops.
    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Number of distinct undirected edges.
    pub fn undirected_edge_count(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn neighborhoods(&self) -> &Neighborhoods {
        self.neighborhoods.get_or_init(|| {
            let mut incoming: Vec<Vec<usize>> = (0..self.n).map(|i| vec![i]).collect();
            for &(u, v) in &self.edges {
                incoming[v].push(u);
            }
            let mut offsets = Vec::with_capacity(self.n + 1);
            let mut sources = Vec::with_capacity(self.edges.len() + self.n);
            let mut targets = Vec::with_capacity(self.edges.len() + self.n);
            offsets.push(0);
            for (i, mut srcs) in incoming.into_iter().enumerate() {
                srcs.sort_unstable();
                targets.extend(std::iter::repeat_n(i, srcs.len()));
                sources.extend(srcs);
                offsets.push(sources.len());
            }
            Neighborhoods {
                offsets,
                sources,
                targets,
            }
        })
    }
}

/// Renormalized adjacency `D^-1/2 (A + I) D^-1/2`, with `D` the degree
/// matrix of `A + I`.
pub fn normalized_adjacency(graph: &Graph) -> SparseMatrix {
    let nb = graph.neighborhoods();
    let values = nb
        .sources
        .iter()
        .zip(&nb.targets)
        .map(|(&j, &i)| 1.0 / ((nb.degree(i) * nb.degree(j)) as f64).sqrt())
        .collect();
    SparseMatrix {
        n: graph.node_count(),
        offsets: nb.offsets.clone(),
        columns: nb.sources.clone(),
        values,
    }
}
