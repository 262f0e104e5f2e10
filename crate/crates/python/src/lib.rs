//! Python bindings: genomes, mutation, datasets, training, and the search
//! harness. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use gnnevo::data::{generate_sbm, load_bundle, write_bundle, GraphDataset, SbmParams};
use gnnevo::genome::{
    canonical_parse, canonical_serialize, random_genome, skip_mask_decode, skip_mask_encode, ArchitectureGenome,
    GenomeSpace, Task,
};
use gnnevo::gnn::{evaluate, train as train_genome, Hyperparams, Split, DEFAULT_PARAM_CAP};
use gnnevo::harness::{cmd_report, cmd_search, HarnessError, RunConfig};
use gnnevo::mutation::{mutate, mutation_diff};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn harness_error(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Config(_) | HarnessError::Genome(_) => PyValueError::new_err(e.to_string()),
        HarnessError::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Serializable value to Python objects through JSON.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Python keyword arguments into a serde type; absent keys keep defaults.
fn from_kwargs<T: DeserializeOwned + Default>(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    let Some(kwargs) = kwargs else {
        return Ok(T::default());
    };
    let text: String = kwargs.py().import("json")?.call_method1("dumps", (kwargs,))?.extract()?;
    serde_json::from_str(&text).map_err(value_error)
}

fn space_from(json: Option<&str>) -> PyResult<GenomeSpace> {
    json.map_or(Ok(GenomeSpace::default()), |s| serde_json::from_str(s).map_err(value_error))
}

/// An architecture genome: ordered layers plus the task head.
#[pyclass(name = "Genome", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyGenome {
    inner: ArchitectureGenome,
}

#[pymethods]
impl PyGenome {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: canonical_parse(text).map_err(value_error)?,
        })
    }

    /// Random genome of the given depth from the default (or a JSON) space.
    #[staticmethod]
    #[pyo3(signature = (seed, classes, depth = 2, multi_label = false, space = None))]
    fn random(seed: u64, classes: u32, depth: usize, multi_label: bool, space: Option<&str>) -> PyResult<Self> {
        let task = if multi_label { Task::MultiLabel } else { Task::SingleLabel };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = random_genome(&mut rng, &space_from(space)?, depth, classes, task).map_err(value_error)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        canonical_serialize(&self.inner)
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    #[getter]
    fn output_classes(&self) -> u32 {
        self.inner.output_classes
    }

    #[getter]
    fn layers<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.layers)
    }

    /// Explicit skip sources of 1-based layer `k`, input = 0.
    fn sources(&self, k: usize) -> PyResult<Vec<usize>> {
        self.inner.sources(k).map_err(value_error)
    }

    /// Rule violations against the default (or a JSON) space; empty if valid.
    #[pyo3(signature = (space = None))]
    fn validate(&self, space: Option<&str>) -> PyResult<Vec<String>> {
        Ok(match self.inner.validate(&space_from(space)?) {
            Ok(()) => Vec::new(),
            Err(v) => v.iter().map(ToString::to_string).collect(),
        })
    }

    /// One random mutation. Returns the child and the diff.
    #[pyo3(signature = (seed, max_layers = 10, space = None))]
    fn mutate<'py>(
        &self,
        py: Python<'py>,
        seed: u64,
        max_layers: usize,
        space: Option<&str>,
    ) -> PyResult<(Self, Bound<'py, PyAny>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (child, diff) = mutate(&self.inner, &mut rng, &space_from(space)?, max_layers).map_err(value_error)?;
        Ok((Self { inner: child }, to_py(py, &diff)?))
    }

    /// The single state change from `self` to `other`, or None.
    fn diff<'py>(&self, py: Python<'py>, other: &PyGenome) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &mutation_diff(&self.inner, &other.inner))
    }

    fn __repr__(&self) -> String {
        format!("Genome({})", canonical_serialize(&self.inner))
    }
}

/// A node-classification dataset.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: GraphDataset,
}

#[pymethods]
impl PyDataset {
    /// Stochastic block model; keyword arguments override the defaults
    /// (communities, nodes_per_community, p_in, p_out, feature_dim, signal,
    /// train_frac, val_frac, test_frac, multi_label, seed).
    #[staticmethod]
    #[pyo3(signature = (**params))]
    fn sbm(params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let params: SbmParams = from_kwargs(params)?;
        Ok(Self {
            inner: generate_sbm(&params).map_err(value_error)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_bundle(&path).map_err(|e| PyOSError::new_err(e.to_string()))?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        write_bundle(&self.inner, &path).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.classes
    }

    #[getter]
    fn multi_label(&self) -> bool {
        self.inner.task() == Task::MultiLabel
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.stats())
    }
}

/// Trains a genome and returns train/val/test metrics. Keyword arguments
/// set hyperparameters (lr, weight_decay, dropout, max_epochs, patience).
#[pyfunction]
#[pyo3(signature = (genome, dataset, seed = 0, param_cap = DEFAULT_PARAM_CAP, **hyperparams))]
fn train<'py>(
    py: Python<'py>,
    genome: &PyGenome,
    dataset: &PyDataset,
    seed: u64,
    param_cap: usize,
    hyperparams: Option<&Bound<'_, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let hp: Hyperparams = from_kwargs(hyperparams)?;
    let (g, data) = (&genome.inner, &dataset.inner);
    let metrics = py
        .detach(|| -> Result<_, gnnevo::gnn::GnnError> {
            let rec = train_genome(g, data, &hp, seed, param_cap)?;
            Ok(serde_json::json!({
                "train_metric": evaluate(&rec, data, Split::Train)?,
                "val_metric": rec.val_metric,
                "test_metric": evaluate(&rec, data, Split::Test)?,
                "val_loss": rec.best_val_loss,
                "best_epoch": rec.best_epoch,
                "epochs_run": rec.epochs_run,
                "parameter_count": rec.parameter_count,
            }))
        })
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &metrics)
}

/// Micro-averaged F1 of two equally shaped 0/1 matrices.
#[pyfunction]
fn micro_f1(pred: Vec<Vec<u8>>, labels: Vec<Vec<u8>>) -> PyResult<f64> {
    let to_array = |rows: Vec<Vec<u8>>| -> PyResult<ndarray::Array2<u8>> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PyValueError::new_err("ragged matrix"));
        }
        let n = rows.len();
        ndarray::Array2::from_shape_vec((n, cols), rows.concat()).map_err(value_error)
    };
    gnnevo::gnn::micro_f1(&to_array(pred)?, &to_array(labels)?).map_err(value_error)
}

#[pyfunction(name = "skip_mask_encode")]
fn py_skip_mask_encode(connections: Vec<usize>, k: usize) -> PyResult<u64> {
    skip_mask_encode(&connections, k).map_err(value_error)
}

#[pyfunction(name = "skip_mask_decode")]
fn py_skip_mask_decode(mask: u64, k: usize) -> PyResult<Vec<usize>> {
    skip_mask_decode(mask, k).map_err(value_error)
}

/// Default run configuration as TOML.
#[pyfunction]
fn default_config() -> String {
    RunConfig::default().to_toml()
}

/// Runs a search from a TOML configuration; writes the history and result
/// files into `out_dir` and returns the result document.
#[pyfunction]
#[pyo3(signature = (out_dir, config = ""))]
fn search<'py>(py: Python<'py>, out_dir: PathBuf, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::from_toml(config, &[]).map_err(harness_error)?;
    let doc = py.detach(|| cmd_search(&cfg, &out_dir)).map_err(harness_error)?;
    to_py(py, &doc)
}

/// Summarizes a history log.
#[pyfunction]
fn report(py: Python<'_>, history: PathBuf) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &cmd_report(&history).map_err(harness_error)?)
}

#[pymodule]
fn gnnevo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGenome>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(micro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(py_skip_mask_encode, m)?)?;
    m.add_function(wrap_pyfunction!(py_skip_mask_decode, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}
