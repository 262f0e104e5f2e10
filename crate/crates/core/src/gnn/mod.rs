//! Message-passing engine: graphs, models built from genomes, forward and
//! reverse passes, losses, metrics and training.

pub mod activation;
pub mod aggregate;
pub mod attention;
pub mod forward;
pub mod graph;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod tensor_io;
pub mod train;

use thiserror::Error;

use crate::genome::GenomeError;

pub use forward::{backward, forward, ForwardOutput, LayerActivations, Mode};
pub use graph::{normalized_adjacency, Graph, SparseMatrix};
pub use loss::{loss, loss_and_grad, probabilities, softmax};
pub use metrics::{micro_f1, split_metric};
pub use model::{build_model, parameter_count, LayerParams, Model};
pub use train::{evaluate, train, Hyperparams, Split, TrainedModelRecord, DEFAULT_PARAM_CAP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model needs {parameters} parameters, cap is {cap}")]
    Capacity { parameters: usize, cap: usize },
    #[error("non-finite values in layer {layer}")]
    Numeric { layer: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Genome(#[from] GenomeError),
}
