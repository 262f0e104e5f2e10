//! Aging-evolution architecture search for graph neural networks.
//!
//! Architectures are encoded as [`genome::ArchitectureGenome`]s whose layers
//! carry integer skip-connection masks. The [`evolution`] controller grows
//! and mutates them, the [`gnn`] engine trains each candidate with full-batch
//! Adam, and [`hyperopt`] tunes training hyperparameters with a
//! Tree-structured Parzen Estimator.

pub mod genome;
pub mod mutation;
pub mod data;
pub mod gnn;
pub mod hyperopt;
pub mod evolution;
pub mod harness;
