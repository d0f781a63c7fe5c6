//! Graph convolutional networks whose Laplacian is itself a trainable
//! object: the operator is reparametrized from a free nonnegative adjacency
//! matrix, embedded in an elementwise Chebyshev basis, and updated with
//! hand-derived gradients flowing through the parametrization. Includes the
//! skeleton-sequence preprocessing pipeline, a desk-scale synthetic dataset
//! generator, baselines built on handcrafted and mixed operators, and a
//! finite-difference verification harness.

pub mod cheby;
pub mod eigen;
pub mod error;
pub mod grad;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod skeleton;
pub mod train;

pub use error::{Error, Result};
pub use graph::{AdjacencyParam, BaseKind, LaplacianKind, LaplacianOperator};
