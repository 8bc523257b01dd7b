//! Gaussian multi-index models.
//!
//! * [`hermite`]: normalized Hermite polynomials and tensors, unfoldings, tensor spans.
//! * [`models`]: link catalog, planted frames, dataset sampling and persistence.
//! * [`leap`]: Monte-Carlo conditional Hermite moments and leap decompositions.
//! * [`estimator`]: the Hermite kernel U-statistic and sequential subspace recovery.
//! * [`harness`]: recovery runs, threshold sweeps, scaling fits and reports.

pub mod budget;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod hermite;
pub mod leap;
pub mod linalg;
pub mod models;
mod parallel;
pub mod quadrature;
pub mod rng;
pub mod subspace;

pub use budget::MemoryBudget;
pub use error::{MimError, Result};
pub use hermite::{hermite_tensor, hermite_value, tensor_span, unfold, HermiteTensor, UnfoldedTensor};
pub use rng::Streams;
pub use subspace::{subspace_distance, Subspace};
