//! Planted multi-index models: link catalog, sampling, and dataset files.

mod dataset;
mod link;
mod planted;

pub use dataset::Dataset;
pub use link::{catalog, Activation, CustomLink, DenseLayer, LinkSpec, PolyTerm};
pub use planted::{plant_subspace, sample, PlantedModel};
