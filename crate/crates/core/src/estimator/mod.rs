//! The Hermite kernel U-statistic and spectral recovery of the index space.
//!
//! For inputs `x_i` and labels `y_i`,
//! `U_n = Σ_{i≠j} K(y_i, y_j) φ(x_i) φ(x_j)ᵀ / n(n−1)` with `φ` the `d × d^{k−1}`
//! unfolding of `h_k`. Two evaluations are provided: an exact pairwise sum and
//! a feature expansion `K ≈ Σ_m ψ_m ψ_m` accumulated blockwise, with the
//! diagonal `i = j` terms removed in closed form.

mod io;
mod kernel;
mod recover;
mod ustat;

pub use io::{Provenance, SubspaceRecord};
pub use kernel::{median_bandwidth, FeatureKind, KernelSpec, LabelMap, Labels, ResolvedKernel, LABEL_GRAM_MAX_VALUES};
pub use recover::{
    adaptive_order, folds, iterate_adaptive, iterate_leaps, recover_conditioned, recover_single_leap, top_subspace,
    top_subspace_with_diagnostics, AdaptiveChoice, CutDiagnostics, IterationResult, LeapSchedule, Recovery,
    ScheduleStep, StepReport,
};
pub use ustat::{
    augmented_labels, build_conditioned_ustat, build_ustat, build_ustat_resolved, expected_ustat_reference, PathChoice,
    UStat, UStatOptions, UStatPath, UStatReference,
};
