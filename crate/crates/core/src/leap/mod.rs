//! Conditional Hermite moments of a link, estimated by Monte Carlo in the
//! intrinsic space, and the generative and information leap decompositions.
//!
//! `λ̂_k²` uses a split-sample cross estimate (even against odd draws inside
//! each cell), so pure noise gives values centred at zero rather than at a
//! positive bias. A leap is declared at `λ̂_k² > tol`.

mod chisq;
mod decompose;
mod moment;

pub use chisq::{chi_sq_check, chi_sq_direct, ChiSqCheck};
pub use decompose::{
    decompose, info_leap_decomposition, info_leap_of, leap_decomposition, leap_from_sample, leap_of,
    LeapConfig, LeapDecomposition, LeapReport, LeapStep,
};
pub use moment::{
    estimate_info_zeta, estimate_zeta, CellDiagnostics, ConditionalMoment, ConditionedSample, Conditioning,
    LeapBudget, McSample,
};
