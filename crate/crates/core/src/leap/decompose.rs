use serde::{Deserialize, Serialize};

use super::moment::{CellDiagnostics, Conditioning, ConditionedSample, LeapBudget, McSample};
use crate::budget::MemoryBudget;
use crate::error::{MimError, Result};
use crate::hermite::MAX_ORDER;
use crate::models::LinkSpec;
use crate::subspace::Subspace;

/// Decision thresholds for leap detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeapConfig {
    pub k_max: usize,
    /// A leap is detected at the first `k` with `λ̂_k² > tol`.
    pub tol: f64,
    /// Relative singular-value cutoff for `span Λ̂`.
    pub tol_span: f64,
}

impl Default for LeapConfig {
    fn default() -> Self {
        LeapConfig {
            k_max: 6,
            tol: 1e-2,
            tol_span: 0.05,
        }
    }
}

impl LeapConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.tol_span > 0.0) {
            return Err(MimError::invalid("leap tolerances must be positive"));
        }
        if self.k_max == 0 || self.k_max > MAX_ORDER {
            return Err(MimError::invalid(format!("k_max must lie in 1..={MAX_ORDER}")));
        }
        Ok(())
    }
}

/// One step `S_i → S_{i+1}` of a decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeapStep {
    pub k: usize,
    pub lambda_sq: f64,
    pub lambda_sq_se: f64,
    pub added_dim: usize,
    pub diagnostics: CellDiagnostics,
}

#[derive(Debug, Clone)]
pub struct LeapDecomposition {
    pub mode: Conditioning,
    pub r: usize,
    /// `∅ = S_0 ⊊ S_1 ⊊ … ⊊ S_L = R^r`.
    pub flag: Vec<Subspace>,
    pub leaps: Vec<usize>,
    pub k_star: usize,
    pub steps: Vec<LeapStep>,
    pub config: LeapConfig,
    pub budget: LeapBudget,
}

/// Serialized form of a [`LeapDecomposition`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeapReport {
    pub link: String,
    pub kind: Conditioning,
    pub r: usize,
    /// Row-major `dim × r` orthonormal bases of the flag.
    pub flag_bases: Vec<Vec<f64>>,
    pub leaps: Vec<usize>,
    pub k_star: usize,
    pub lambda_sq: Vec<f64>,
    pub lambda_sq_se: Vec<f64>,
    pub tolerances: LeapConfig,
    pub budget: LeapBudget,
    pub seed: u64,
    pub diagnostics: Vec<CellDiagnostics>,
}

impl LeapDecomposition {
    pub fn report(&self, link: &LinkSpec) -> LeapReport {
        LeapReport {
            link: link.name(),
            kind: self.mode,
            r: self.r,
            flag_bases: self.flag.iter().map(Subspace::basis_rows).collect(),
            leaps: self.leaps.clone(),
            k_star: self.k_star,
            lambda_sq: self.steps.iter().map(|s| s.lambda_sq).collect(),
            lambda_sq_se: self.steps.iter().map(|s| s.lambda_sq_se).collect(),
            tolerances: self.config,
            budget: self.budget,
            seed: self.budget.seed,
            diagnostics: self.steps.iter().map(|s| s.diagnostics).collect(),
        }
    }
}

/// Smallest `k ≤ k_max` with `λ̂_k²(S) > tol`, with its moment.
pub fn leap_from_sample(
    sample: &McSample,
    subspace: &Subspace,
    mode: Conditioning,
    config: &LeapConfig,
    budget: &LeapBudget,
) -> Result<Option<super::ConditionalMoment>> {
    config.validate()?;
    if subspace.is_full() {
        return Ok(None);
    }
    let mem = MemoryBudget::from_env();
    let conditioned = ConditionedSample::new(sample, subspace, mode, budget)?;
    for k in 1..=config.k_max {
        let m = conditioned.moment(k, &mem)?;
        if m.lambda_sq > config.tol {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// Generative leap of `link` from `S`: smallest `k ≤ k_max` with `λ̂_k²(S) > tol`.
pub fn leap_of(
    link: &LinkSpec,
    subspace: &Subspace,
    config: &LeapConfig,
    budget: &LeapBudget,
) -> Result<Option<usize>> {
    config.validate()?;
    let sample = McSample::draw(link, budget)?;
    Ok(leap_from_sample(&sample, subspace, Conditioning::Generative, config, budget)?.map(|m| m.k))
}

/// Information leap of `link` from `S`, using `ζ̃`.
pub fn info_leap_of(
    link: &LinkSpec,
    subspace: &Subspace,
    config: &LeapConfig,
    budget: &LeapBudget,
) -> Result<Option<usize>> {
    config.validate()?;
    let sample = McSample::draw(link, budget)?;
    Ok(leap_from_sample(&sample, subspace, Conditioning::Information, config, budget)?.map(|m| m.k))
}

/// Runs the flag recursion on one shared MC sample.
pub fn decompose(
    sample: &McSample,
    mode: Conditioning,
    config: &LeapConfig,
    budget: &LeapBudget,
) -> Result<LeapDecomposition> {
    config.validate()?;
    let r = sample.r();
    let mem = MemoryBudget::from_env();
    let mut current = Subspace::empty(r);
    let mut flag = vec![current.clone()];
    let mut steps = Vec::new();
    while !current.is_full() {
        if steps.len() >= r {
            return Err(MimError::NonTermination(r));
        }
        let moment = leap_from_sample(sample, &current, mode, config, budget)?.ok_or(MimError::NoLeap {
            dim: current.dim(),
            k_max: config.k_max,
        })?;
        let span = moment.lambda_span(config.tol_span, &mem)?;
        let next = current.union(&span)?;
        if next.dim() <= current.dim() {
            return Err(MimError::NonTermination(steps.len() + 1));
        }
        steps.push(LeapStep {
            k: moment.k,
            lambda_sq: moment.lambda_sq,
            lambda_sq_se: moment.lambda_sq_se,
            added_dim: next.dim() - current.dim(),
            diagnostics: moment.diagnostics,
        });
        flag.push(next.clone());
        current = next;
    }
    let leaps: Vec<usize> = steps.iter().map(|s| s.k).collect();
    Ok(LeapDecomposition {
        mode,
        r,
        flag,
        k_star: leaps.iter().copied().max().unwrap_or(0),
        leaps,
        steps,
        config: *config,
        budget: *budget,
    })
}

/// Generative leap decomposition of `link`.
pub fn leap_decomposition(
    link: &LinkSpec,
    config: &LeapConfig,
    budget: &LeapBudget,
) -> Result<LeapDecomposition> {
    let sample = McSample::draw(link, budget)?;
    decompose(&sample, Conditioning::Generative, config, budget)
}

/// Information leap decomposition of `link`; its `k_star` is `l*`.
pub fn info_leap_decomposition(
    link: &LinkSpec,
    config: &LeapConfig,
    budget: &LeapBudget,
) -> Result<LeapDecomposition> {
    let sample = McSample::draw(link, budget)?;
    decompose(&sample, Conditioning::Information, config, budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget() -> LeapBudget {
        LeapBudget::default().with_n_mc(200_000)
    }

    #[test]
    fn identity_link_has_leap_one() {
        let cfg = LeapConfig::default();
        assert_eq!(leap_of(&LinkSpec::linear(), &Subspace::empty(1), &cfg, &budget()).unwrap(), Some(1));
        assert_eq!(info_leap_of(&LinkSpec::linear(), &Subspace::empty(1), &cfg, &budget()).unwrap(), Some(1));
    }

    #[test]
    fn parity_two_decomposes_in_one_leap() {
        let d = leap_decomposition(&LinkSpec::parity(2, 0.0), &LeapConfig::default(), &budget()).unwrap();
        assert_eq!(d.leaps, vec![2]);
        assert_eq!(d.k_star, 2);
        assert_eq!(d.flag.len(), 2);
        assert!(d.flag[1].is_full());
    }

    #[test]
    fn pure_noise_has_no_leap() {
        let link = LinkSpec::Noise { r: 1, discrete: false };
        let got = leap_of(&link, &Subspace::empty(1), &LeapConfig::default(), &budget()).unwrap();
        assert_eq!(got, None);
        assert!(matches!(
            leap_decomposition(&link, &LeapConfig::default(), &budget()),
            Err(MimError::NoLeap { .. })
        ));
    }

    #[test]
    fn config_is_validated() {
        let bad = LeapConfig { k_max: 13, ..LeapConfig::default() };
        assert!(leap_of(&LinkSpec::linear(), &Subspace::empty(1), &bad, &budget()).is_err());
        let bad = LeapConfig { tol: 0.0, ..LeapConfig::default() };
        assert!(leap_of(&LinkSpec::linear(), &Subspace::empty(1), &bad, &budget()).is_err());
    }

    #[test]
    fn report_serializes() {
        let link = LinkSpec::parity(2, 0.0);
        let d = leap_decomposition(&link, &LeapConfig::default(), &budget()).unwrap();
        let json = serde_json::to_value(d.report(&link)).unwrap();
        assert_eq!(json["k_star"], 2);
        assert_eq!(json["flag_bases"].as_array().unwrap().len(), 2);
        assert_eq!(json["tolerances"]["tol"], 0.01);
    }
}
