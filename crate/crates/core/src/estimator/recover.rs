use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::ustat::{build_conditioned_ustat, UStat, UStatOptions, UStatPath};
use crate::error::{MimError, Result};
use crate::hermite::MAX_ORDER;
use crate::models::Dataset;
use crate::subspace::Subspace;

/// Facts about the eigenvalue cut made by [`top_subspace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutDiagnostics {
    /// `λ_s == λ_{s+1}`: the cut fell inside a tie, resolved by eigenvector index.
    pub tie_at_boundary: bool,
    /// `λ_s − λ_{s+1}` (or `λ_s` when `s = d`).
    pub gap: f64,
}

/// Span of the `s` leading eigenvectors, with cut diagnostics.
pub fn top_subspace_with_diagnostics(u: &UStat, s: usize) -> Result<(Subspace, CutDiagnostics)> {
    let dl = u.eigvals.len();
    if s == 0 || s > dl {
        return Err(MimError::invalid(format!("need 1 ≤ s ≤ {dl}, got {s}")));
    }
    let next = u.eigvals.get(s).copied();
    let diag = CutDiagnostics {
        tie_at_boundary: next == Some(u.eigvals[s - 1]),
        gap: u.eigvals[s - 1] - next.unwrap_or(0.0),
    };
    Ok((Subspace::span(&u.leading_vectors(s)), diag))
}

/// Span of the `s` leading eigenvectors of `u`, in ambient coordinates.
pub fn top_subspace(u: &UStat, s: usize) -> Result<Subspace> {
    top_subspace_with_diagnostics(u, s).map(|(t, _)| t)
}

/// Output of a single spectral step.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub subspace: Subspace,
    pub ustat: UStat,
    pub cut: CutDiagnostics,
}

/// One spectral step on the whole dataset: labels standardized for distance
/// kernels, top `s` eigenvectors of the order-`k` U-statistic.
pub fn recover_single_leap(
    data: &Dataset,
    k: usize,
    s: usize,
    kernel: &KernelSpec,
    opts: &UStatOptions,
) -> Result<Recovery> {
    recover_conditioned(data, &Subspace::empty(data.d()), k, s, kernel, opts)
}

/// One spectral step given an accumulated subspace.
pub fn recover_conditioned(
    data: &Dataset,
    subspace: &Subspace,
    k: usize,
    s: usize,
    kernel: &KernelSpec,
    opts: &UStatOptions,
) -> Result<Recovery> {
    let ustat = build_conditioned_ustat(data, subspace, k, kernel, opts)?;
    let (found, cut) = top_subspace_with_diagnostics(&ustat, s)?;
    Ok(Recovery {
        subspace: found,
        ustat,
        cut,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub k: usize,
    pub s: usize,
    /// Falls back to the run's kernel when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
}

/// Known leap orders and dimensions; one equal contiguous fold per step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeapSchedule {
    pub steps: Vec<ScheduleStep>,
}

impl LeapSchedule {
    /// `(k, s)` pairs with the default kernel.
    pub fn uniform(steps: &[(usize, usize)]) -> Self {
        LeapSchedule {
            steps: steps
                .iter()
                .map(|&(k, s)| ScheduleStep { k, s, kernel: None })
                .collect(),
        }
    }

    /// Compact tag such as `2x2` or `1x1+1x1+1x1`.
    pub fn tag(&self) -> String {
        self.steps
            .iter()
            .map(|s| format!("{}x{}", s.k, s.s))
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.steps.is_empty() {
            return Err(MimError::invalid("schedule has no steps"));
        }
        if self.steps.iter().any(|s| s.k == 0 || s.k > MAX_ORDER || s.s == 0) {
            return Err(MimError::invalid(format!("schedule needs 1 ≤ k ≤ {MAX_ORDER} and s ≥ 1")));
        }
        let total: usize = self.steps.iter().map(|s| s.s).sum();
        if total > d {
            return Err(MimError::invalid(format!("schedule recovers {total} directions in R^{d}")));
        }
        Ok(())
    }
}

/// Diagnostics of one step of [`iterate_leaps`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub k: usize,
    pub s: usize,
    pub fold: (usize, usize),
    pub kernel: String,
    pub bandwidth: Option<f64>,
    pub path: UStatPath,
    /// Leading eigenvalues (at most `s + 3`).
    pub top_eigvals: Vec<f64>,
    pub cut: CutDiagnostics,
    pub dim_after: usize,
}

#[derive(Debug, Clone)]
pub struct IterationResult {
    pub subspace: Subspace,
    pub steps: Vec<StepReport>,
}

impl IterationResult {
    pub fn fold_boundaries(&self) -> Vec<(usize, usize)> {
        self.steps.iter().map(|s| s.fold).collect()
    }
}

/// Equal contiguous folds of `0..n`.
pub fn folds(n: usize, m: usize) -> Vec<(usize, usize)> {
    (0..m).map(|i| (i * n / m, (i + 1) * n / m)).collect()
}

fn step_report(k: usize, s: usize, fold: (usize, usize), kernel: &KernelSpec, r: &Recovery, dim_after: usize) -> StepReport {
    StepReport {
        k,
        s,
        fold,
        kernel: kernel.to_string(),
        bandwidth: r.ustat.bandwidth,
        path: r.ustat.path,
        top_eigvals: r.ustat.eigvals.iter().take(s + 3).copied().collect(),
        cut: r.cut,
        dim_after,
    }
}

/// Sequential recovery over a known schedule.
///
/// Step `i` runs on fold `i` with labels `[y, Π_S x]` and Hermite features
/// computed on `S^⊥`, where `S` is the span recovered so far.
pub fn iterate_leaps(
    data: &Dataset,
    schedule: &LeapSchedule,
    kernel: &KernelSpec,
    opts: &UStatOptions,
) -> Result<IterationResult> {
    schedule.validate(data.d())?;
    let bounds = folds(data.n(), schedule.steps.len());
    if bounds.iter().any(|(a, b)| b - a < 2) {
        return Err(MimError::invalid("a fold has fewer than 2 samples"));
    }
    let mut current = Subspace::empty(data.d());
    let mut steps = Vec::new();
    for (step, &(a, b)) in schedule.steps.iter().zip(&bounds) {
        let kern = step.kernel.as_ref().unwrap_or(kernel);
        let fold = data.slice(a..b);
        let rec = recover_conditioned(&fold, &current, step.k, step.s, kern, opts)?;
        current = current.union(&rec.subspace)?;
        steps.push(step_report(step.k, step.s, (a, b), kern, &rec, current.dim()));
    }
    Ok(IterationResult {
        subspace: current,
        steps,
    })
}

/// Order and dimension picked by [`adaptive_order`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveChoice {
    pub k: usize,
    pub s: usize,
    /// `bulk_multiplier × median |eigenvalue|` at the chosen order.
    pub threshold: f64,
    pub outliers: Vec<f64>,
}

/// First order `k ≤ k_max` whose U-statistic has eigenvalues above
/// `bulk_multiplier` times the median absolute eigenvalue.
pub fn adaptive_order(
    data: &Dataset,
    k_max: usize,
    s_max: usize,
    kernel: &KernelSpec,
    bulk_multiplier: f64,
    opts: &UStatOptions,
) -> Result<Option<AdaptiveChoice>> {
    adaptive_order_conditioned(data, &Subspace::empty(data.d()), k_max, s_max, kernel, bulk_multiplier, opts)
        .map(|r| r.map(|(c, _)| c))
}

fn adaptive_order_conditioned(
    data: &Dataset,
    subspace: &Subspace,
    k_max: usize,
    s_max: usize,
    kernel: &KernelSpec,
    bulk_multiplier: f64,
    opts: &UStatOptions,
) -> Result<Option<(AdaptiveChoice, Recovery)>> {
    if k_max == 0 || k_max > MAX_ORDER {
        return Err(MimError::invalid(format!("k_max must lie in 1..={MAX_ORDER}")));
    }
    if s_max == 0 || !(bulk_multiplier > 0.0) {
        return Err(MimError::invalid("s_max and bulk_multiplier must be positive"));
    }
    for k in 1..=k_max {
        let ustat = build_conditioned_ustat(data, subspace, k, kernel, opts)?;
        let mut abs: Vec<f64> = ustat.eigvals.iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let m = abs.len();
        let median = if m % 2 == 1 { abs[m / 2] } else { 0.5 * (abs[m / 2 - 1] + abs[m / 2]) };
        let threshold = bulk_multiplier * median;
        let outliers: Vec<f64> = ustat.eigvals.iter().copied().take_while(|&v| v > threshold && v > 0.0).collect();
        if !outliers.is_empty() {
            let s = outliers.len().min(s_max).min(m);
            let (found, cut) = top_subspace_with_diagnostics(&ustat, s)?;
            let choice = AdaptiveChoice {
                k,
                s,
                threshold,
                outliers,
            };
            return Ok(Some((
                choice,
                Recovery {
                    subspace: found,
                    ustat,
                    cut,
                },
            )));
        }
    }
    Ok(None)
}

/// Sequential recovery with orders and dimensions chosen by [`adaptive_order`]
/// on each of `max_steps` folds; stops at the first fold without outliers.
pub fn iterate_adaptive(
    data: &Dataset,
    k_max: usize,
    s_max: usize,
    max_steps: usize,
    kernel: &KernelSpec,
    bulk_multiplier: f64,
    opts: &UStatOptions,
) -> Result<IterationResult> {
    if max_steps == 0 {
        return Err(MimError::invalid("max_steps must be at least 1"));
    }
    let bounds = folds(data.n(), max_steps);
    if bounds.iter().any(|(a, b)| b - a < 2) {
        return Err(MimError::invalid("a fold has fewer than 2 samples"));
    }
    let mut current = Subspace::empty(data.d());
    let mut steps = Vec::new();
    for &(a, b) in &bounds {
        if current.is_full() {
            break;
        }
        let fold = data.slice(a..b);
        let room = data.d() - current.dim();
        match adaptive_order_conditioned(&fold, &current, k_max, s_max.min(room), kernel, bulk_multiplier, opts)? {
            None => break,
            Some((choice, rec)) => {
                current = current.union(&rec.subspace)?;
                steps.push(step_report(choice.k, choice.s, (a, b), kernel, &rec, current.dim()));
            }
        }
    }
    Ok(IterationResult {
        subspace: current,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sample, LinkSpec, PlantedModel};
    use crate::subspace::subspace_distance;
    use nalgebra::DMatrix;

    fn diag_ustat(vals: &[f64]) -> UStat {
        let d = vals.len();
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(vals));
        super::super::ustat::ustat_for_tests(m, d)
    }

    #[test]
    fn top_of_diagonal() {
        let u = diag_ustat(&[3.0, 2.0, 1.0, 0.0, 0.0]);
        let t = top_subspace(&u, 2).unwrap();
        let e12 = Subspace::span(&DMatrix::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 }));
        assert!(subspace_distance(&t, &e12).unwrap() < 1e-12);
        let full = top_subspace(&u, 5).unwrap();
        assert!(subspace_distance(&full, &Subspace::full(5)).unwrap() < 1e-12);
        assert!(top_subspace(&u, 6).is_err());
        assert!(top_subspace(&u, 0).is_err());
        let (_, cut) = top_subspace_with_diagnostics(&u, 4).unwrap();
        assert!(cut.tie_at_boundary);
    }

    #[test]
    fn folds_are_equal_and_contiguous() {
        assert_eq!(folds(10, 3), vec![(0, 3), (3, 6), (6, 10)]);
    }

    #[test]
    fn schedule_validation() {
        assert!(LeapSchedule::uniform(&[(1, 3), (1, 2)]).validate(4).is_err());
        assert!(LeapSchedule::uniform(&[(0, 1)]).validate(4).is_err());
        assert!(LeapSchedule::uniform(&[]).validate(4).is_err());
        assert_eq!(LeapSchedule::uniform(&[(1, 1), (2, 2)]).tag(), "1x1+2x2");
    }

    #[test]
    fn single_step_matches_single_leap() {
        let model = PlantedModel::new(8, LinkSpec::linear(), 2).unwrap();
        let data = sample(&model, 600, 3).unwrap();
        let kernel = KernelSpec::default();
        let opts = UStatOptions::default();
        let a = iterate_leaps(&data, &LeapSchedule::uniform(&[(1, 1)]), &kernel, &opts).unwrap();
        let b = recover_single_leap(&data, 1, 1, &kernel, &opts).unwrap();
        assert_eq!(a.subspace, b.subspace);
    }

    #[test]
    fn tiny_folds_rejected() {
        let model = PlantedModel::new(4, LinkSpec::linear(), 2).unwrap();
        let data = sample(&model, 5, 3).unwrap();
        let sched = LeapSchedule::uniform(&[(1, 1), (1, 1), (1, 1)]);
        assert!(iterate_leaps(&data, &sched, &KernelSpec::default(), &UStatOptions::default()).is_err());
    }
}
