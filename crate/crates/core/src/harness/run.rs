use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunSpec;
use crate::budget::MemoryBudget;
use crate::error::Result;
use crate::estimator::{iterate_adaptive, iterate_leaps, IterationResult, StepReport};
use crate::models::{sample, PlantedModel};
use crate::subspace::subspace_distance;

/// Outcome of one recovery run.
///
/// `error` is absent when the run failed; `failure` then holds the message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub link: String,
    pub r: usize,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub k_star_declared: Option<usize>,
    pub schedule: String,
    pub kernel: String,
    pub error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub runtime_ms: u64,
    pub path: String,
    #[serde(default)]
    pub steps: Vec<StepReport>,
    #[serde(default)]
    pub recovered_dim: usize,
}

impl RunRecord {
    fn blank(spec: &RunSpec) -> Self {
        RunRecord {
            link: spec.link.clone(),
            r: spec.r,
            d: spec.d,
            n: spec.n,
            seed: spec.seed,
            k_star_declared: spec.k_star,
            schedule: spec.estimator.tag(),
            kernel: spec.estimator.kernel.clone(),
            error: None,
            failure: None,
            runtime_ms: 0,
            path: String::new(),
            steps: Vec::new(),
            recovered_dim: 0,
        }
    }

    /// A record for a run that raised `err`.
    pub fn failed(spec: &RunSpec, err: &crate::MimError, runtime_ms: u64) -> Self {
        RunRecord {
            failure: Some(err.to_string()),
            runtime_ms,
            ..RunRecord::blank(spec)
        }
    }

    /// Error used for threshold decisions: failed runs count as no alignment.
    pub fn effective_error(&self) -> f64 {
        self.error.unwrap_or(1.0)
    }

    /// Equal apart from wall time.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        let mut a = self.clone();
        a.runtime_ms = other.runtime_ms;
        a == *other
    }
}

fn estimate(spec: &RunSpec, model: &PlantedModel, budget: MemoryBudget) -> Result<IterationResult> {
    let data = sample(model, spec.n, spec.seed)?;
    let kernel = spec.estimator.kernel_spec()?;
    let opts = spec.estimator.ustat_options(spec.seed, budget);
    match (&spec.estimator.schedule, &spec.estimator.adaptive) {
        (Some(schedule), _) => iterate_leaps(&data, schedule, &kernel, &opts),
        (None, Some(a)) => iterate_adaptive(
            &data,
            a.k_max,
            a.s_max.unwrap_or(spec.r),
            a.max_steps,
            &kernel,
            a.bulk_multiplier,
            &opts,
        ),
        (None, None) => Err(crate::MimError::invalid("estimator needs a schedule or adaptive settings")),
    }
}

/// Plants a model from `spec.seed`, samples `n` points, runs the estimator and
/// measures the distance to the planted index space.
pub fn run_recovery(spec: &RunSpec) -> Result<RunRecord> {
    run_recovery_with(spec, MemoryBudget::from_env())
}

pub fn run_recovery_with(spec: &RunSpec, budget: MemoryBudget) -> Result<RunRecord> {
    let start = Instant::now();
    spec.estimator.validate(spec.d)?;
    let model = PlantedModel::new(spec.d, spec.link_spec()?, spec.seed)?;
    let result = estimate(spec, &model, budget)?;
    let error = subspace_distance(&result.subspace, &model.index_space())?;
    let path = result
        .steps
        .iter()
        .map(|s| s.path.tag())
        .collect::<Vec<_>>()
        .join("+");
    Ok(RunRecord {
        error: Some(error),
        runtime_ms: start.elapsed().as_millis() as u64,
        path,
        recovered_dim: result.subspace.dim(),
        steps: result.steps,
        ..RunRecord::blank(spec)
    })
}

/// [`run_recovery`], turning errors into failed records.
pub fn run_or_record(spec: &RunSpec, budget: MemoryBudget) -> RunRecord {
    let start = Instant::now();
    run_recovery_with(spec, budget).unwrap_or_else(|e| RunRecord::failed(spec, &e, start.elapsed().as_millis() as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::LeapSchedule;
    use crate::harness::config::EstimatorConfig;
    use crate::estimator::PathChoice;

    fn spec(n: usize, seed: u64) -> RunSpec {
        RunSpec {
            link: "parity".into(),
            r: 2,
            noise: None,
            k_star: Some(2),
            d: 12,
            n,
            seed,
            estimator: EstimatorConfig {
                schedule: Some(LeapSchedule::uniform(&[(2, 2)])),
                adaptive: None,
                kernel: "rbf".into(),
                path: PathChoice::Auto,
                n_features: 2048,
            },
        }
    }

    #[test]
    fn recovery_is_reproducible() {
        let a = run_recovery(&spec(6000, 4)).unwrap();
        let b = run_recovery(&spec(6000, 4)).unwrap();
        assert!(a.same_outcome(&b));
        assert!(a.error.unwrap() < 0.3, "{a:?}");
        assert_eq!(a.path, "label-gram");
        assert_eq!(a.recovered_dim, 2);
    }

    #[test]
    fn tiny_sample_does_not_align() {
        let rec = run_recovery(&spec(100, 1)).unwrap();
        assert!(rec.error.unwrap() >= 0.8, "{rec:?}");
    }

    #[test]
    fn failures_are_recorded() {
        let mut s = spec(100, 1);
        s.link = "unknown".into();
        let rec = run_or_record(&s, MemoryBudget::default());
        assert!(rec.error.is_none());
        assert!(rec.failure.is_some());
        assert_eq!(rec.effective_error(), 1.0);
    }
}
