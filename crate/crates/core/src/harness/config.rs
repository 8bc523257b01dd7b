use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::budget::{pow_u128, MemoryBudget};
use crate::error::{MimError, Result};
use crate::estimator::{KernelSpec, LeapSchedule, PathChoice, UStatOptions};
use crate::hermite::MAX_ORDER;
use crate::models::LinkSpec;

/// Supported config schema version.
pub const CONFIG_VERSION: u32 = 1;

/// The planted model family: one link, several ambient dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub link: String,
    pub r: usize,
    pub d: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    /// Generative leap exponent the experiment assumes; reported, never inferred.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_star: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub k_max: usize,
    /// Directions per step; defaults to the model's `r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<usize>,
    #[serde(default = "one")]
    pub max_steps: usize,
    #[serde(default = "ten")]
    pub bulk_multiplier: f64,
}

fn one() -> usize {
    1
}

fn ten() -> f64 {
    10.0
}

fn default_kernel() -> String {
    "rbf".into()
}

fn default_features() -> usize {
    2048
}

/// Either a known schedule or adaptive order selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<LeapSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveConfig>,
    /// `rbf`, `rbf:sigma=<f>`, `laplacian` or `laplacian:sigma=<f>`.
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_path")]
    pub path: PathChoice,
    #[serde(default = "default_features")]
    pub n_features: usize,
}

fn default_path() -> PathChoice {
    PathChoice::Auto
}

impl EstimatorConfig {
    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        self.kernel.parse()
    }

    /// Schedule tag, or `adaptive:kmax=<k>`.
    pub fn tag(&self) -> String {
        match (&self.schedule, &self.adaptive) {
            (Some(s), _) => s.tag(),
            (None, Some(a)) => format!("adaptive:kmax={}", a.k_max),
            (None, None) => String::new(),
        }
    }

    /// Largest Hermite order the estimator may build.
    pub fn max_order(&self) -> usize {
        match (&self.schedule, &self.adaptive) {
            (Some(s), _) => s.steps.iter().map(|s| s.k).max().unwrap_or(0),
            (None, Some(a)) => a.k_max,
            (None, None) => 0,
        }
    }

    pub fn ustat_options(&self, seed: u64, budget: MemoryBudget) -> UStatOptions {
        UStatOptions {
            path: self.path,
            n_features: self.n_features,
            seed,
            budget,
            ..UStatOptions::default()
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.kernel_spec()?.validate()?;
        match (&self.schedule, &self.adaptive) {
            (Some(s), None) => s.validate(d),
            (None, Some(a)) => {
                if a.k_max == 0 || a.k_max > MAX_ORDER || a.max_steps == 0 || a.s_max == Some(0) {
                    return Err(MimError::invalid(format!(
                        "adaptive needs 1 ≤ k_max ≤ {MAX_ORDER}, max_steps ≥ 1 and s_max ≥ 1"
                    )));
                }
                if !(a.bulk_multiplier > 0.0) {
                    return Err(MimError::invalid("bulk_multiplier must be positive"));
                }
                Ok(())
            }
            _ => Err(MimError::invalid("estimator needs exactly one of schedule or adaptive")),
        }
    }
}

/// A geometric search for the smallest `n` reaching the target error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSearch {
    pub n_min: usize,
    pub n_max: usize,
}

impl ThresholdSearch {
    /// The search grid `round(n_min · √2^j) ≤ n_max`.
    pub fn grid(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for j in 0.. {
            let n = (self.n_min as f64 * std::f64::consts::SQRT_2.powi(j)).round() as usize;
            if n > self.n_max {
                break;
            }
            if out.last() != Some(&n) {
                out.push(n);
            }
        }
        out
    }
}

/// Either fixed sample sizes or a threshold search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<ThresholdSearch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_records")]
    pub records: String,
    #[serde(default = "default_thresholds")]
    pub thresholds: String,
}

fn default_records() -> String {
    "records.jsonl".into()
}

fn default_thresholds() -> String {
    "thresholds.json".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            records: default_records(),
            thresholds: default_thresholds(),
        }
    }
}

/// A sweep over dimensions, sample sizes and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub v: u32,
    pub model: ModelConfig,
    pub estimator: EstimatorConfig,
    pub grid: GridConfig,
    pub target_error: f64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// One `(d, n, seed)` cell of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSpec {
    pub link: String,
    pub r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_star: Option<usize>,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub estimator: EstimatorConfig,
}

impl RunSpec {
    pub fn link_spec(&self) -> Result<LinkSpec> {
        LinkSpec::from_name(&self.link, self.r, self.noise)
    }
}

impl ExperimentConfig {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MimError::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn instance(&self, d: usize, n: usize, seed: u64) -> RunSpec {
        RunSpec {
            link: self.model.link.clone(),
            r: self.model.r,
            noise: self.model.noise,
            k_star: self.model.k_star,
            d,
            n,
            seed,
            estimator: self.estimator.clone(),
        }
    }

    /// Checks the version, grids, target and the memory footprint of every `(d, k)`.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(&MemoryBudget::from_env())
    }

    pub fn validate_with(&self, budget: &MemoryBudget) -> Result<()> {
        if self.v != CONFIG_VERSION {
            return Err(MimError::VersionMismatch(format!(
                "config version {} (supported: {CONFIG_VERSION})",
                self.v
            )));
        }
        LinkSpec::from_name(&self.model.link, self.model.r, self.model.noise)?;
        if self.model.d.is_empty() || self.seeds.is_empty() {
            return Err(MimError::InsufficientGrid("d list and seeds must be nonempty".into()));
        }
        match (&self.grid.n.is_empty(), &self.grid.search) {
            (false, None) => {
                if self.grid.n.iter().any(|&n| n < 2) {
                    return Err(MimError::invalid("grid sample sizes must be at least 2"));
                }
            }
            (true, Some(s)) => {
                if s.n_min < 2 || s.n_max < s.n_min {
                    return Err(MimError::invalid("threshold search needs 2 ≤ n_min ≤ n_max"));
                }
            }
            _ => return Err(MimError::InsufficientGrid("grid needs exactly one of n or search".into())),
        }
        if !(self.target_error > 0.0 && self.target_error < 1.0) {
            return Err(MimError::invalid("target_error must lie in (0, 1)"));
        }
        let k = self.estimator.max_order();
        for &d in &self.model.d {
            if d < self.model.r {
                return Err(MimError::invalid(format!("d = {d} is below r = {}", self.model.r)));
            }
            self.estimator.validate(d)?;
            let len = pow_u128(d, k);
            let block = UStatOptions::default().block as u128;
            budget.check_f64s(
                &format!("feature accumulators at d = {d}, k = {k}"),
                len.saturating_mul(self.estimator.n_features as u128 + block),
            )?;
        }
        Ok(())
    }
}
