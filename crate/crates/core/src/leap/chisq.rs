use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::moment::{Conditioning, ConditionedSample, LeapBudget, McSample};
use crate::budget::MemoryBudget;
use crate::error::{MimError, Result};
use crate::models::LinkSpec;
use crate::quadrature::GaussHermite;
use crate::rng::Streams;
use crate::subspace::Subspace;

const MAX_OUTER: usize = 20_000;

/// Direct `χ²(P ‖ P_S)` against the partial sums `Σ_{k ≤ k_max} λ̂_k²(S)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiSqCheck {
    pub chi_sq: f64,
    /// `λ̂_k²(S)` for `k = 1..=k_max` (unclamped).
    pub lambda_sq: Vec<f64>,
    /// Cumulative sums of `max(λ̂_k², 0)`.
    pub partial_sums: Vec<f64>,
    pub partial_sum: f64,
    pub residual: f64,
}

#[derive(Default)]
struct ClassMoments {
    values: Vec<f64>,
    mass: Vec<f64>,
    second: Vec<f64>,
}

impl ClassMoments {
    fn add(&mut self, probs: &[(f64, f64)], weight: f64) {
        for &(v, p) in probs {
            let idx = match self.values.iter().position(|u| u.to_bits() == v.to_bits()) {
                Some(i) => i,
                None => {
                    self.values.push(v);
                    self.mass.push(0.0);
                    self.second.push(0.0);
                    self.values.len() - 1
                }
            };
            self.mass[idx] += weight * p;
            self.second[idx] += weight * p * p;
        }
    }

    /// `Σ_v E[p_v²] / E[p_v]`.
    fn ratio_sum(&self) -> f64 {
        self.mass
            .iter()
            .zip(&self.second)
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, s)| s / m)
            .sum()
    }
}

/// `χ²(P ‖ P_S)` with `dP_S = dP[z̄_S] dP[z_S, y]`.
///
/// For `S = ∅` the outer expectation over `z` is Monte Carlo with `n_mc`
/// draws. Otherwise `z_S` is drawn (at most 20 000 times) and the inner
/// expectation over `z̄_S` uses a tensor Gauss–Hermite grid.
pub fn chi_sq_direct(link: &LinkSpec, subspace: &Subspace, budget: &LeapBudget) -> Result<f64> {
    if !link.is_discrete() {
        return Err(MimError::NotDiscrete(link.name()));
    }
    let r = link.r();
    let probs = |z: &[f64]| link.class_probabilities(z).expect("discrete link");
    let mut rng = Streams::new(budget.seed).rng("chisq", 0);
    if subspace.is_empty() {
        let mut acc = ClassMoments::default();
        let mut z = vec![0.0; r];
        let w = 1.0 / budget.n_mc as f64;
        for _ in 0..budget.n_mc {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            acc.add(&probs(&z), w);
        }
        return Ok(acc.ratio_sum() - 1.0);
    }
    if subspace.is_full() {
        return Ok(0.0);
    }
    let sb = subspace.basis();
    let cb = subspace.complement().basis().clone();
    let (s, rp) = (sb.ncols(), cb.ncols());
    let nodes = match rp {
        1 => 64,
        2 => 32,
        _ => 16,
    };
    let gh = GaussHermite::new(nodes);
    let n_outer = budget.n_mc.min(MAX_OUTER);
    let mut zs = vec![0.0; s];
    let mut z = vec![0.0; r];
    let mut total = 0.0;
    for _ in 0..n_outer {
        for v in zs.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let mut acc = ClassMoments::default();
        let mut idx = vec![0usize; rp];
        loop {
            let mut w = 1.0;
            for (a, zv) in z.iter_mut().enumerate() {
                *zv = (0..s).map(|j| sb[(a, j)] * zs[j]).sum::<f64>()
                    + (0..rp).map(|j| cb[(a, j)] * gh.nodes[idx[j]]).sum::<f64>();
            }
            for &i in &idx {
                w *= gh.weights[i];
            }
            acc.add(&probs(&z), w);
            let mut pos = 0;
            while pos < rp {
                idx[pos] += 1;
                if idx[pos] < nodes {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == rp {
                break;
            }
        }
        total += acc.ratio_sum();
    }
    Ok(total / n_outer as f64 - 1.0)
}

/// Compares the direct `χ²` with the partial sums of `λ̂_k²(S)`.
pub fn chi_sq_check(
    link: &LinkSpec,
    subspace: &Subspace,
    k_max: usize,
    budget: &LeapBudget,
) -> Result<ChiSqCheck> {
    if !link.is_discrete() {
        return Err(MimError::NotDiscrete(link.name()));
    }
    if k_max == 0 {
        return Err(MimError::invalid("k_max must be at least 1"));
    }
    let chi_sq = chi_sq_direct(link, subspace, budget)?;
    let mut lambda_sq = Vec::with_capacity(k_max);
    if !subspace.is_full() {
        let sample = McSample::draw(link, budget)?;
        let conditioned = ConditionedSample::new(&sample, subspace, Conditioning::Generative, budget)?;
        let mem = MemoryBudget::from_env();
        for k in 1..=k_max {
            lambda_sq.push(conditioned.moment(k, &mem)?.lambda_sq);
        }
    } else {
        lambda_sq.resize(k_max, 0.0);
    }
    let partial_sums: Vec<f64> = lambda_sq
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v.max(0.0);
            Some(*acc)
        })
        .collect();
    let partial_sum = *partial_sums.last().unwrap();
    Ok(ChiSqCheck {
        chi_sq,
        lambda_sq,
        partial_sums,
        partial_sum,
        residual: chi_sq - partial_sum,
    })
}
