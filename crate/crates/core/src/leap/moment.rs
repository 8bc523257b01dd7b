use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{pow_u128, MemoryBudget};
use crate::error::{MimError, Result};
use crate::hermite::{tensor_span, DenseTensor, HermiteBuilder};
use crate::models::LinkSpec;
use crate::parallel::ordered_block_sum;
use crate::rng::Streams;
use crate::subspace::Subspace;

/// Monte-Carlo budget for conditional moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeapBudget {
    pub n_mc: usize,
    /// Equal-mass bins per continuous conditioning coordinate.
    pub bins: usize,
    /// Most continuous conditioning coordinates allowed (cells grow as `bins^c`).
    pub max_continuous: usize,
    /// Disjoint sample groups used for the standard error of `λ̂²`.
    pub groups: usize,
    pub seed: u64,
    /// Samples per accumulation block; results are bit-reproducible for a fixed value.
    pub block: usize,
}

impl Default for LeapBudget {
    fn default() -> Self {
        LeapBudget {
            n_mc: 1_000_000,
            bins: 32,
            max_continuous: 3,
            groups: 10,
            seed: 0,
            block: 1 << 14,
        }
    }
}

impl LeapBudget {
    pub fn with_n_mc(mut self, n_mc: usize) -> Self {
        self.n_mc = n_mc;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_mc < 2 * self.groups.max(1) || self.bins == 0 || self.groups < 2 || self.block == 0 {
            return Err(MimError::invalid(
                "leap budget needs n_mc ≥ 2·groups, bins ≥ 1, groups ≥ 2, block ≥ 1",
            ));
        }
        Ok(())
    }
}

/// Draws of `(z, y)` with `z ~ N(0, I_r)`.
#[derive(Debug, Clone)]
pub struct McSample {
    r: usize,
    z: Vec<f64>,
    y: Vec<f64>,
    discrete: bool,
}

impl McSample {
    /// Sample `i` uses stream `("leap-mc", i)` of `budget.seed`.
    pub fn draw(link: &LinkSpec, budget: &LeapBudget) -> Result<Self> {
        link.validate()?;
        budget.validate()?;
        let r = link.r();
        let n = budget.n_mc;
        let base = Streams::new(budget.seed).rng("leap-mc", 0);
        let mut z = vec![0.0; n * r];
        let mut y = vec![0.0; n];
        let chunk = budget.block;
        z.par_chunks_mut(chunk * r)
            .zip(y.par_chunks_mut(chunk))
            .enumerate()
            .for_each(|(b, (zb, yb))| {
                for (j, (row, yi)) in zb.chunks_mut(r).zip(yb.iter_mut()).enumerate() {
                    let mut rng = base.clone();
                    rng.set_stream((b * chunk + j) as u64);
                    for v in row.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                    *yi = link.eval(row, &mut rng);
                }
            });
        Ok(McSample {
            r,
            z,
            y,
            discrete: link.is_discrete(),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.r..(i + 1) * self.r]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// Which conditional expectation is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// `E[h_k(z̄_S) | y, z_S]`.
    Generative,
    /// `E[y h_k(z̄_S) | z_S]`.
    Information,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub n_mc: usize,
    pub n_cells: usize,
    pub kept_cells: usize,
    pub dropped_cells: usize,
    pub dropped_mass: f64,
    pub continuous_coordinates: usize,
}

/// Cell means of `h_k(z̄_S)` (or `y h_k`) and the derived `λ̂²`, `Λ̂`.
#[derive(Debug, Clone)]
pub struct ConditionalMoment {
    pub k: usize,
    pub mode: Conditioning,
    subspace: Subspace,
    complement: DMatrix<f64>,
    /// Probability of each kept cell.
    pub cell_weights: Vec<f64>,
    /// Pooled cell means, `r′^k` entries each, `r′ = dim S^⊥`.
    pub zeta_table: Vec<Vec<f64>>,
    half_means: Vec<(Vec<f64>, Vec<f64>)>,
    /// Split-sample estimate `Σ_c w_c ⟨m¹_c, m²_c⟩`.
    pub lambda_sq: f64,
    /// Standard error from disjoint sample groups.
    pub lambda_sq_se: f64,
    pub diagnostics: CellDiagnostics,
}

impl ConditionalMoment {
    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    /// Orthonormal frame (`r × r′`) of `S^⊥` in which the tables are expressed.
    pub fn complement_frame(&self) -> &DMatrix<f64> {
        &self.complement
    }

    pub fn complement_dim(&self) -> usize {
        self.complement.ncols()
    }

    /// Recomputes `λ̂²` from the stored half-sample means.
    pub fn recompute_lambda_sq(&self) -> f64 {
        self.cell_weights
            .iter()
            .zip(&self.half_means)
            .map(|(w, (a, b))| w * dot(a, b))
            .sum()
    }

    /// `Λ̂ = Σ_c w_c (m¹_c ⊗ m²_c + m²_c ⊗ m¹_c)/2`, an order-`2k` tensor on `S^⊥`.
    pub fn lambda_tensor(&self, budget: &MemoryBudget) -> Result<DenseTensor> {
        let rp = self.complement_dim();
        budget.check_f64s("Lambda tensor", pow_u128(rp, 2 * self.k))?;
        let len = rp.pow(self.k as u32);
        let mut out = vec![0.0; len * len];
        for (w, (a, b)) in self.cell_weights.iter().zip(&self.half_means) {
            let half = 0.5 * w;
            for i in 0..len {
                let (ai, bi) = (half * a[i], half * b[i]);
                if ai == 0.0 && bi == 0.0 {
                    continue;
                }
                let row = &mut out[i * len..(i + 1) * len];
                for j in 0..len {
                    row[j] += ai * b[j] + bi * a[j];
                }
            }
        }
        DenseTensor::new(2 * self.k, rp, out)
    }

    /// `Σ_c w_c sym(M¹_c M²_cᵀ)` with `M` the `r′ × r′^{k−1}` unfolding: the
    /// contraction of `Λ̂` to an `r′ × r′` matrix.
    pub fn lambda_contracted(&self) -> DMatrix<f64> {
        let rp = self.complement_dim();
        let cols = rp.pow(self.k as u32 - 1);
        let mut out = DMatrix::zeros(rp, rp);
        for (w, (a, b)) in self.cell_weights.iter().zip(&self.half_means) {
            for i in 0..rp {
                for j in 0..rp {
                    let ra = &a[i * cols..(i + 1) * cols];
                    let rb = &b[j * cols..(j + 1) * cols];
                    out[(i, j)] += 0.5 * w * dot(ra, rb);
                    out[(j, i)] += 0.5 * w * dot(ra, rb);
                }
            }
        }
        out
    }

    /// `span Λ̂` mapped back into `R^r`, singular values kept above `tol_span` relative.
    pub fn lambda_span(&self, tol_span: f64, budget: &MemoryBudget) -> Result<Subspace> {
        let local = tensor_span(&self.lambda_tensor(budget)?, tol_span)?;
        Ok(local.mapped(&self.complement))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bin index by rank: `⌊rank · bins / n⌋`.
fn quantile_bins(values: &[f64], bins: usize) -> Vec<u32> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0u32; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = (rank * bins / n) as u32;
    }
    out
}

fn exact_classes(values: &[f64]) -> (Vec<u32>, usize) {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| a.to_bits() == b.to_bits());
    let idx = values
        .iter()
        .map(|v| distinct.binary_search_by(|p| p.total_cmp(v)).unwrap() as u32)
        .collect();
    (idx, distinct.len())
}

/// MC sample projected onto `S` / `S^⊥` with cells assigned, reusable across orders.
#[derive(Debug, Clone)]
pub struct ConditionedSample {
    mode: Conditioning,
    subspace: Subspace,
    complement: DMatrix<f64>,
    zbar: Vec<f64>,
    weight: Option<Vec<f64>>,
    cell: Vec<u32>,
    n_cells: usize,
    continuous: usize,
    groups: usize,
    block: usize,
}

impl ConditionedSample {
    pub fn new(
        sample: &McSample,
        subspace: &Subspace,
        mode: Conditioning,
        budget: &LeapBudget,
    ) -> Result<Self> {
        budget.validate()?;
        let r = sample.r;
        if subspace.ambient_dim() != r {
            return Err(MimError::DimensionMismatch(format!(
                "subspace lives in R^{}, model in R^{r}",
                subspace.ambient_dim()
            )));
        }
        if subspace.is_full() {
            return Err(MimError::invalid("S is the whole space; S^⊥ is trivial"));
        }
        let n = sample.n();
        let sb = subspace.basis();
        let complement = subspace.complement().basis().clone();
        let (s, rp) = (sb.ncols(), complement.ncols());
        let mut zs = vec![0.0; n * s];
        let mut zbar = vec![0.0; n * rp];
        for i in 0..n {
            let z = sample.z_row(i);
            for j in 0..s {
                zs[i * s + j] = (0..r).map(|a| sb[(a, j)] * z[a]).sum();
            }
            for j in 0..rp {
                zbar[i * rp + j] = (0..r).map(|a| complement[(a, j)] * z[a]).sum();
            }
        }

        let mut cell = vec![0u32; n];
        let mut n_cells = 1usize;
        let mut continuous = 0usize;
        let mut combine = |idx: Vec<u32>, radix: usize| {
            for (c, v) in cell.iter_mut().zip(idx) {
                *c = *c * radix as u32 + v;
            }
            n_cells *= radix;
        };
        if mode == Conditioning::Generative {
            if sample.discrete {
                let (idx, classes) = exact_classes(&sample.y);
                combine(idx, classes);
            } else {
                continuous += 1;
                combine(quantile_bins(&sample.y, budget.bins), budget.bins);
            }
        }
        for j in 0..s {
            continuous += 1;
            let col: Vec<f64> = (0..n).map(|i| zs[i * s + j]).collect();
            combine(quantile_bins(&col, budget.bins), budget.bins);
        }
        if continuous > budget.max_continuous {
            return Err(MimError::invalid(format!(
                "{continuous} continuous conditioning coordinates exceed the cap of {}",
                budget.max_continuous
            )));
        }
        if n_cells > u32::MAX as usize {
            return Err(MimError::invalid("too many cells"));
        }
        let weight = (mode == Conditioning::Information).then(|| sample.y.clone());
        Ok(ConditionedSample {
            mode,
            subspace: subspace.clone(),
            complement,
            zbar,
            weight,
            cell,
            n_cells,
            continuous,
            groups: budget.groups,
            block: budget.block,
        })
    }

    pub fn moment(&self, k: usize, mem: &MemoryBudget) -> Result<ConditionalMoment> {
        if k == 0 {
            return Err(MimError::invalid("order k must be at least 1"));
        }
        let rp = self.complement.ncols();
        let n = self.cell.len();
        let proto = HermiteBuilder::new(k, rp, mem)?;
        let len = proto.len();
        let rec = len + 1;
        let slots = 2 * self.groups;
        let acc_len = slots * self.n_cells * rec;
        mem.check_f64s("cell accumulators", acc_len as u128 * 2)?;

        let groups = self.groups;
        let n_cells = self.n_cells;
        let acc = ordered_block_sum(n, self.block, acc_len, |range, acc| {
            let mut builder = proto.clone();
            for i in range {
                let h = builder.compute(&self.zbar[i * rp..(i + 1) * rp]);
                let slot = ((i / 2) % groups) * 2 + i % 2;
                let base = (slot * n_cells + self.cell[i] as usize) * rec;
                let w = self.weight.as_ref().map_or(1.0, |y| y[i]);
                let r = &mut acc[base..base + rec];
                for (a, v) in r[..len].iter_mut().zip(h) {
                    *a += w * v;
                }
                r[len] += 1.0;
            }
        });

        let record = |slot: usize, c: usize| &acc[(slot * n_cells + c) * rec..(slot * n_cells + c + 1) * rec];

        // Pooled halves.
        let mut cell_weights = Vec::new();
        let mut zeta_table = Vec::new();
        let mut half_means = Vec::new();
        let mut dropped_cells = 0;
        let mut dropped_count = 0.0;
        let mut occupied = 0;
        for c in 0..n_cells {
            let mut sums = [vec![0.0; len], vec![0.0; len]];
            let mut counts = [0.0; 2];
            for g in 0..groups {
                for h in 0..2 {
                    let r = record(2 * g + h, c);
                    for (s, v) in sums[h].iter_mut().zip(&r[..len]) {
                        *s += v;
                    }
                    counts[h] += r[len];
                }
            }
            let total = counts[0] + counts[1];
            if total == 0.0 {
                continue;
            }
            occupied += 1;
            if counts[0] == 0.0 || counts[1] == 0.0 {
                dropped_cells += 1;
                dropped_count += total;
                continue;
            }
            let pooled: Vec<f64> = sums[0].iter().zip(&sums[1]).map(|(a, b)| (a + b) / total).collect();
            let m1: Vec<f64> = sums[0].iter().map(|v| v / counts[0]).collect();
            let m2: Vec<f64> = sums[1].iter().map(|v| v / counts[1]).collect();
            cell_weights.push(total / n as f64);
            zeta_table.push(pooled);
            half_means.push((m1, m2));
        }
        let dropped_mass = dropped_count / n as f64;
        if dropped_mass > 0.2 {
            return Err(MimError::EmptyCells {
                dropped: dropped_mass,
                limit: 0.2,
            });
        }

        // Per-group estimates for the standard error.
        let mut per_group = Vec::with_capacity(groups);
        for g in 0..groups {
            let mut est = 0.0;
            let mut n_g = 0.0;
            for c in 0..n_cells {
                n_g += record(2 * g, c)[len] + record(2 * g + 1, c)[len];
            }
            for c in 0..n_cells {
                let (a, b) = (record(2 * g, c), record(2 * g + 1, c));
                let (ca, cb) = (a[len], b[len]);
                if ca == 0.0 || cb == 0.0 {
                    continue;
                }
                est += (ca + cb) / n_g * dot(&a[..len], &b[..len]) / (ca * cb);
            }
            per_group.push(est);
        }
        let mean = per_group.iter().sum::<f64>() / groups as f64;
        let var = per_group.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (groups - 1) as f64;

        let mut moment = ConditionalMoment {
            k,
            mode: self.mode,
            subspace: self.subspace.clone(),
            complement: self.complement.clone(),
            cell_weights,
            zeta_table,
            half_means,
            lambda_sq: 0.0,
            lambda_sq_se: (var / groups as f64).sqrt(),
            diagnostics: CellDiagnostics {
                n_mc: n,
                n_cells: occupied,
                kept_cells: occupied - dropped_cells,
                dropped_cells,
                dropped_mass,
                continuous_coordinates: self.continuous,
            },
        };
        moment.lambda_sq = moment.recompute_lambda_sq();
        Ok(moment)
    }
}

/// Draws a fresh MC sample and estimates `ζ_{k,S}` for `link`.
pub fn estimate_zeta(
    link: &LinkSpec,
    k: usize,
    subspace: &Subspace,
    budget: &LeapBudget,
) -> Result<ConditionalMoment> {
    let sample = McSample::draw(link, budget)?;
    ConditionedSample::new(&sample, subspace, Conditioning::Generative, budget)?
        .moment(k, &MemoryBudget::from_env())
}

/// As [`estimate_zeta`] for `ζ̃_{k,S} = E[y h_k(z̄_S) | z_S]`.
pub fn estimate_info_zeta(
    link: &LinkSpec,
    k: usize,
    subspace: &Subspace,
    budget: &LeapBudget,
) -> Result<ConditionalMoment> {
    let sample = McSample::draw(link, budget)?;
    ConditionedSample::new(&sample, subspace, Conditioning::Information, budget)?
        .moment(k, &MemoryBudget::from_env())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LeapBudget {
        LeapBudget::default().with_n_mc(100_000)
    }

    #[test]
    fn identity_link_order_one() {
        let m = estimate_zeta(&LinkSpec::linear(), 1, &Subspace::empty(1), &small()).unwrap();
        assert!((m.lambda_sq - 1.0).abs() < 0.02, "{}", m.lambda_sq);
        assert!((m.lambda_sq - m.recompute_lambda_sq()).abs() < 1e-8);
    }

    #[test]
    fn parity_has_no_first_order_signal() {
        let m = estimate_zeta(&LinkSpec::parity(2, 0.0), 1, &Subspace::empty(2), &small()).unwrap();
        assert!(m.lambda_sq.abs() < 0.01, "{}", m.lambda_sq);
        assert_eq!(m.diagnostics.n_cells, 2);
    }

    #[test]
    fn info_moment_of_identity() {
        let m = estimate_info_zeta(&LinkSpec::linear(), 1, &Subspace::empty(1), &small()).unwrap();
        assert!((m.lambda_sq - 1.0).abs() < 0.03, "{}", m.lambda_sq);
    }

    #[test]
    fn conditioning_on_full_space_rejected() {
        assert!(estimate_zeta(&LinkSpec::linear(), 1, &Subspace::full(1), &small()).is_err());
    }

    #[test]
    fn continuous_cap_enforced() {
        let mut budget = small();
        budget.max_continuous = 1;
        let s = Subspace::span(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        let err = estimate_zeta(&LinkSpec::norm_squared(2), 1, &s, &budget);
        assert!(err.is_err());
    }

    #[test]
    fn lambda_contraction_matches_tensor_trace() {
        let m = estimate_zeta(&LinkSpec::norm_squared(2), 2, &Subspace::empty(2), &small()).unwrap();
        let t = m.lambda_tensor(&MemoryBudget::default()).unwrap();
        let p = m.lambda_contracted();
        // contract the middle indices of the (i, j, i', j') tensor
        let mut trace = 0.0;
        for j in 0..2 {
            trace += t.get(&[0, j, 1, j]);
        }
        assert!((trace - p[(0, 1)]).abs() < 1e-12);
        assert!((p.trace() - m.lambda_sq).abs() < 1e-12);
    }

    #[test]
    fn quantile_bins_are_equal_mass() {
        let v: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64).collect();
        let b = quantile_bins(&v, 4);
        for c in 0..4 {
            assert_eq!(b.iter().filter(|&&x| x == c).count(), 25);
        }
    }
}
