//! Normalized probabilists' Hermite polynomials and Hermite tensors.
//!
//! `h_k(x)` is the order-`k` tensor over `R^d` whose entry at an index tuple
//! with multiplicity vector `β` is `∏_j He_{β_j}(x_j) / √(k!)`. Tensors are
//! stored densely with big-endian linearization: the tuple `(i_1, …, i_k)`
//! (0-based here) sits at `Σ_m i_m · d^{k-m}`. With that layout the
//! `d × d^{k-1}` unfolding is just the same buffer read row-major.

use nalgebra::DMatrix;

use crate::budget::{pow_u128, MemoryBudget};
use crate::error::{MimError, Result};
use crate::linalg::sym_eigen_desc;
use crate::subspace::Subspace;

/// Largest supported Hermite order.
pub const MAX_ORDER: usize = 12;

/// Monic `He_0(u), …, He_{k_max}(u)` by the three-term recurrence.
pub fn monic_table(k_max: usize, u: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(1.0);
    if k_max >= 1 {
        out.push(u);
    }
    for k in 1..k_max {
        let next = u * out[k] - k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

/// `√(k!)`.
pub fn sqrt_factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product::<f64>().sqrt()
}

/// `He_k(u) / √(k!)`.
pub fn hermite_value(k: usize, u: f64) -> f64 {
    monic_table(k, u)[k] / sqrt_factorial(k)
}

/// Dense order-`k` tensor over `R^d` in big-endian layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    entries: Vec<f64>,
}

/// A tensor produced by [`hermite_tensor`].
pub type HermiteTensor = DenseTensor;

impl DenseTensor {
    pub fn new(order: usize, dim: usize, entries: Vec<f64>) -> Result<Self> {
        let expected = pow_u128(dim, order);
        if entries.len() as u128 != expected {
            return Err(MimError::DimensionMismatch(format!(
                "{} entries for an order-{order} tensor in dimension {dim}",
                entries.len()
            )));
        }
        Ok(DenseTensor {
            order,
            dim,
            entries,
        })
    }

    pub fn zeros(order: usize, dim: usize) -> Self {
        DenseTensor {
            order,
            dim,
            entries: vec![0.0; dim.pow(order as u32)],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    /// Big-endian linear position of a 0-based index tuple.
    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0usize, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[self.linear_index(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `d × d^{k-1}` matricization along the first mode, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedTensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl UnfoldedTensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Reshapes back into an order-`order` tensor.
    pub fn fold(&self, order: usize) -> Result<DenseTensor> {
        if order == 0 || pow_u128(self.rows, order - 1) != self.cols as u128 {
            return Err(MimError::DimensionMismatch(format!(
                "cannot fold a {}×{} matrix into order {order}",
                self.rows, self.cols
            )));
        }
        DenseTensor::new(order, self.rows, self.data.clone())
    }
}

/// First-mode unfolding. Requires order ≥ 1.
pub fn unfold(t: &DenseTensor) -> Result<UnfoldedTensor> {
    if t.order == 0 {
        return Err(MimError::invalid("cannot unfold an order-0 tensor"));
    }
    Ok(UnfoldedTensor {
        rows: t.dim,
        cols: t.entries.len() / t.dim.max(1),
        data: t.entries.clone(),
    })
}

/// One entry of `h_k(x)` from the multiplicity-product formula.
pub fn hermite_entry(x: &[f64], idx: &[usize]) -> f64 {
    let k = idx.len();
    let mut counts = vec![0usize; x.len()];
    for &i in idx {
        counts[i] += 1;
    }
    let mut prod = 1.0;
    for (j, &c) in counts.iter().enumerate() {
        if c > 0 {
            prod *= monic_table(c, x[j])[c];
        }
    }
    prod / sqrt_factorial(k)
}

/// Reusable buffers for evaluating `h_k` at many points.
///
/// Uses the Appell recurrence on monic tensors,
/// `He_p[i, rest] = x_i He_{p-1}[rest] − Σ_{m ≥ 2, i_m = i} He_{p-2}[rest \ i_m]`,
/// which costs `O(d^p)` per order.
#[derive(Debug, Clone)]
pub struct HermiteBuilder {
    order: usize,
    dim: usize,
    scale: f64,
    prev2: Vec<f64>,
    prev1: Vec<f64>,
    cur: Vec<f64>,
}

impl HermiteBuilder {
    pub fn new(order: usize, dim: usize, budget: &MemoryBudget) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(MimError::invalid(format!(
                "Hermite order {order} exceeds the maximum {MAX_ORDER}"
            )));
        }
        if dim == 0 {
            return Err(MimError::invalid("dimension must be at least 1"));
        }
        budget.check_f64s("Hermite tensor", pow_u128(dim, order))?;
        Ok(HermiteBuilder {
            order,
            dim,
            scale: 1.0 / sqrt_factorial(order),
            prev2: Vec::new(),
            prev1: Vec::new(),
            cur: Vec::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of tensor entries, `d^k`.
    pub fn len(&self) -> usize {
        self.dim.pow(self.order as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Writes normalized `h_k(x)` into the internal buffer and returns it.
    pub fn compute(&mut self, x: &[f64]) -> &[f64] {
        assert_eq!(x.len(), self.dim, "point has wrong dimension");
        let d = self.dim;
        self.prev2.clear();
        self.prev1.clear();
        self.prev1.push(1.0);
        if self.order == 0 {
            self.cur.clear();
            self.cur.push(1.0);
            return &self.cur;
        }
        for p in 1..=self.order {
            let block = d.pow((p - 1) as u32);
            self.cur.clear();
            self.cur.resize(block * d, 0.0);
            for (i, &xi) in x.iter().enumerate() {
                let dst = &mut self.cur[i * block..(i + 1) * block];
                for (o, &v) in dst.iter_mut().zip(self.prev1.iter()) {
                    *o = xi * v;
                }
            }
            if p >= 2 {
                for m in 2..=p {
                    let hi_count = d.pow((m - 2) as u32);
                    let lo_count = d.pow((p - m) as u32);
                    let hi_stride_dst = d.pow((p - m + 1) as u32);
                    for i in 0..d {
                        let base = i * block + i * lo_count;
                        for hi in 0..hi_count {
                            let dst0 = base + hi * hi_stride_dst;
                            let src0 = hi * lo_count;
                            let dst = &mut self.cur[dst0..dst0 + lo_count];
                            let src = &self.prev2[src0..src0 + lo_count];
                            for (o, &v) in dst.iter_mut().zip(src.iter()) {
                                *o -= v;
                            }
                        }
                    }
                }
            }
            std::mem::swap(&mut self.prev2, &mut self.prev1);
            std::mem::swap(&mut self.prev1, &mut self.cur);
        }
        std::mem::swap(&mut self.prev1, &mut self.cur);
        let scale = self.scale;
        for v in self.cur.iter_mut() {
            *v *= scale;
        }
        &self.cur
    }
}

/// `h_k(x)` under the default memory budget.
pub fn hermite_tensor(k: usize, x: &[f64]) -> Result<HermiteTensor> {
    hermite_tensor_with_budget(k, x, &MemoryBudget::from_env())
}

pub fn hermite_tensor_with_budget(
    k: usize,
    x: &[f64],
    budget: &MemoryBudget,
) -> Result<HermiteTensor> {
    let mut builder = HermiteBuilder::new(k, x.len(), budget)?;
    let entries = builder.compute(x).to_vec();
    Ok(DenseTensor {
        order: k,
        dim: x.len(),
        entries,
    })
}

/// Span of the left singular vectors of the first-mode matricization whose
/// singular values exceed `tol` times the largest one.
pub fn tensor_span(t: &DenseTensor, tol: f64) -> Result<Subspace> {
    if !(tol > 0.0) {
        return Err(MimError::invalid("tensor_span tolerance must be positive"));
    }
    let d = t.dim;
    if t.order == 0 {
        return Ok(Subspace::empty(d));
    }
    let cols = t.entries.len() / d;
    let mut gram = DMatrix::zeros(d, d);
    for a in 0..d {
        let ra = &t.entries[a * cols..(a + 1) * cols];
        for b in 0..=a {
            let rb = &t.entries[b * cols..(b + 1) * cols];
            let dot: f64 = ra.iter().zip(rb).map(|(u, v)| u * v).sum();
            gram[(a, b)] = dot;
            gram[(b, a)] = dot;
        }
    }
    let (vals, vecs) = sym_eigen_desc(&gram);
    let sigma_max = vals.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    if sigma_max <= f64::MIN_POSITIVE {
        return Ok(Subspace::empty(d));
    }
    let keep = vals
        .iter()
        .take_while(|&&v| v.max(0.0).sqrt() > tol * sigma_max)
        .count();
    Subspace::from_orthonormal(vecs.columns(0, keep).into_owned())
}
