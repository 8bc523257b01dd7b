use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{feature_map, FeatureKind, FeatureMap, KernelSpec, Labels, ResolvedKernel};
use crate::budget::{pow_u128, MemoryBudget};
use crate::error::{MimError, Result};
use crate::hermite::HermiteBuilder;
use crate::linalg::{op_norm, sym_eigen_desc, symmetrize};
use crate::models::{sample, Dataset, PlantedModel};
use crate::rng::Streams;
use crate::subspace::Subspace;

/// Which evaluation of the U-statistic to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathChoice {
    /// Exact pairwise for explicit-free kernels with `n ≤ exact_max_n`, features otherwise.
    Auto,
    ExactPairwise,
    FeatureExpansion,
}

/// The evaluation actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "path", rename_all = "snake_case")]
pub enum UStatPath {
    ExactPairwise,
    FeatureExpansion { m: usize, seed: u64, kind: FeatureKind },
}

impl UStatPath {
    pub fn tag(&self) -> &'static str {
        match self {
            UStatPath::ExactPairwise => "exact",
            UStatPath::FeatureExpansion { kind: FeatureKind::RandomFourier, .. } => "rff",
            UStatPath::FeatureExpansion { kind: FeatureKind::LabelGram, .. } => "label-gram",
            UStatPath::FeatureExpansion { kind: FeatureKind::Explicit, .. } => "explicit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UStatOptions {
    pub path: PathChoice,
    /// Random Fourier features (cos/sin pairs count as two).
    pub n_features: usize,
    /// Master seed for feature frequencies and the bandwidth heuristic.
    pub seed: u64,
    /// Expand kernels exactly when labels take at most 64 distinct values.
    pub allow_label_gram: bool,
    /// Samples per accumulation block.
    pub block: usize,
    pub exact_max_n: usize,
    #[serde(skip)]
    pub budget: MemoryBudget,
}

impl Default for UStatOptions {
    fn default() -> Self {
        UStatOptions {
            path: PathChoice::Auto,
            n_features: 2048,
            seed: 0,
            allow_label_gram: true,
            block: 256,
            exact_max_n: 2000,
            budget: MemoryBudget::from_env(),
        }
    }
}

/// `U_n = Σ_{i≠j} K(y_i, y_j) φ_i φ_jᵀ / n(n−1)` and its spectrum.
///
/// When computed on the complement of a conditioning subspace, `matrix` and
/// `eigvecs` are in the coordinates of `frame` (a `d × d′` orthonormal frame).
#[derive(Debug, Clone)]
pub struct UStat {
    pub k: usize,
    pub matrix: DMatrix<f64>,
    /// Descending.
    pub eigvals: Vec<f64>,
    pub eigvecs: DMatrix<f64>,
    pub path: UStatPath,
    pub n_used: usize,
    pub bandwidth: Option<f64>,
    frame: Option<DMatrix<f64>>,
}

impl UStat {
    fn new(
        k: usize,
        matrix: DMatrix<f64>,
        path: UStatPath,
        n_used: usize,
        bandwidth: Option<f64>,
        frame: Option<DMatrix<f64>>,
    ) -> Self {
        let (eigvals, eigvecs) = sym_eigen_desc(&matrix);
        UStat {
            k,
            matrix,
            eigvals,
            eigvecs,
            path,
            n_used,
            bandwidth,
            frame,
        }
    }

    /// Ambient dimension `d`.
    pub fn ambient_dim(&self) -> usize {
        self.frame.as_ref().map_or(self.matrix.nrows(), |f| f.nrows())
    }

    /// Frame of the coordinates `matrix` is written in, if not the standard one.
    pub fn frame(&self) -> Option<&DMatrix<f64>> {
        self.frame.as_ref()
    }

    /// `F U Fᵀ` in ambient coordinates.
    pub fn ambient_matrix(&self) -> DMatrix<f64> {
        match &self.frame {
            None => self.matrix.clone(),
            Some(f) => f * &self.matrix * f.transpose(),
        }
    }

    /// Leading `s` eigenvectors mapped to ambient coordinates (`d × s`).
    pub fn leading_vectors(&self, s: usize) -> DMatrix<f64> {
        let local = self.eigvecs.columns(0, s).into_owned();
        match &self.frame {
            None => local,
            Some(f) => f * local,
        }
    }
}

fn local_dim_pow(dl: usize, k: usize, budget: &MemoryBudget) -> Result<usize> {
    budget.check_f64s("Hermite tensor", pow_u128(dl, k))?;
    Ok(dl.pow(k as u32))
}

/// Raw matrix on row-major inputs `x` (`n × dl`) and prepared labels.
pub(crate) fn ustat_matrix(
    x: &[f64],
    dl: usize,
    labels: &Labels,
    k: usize,
    kernel: &ResolvedKernel,
    opts: &UStatOptions,
) -> Result<(DMatrix<f64>, UStatPath)> {
    let n = labels.n();
    if n < 2 {
        return Err(MimError::invalid("the U-statistic needs n ≥ 2"));
    }
    if k == 0 {
        return Err(MimError::invalid("order k must be at least 1"));
    }
    if x.len() != n * dl {
        return Err(MimError::DimensionMismatch(format!("{} inputs for {n} labels of dimension {dl}", x.len())));
    }
    let explicit = matches!(kernel, ResolvedKernel::Explicit(_));
    let exact = match opts.path {
        PathChoice::ExactPairwise => true,
        PathChoice::FeatureExpansion => false,
        PathChoice::Auto => !explicit && n <= opts.exact_max_n,
    };
    if exact {
        Ok((exact_pairwise(x, dl, labels, k, kernel, opts)?, UStatPath::ExactPairwise))
    } else {
        let fm = feature_map(kernel, labels, opts.n_features, opts.allow_label_gram, opts.seed)?;
        let m = feature_expansion(x, dl, labels, k, &fm, opts)?;
        Ok((
            m,
            UStatPath::FeatureExpansion {
                m: fm.len(),
                seed: opts.seed,
                kind: fm.kind(),
            },
        ))
    }
}

/// Row-major `φ` rows for samples `range`, written into `out` (`len` each).
fn hermite_rows(x: &[f64], dl: usize, proto: &HermiteBuilder, out: &mut [f64]) {
    let len = proto.len();
    out.par_chunks_mut(len * 64)
        .zip(x.par_chunks(dl * 64))
        .for_each(|(ob, xb)| {
            let mut b = proto.clone();
            for (o, xi) in ob.chunks_mut(len).zip(xb.chunks(dl)) {
                o.copy_from_slice(b.compute(xi));
            }
        });
}

fn exact_pairwise(
    x: &[f64],
    dl: usize,
    labels: &Labels,
    k: usize,
    kernel: &ResolvedKernel,
    opts: &UStatOptions,
) -> Result<DMatrix<f64>> {
    let n = labels.n();
    let len = local_dim_pow(dl, k, &opts.budget)?;
    opts.budget.check_f64s(
        "exact pairwise buffers",
        2 * (n as u128) * (len as u128) + (n as u128) * (n as u128),
    )?;
    let cols = len / dl;
    let proto = HermiteBuilder::new(k, dl, &opts.budget)?;

    // Off-diagonal kernel matrix.
    let mut kz = vec![0.0; n * n];
    kz.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            if j != i {
                *v = kernel.eval(labels.row(i), labels.row(j));
            }
        }
    });
    let kz = DMatrix::from_vec(n, n, kz);

    // Φᵀ as a column-major len × n matrix: column i is h_k(x_i).
    let mut phi = vec![0.0; n * len];
    hermite_rows(x, dl, &proto, &mut phi);
    let phi = DMatrix::from_vec(len, n, phi);

    // Gᵀ = Φᵀ K, column i is g_i = Σ_{j≠i} K_ij φ_j.
    let chunk = 64;
    let mut g = vec![0.0; n * len];
    g.par_chunks_mut(len * chunk).enumerate().for_each(|(c, gb)| {
        let j0 = c * chunk;
        let w = gb.len() / len;
        let mut out = DMatrixViewMut::from_slice(gb, len, w);
        out.gemm(1.0, &phi, &kz.columns(j0, w), 0.0);
    });

    // U = Σ_i φ_i g_iᵀ; sample i's block is a cols × dl column-major view of φ_iᵀ.
    let pb = phi.as_slice();
    let partial: Vec<DMatrix<f64>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .map(|idx| {
            let mut acc = DMatrix::zeros(dl, dl);
            for &i in idx {
                let pi = DMatrixView::from_slice(&pb[i * len..(i + 1) * len], cols, dl);
                let gi = DMatrixView::from_slice(&g[i * len..(i + 1) * len], cols, dl);
                acc.gemm_tr(1.0, &pi, &gi, 1.0);
            }
            acc
        })
        .collect();
    let mut u = DMatrix::zeros(dl, dl);
    for p in partial {
        u += p;
    }
    u /= (n * (n - 1)) as f64;
    Ok(symmetrize(&u))
}

/// `(α, β)` with `φφᵀ(x) = α I + β x̂x̂ᵀ`, from `‖φ‖²` and `‖φᵀx̂‖²`.
fn self_outer_coefficients(x: &[f64], h: &[f64]) -> (f64, f64) {
    let dl = x.len();
    let hn2: f64 = h.iter().map(|v| v * v).sum();
    if dl == 1 {
        return (hn2, 0.0);
    }
    let s2: f64 = x.iter().map(|v| v * v).sum();
    if s2 == 0.0 {
        return (hn2 / dl as f64, 0.0);
    }
    let cols = h.len() / dl;
    let inv = 1.0 / s2.sqrt();
    let mut q = 0.0;
    for c in 0..cols {
        let v: f64 = (0..dl).map(|a| x[a] * h[a * cols + c]).sum::<f64>() * inv;
        q += v * v;
    }
    let alpha = (hn2 - q) / (dl - 1) as f64;
    (alpha, q - alpha)
}

fn feature_expansion(
    x: &[f64],
    dl: usize,
    labels: &Labels,
    k: usize,
    fm: &FeatureMap,
    opts: &UStatOptions,
) -> Result<DMatrix<f64>> {
    let n = labels.n();
    let m = fm.len();
    if m == 0 {
        return Ok(DMatrix::zeros(dl, dl));
    }
    let len = local_dim_pow(dl, k, &opts.budget)?;
    let block = opts.block.max(1);
    opts.budget.check_f64s(
        "feature accumulators",
        (len as u128) * (m as u128) + (block as u128) * (len as u128 + m as u128),
    )?;
    let cols = len / dl;
    let proto = HermiteBuilder::new(k, dl, &opts.budget)?;

    // A is len × m column-major: column j is Σ_i ψ_j(y_i) h_k(x_i).
    let mut a = vec![0.0; len * m];
    let mut d_iso = 0.0;
    let mut d_rank = DMatrix::<f64>::zeros(dl, dl);
    let mchunk = (65_536 / len).clamp(1, m);
    let mut phi_buf = vec![0.0; block.min(n) * len];
    let mut psi_buf = vec![0.0; block.min(n) * m];
    let mut coef_buf = vec![(0.0, 0.0); block.min(n)];

    for start in (0..n).step_by(block) {
        let end = (start + block).min(n);
        let b = end - start;
        let xb = &x[start * dl..end * dl];

        // Hermite rows, features and the self-term coefficients, per sample.
        let phi = &mut phi_buf[..b * len];
        let psi_rows = &mut psi_buf[..b * m];
        let coef = &mut coef_buf[..b];
        phi.par_chunks_mut(len)
            .zip(psi_rows.par_chunks_mut(m))
            .zip(coef.par_iter_mut())
            .enumerate()
            .for_each_init(
                || proto.clone(),
                |builder, (i, ((ph, ps), cf))| {
                    let xi = &xb[i * dl..(i + 1) * dl];
                    ph.copy_from_slice(builder.compute(xi));
                    fm.apply(labels.row(start + i), ps);
                    let diag: f64 = ps.iter().map(|v| v * v).sum();
                    let (alpha, beta) = self_outer_coefficients(xi, ph);
                    let s2: f64 = xi.iter().map(|v| v * v).sum();
                    *cf = (diag * alpha, if s2 > 0.0 { diag * beta / s2 } else { 0.0 });
                },
            );
        let phi = DMatrixView::from_slice(phi, len, b);
        let psi = DMatrix::from_row_slice(b, m, psi_rows);

        a.par_chunks_mut(len * mchunk).enumerate().for_each(|(c, ab)| {
            let j0 = c * mchunk;
            let w = ab.len() / len;
            let mut out = DMatrixViewMut::from_slice(ab, len, w);
            out.gemm(1.0, &phi, &psi.columns(j0, w), 1.0);
        });

        let xc = DMatrixView::from_slice(xb, dl, b);
        let mut xs = xc.into_owned();
        for (i, (iso, rank)) in coef.iter().enumerate() {
            d_iso += iso;
            xs.column_mut(i).scale_mut(*rank);
        }
        d_rank.gemm(1.0, &xc, &xs.transpose(), 1.0);
    }

    // Σ_j C_jᵀ C_j with C_j the cols × dl view of column j of A.
    let partial: Vec<DMatrix<f64>> = a
        .par_chunks(len * mchunk)
        .map(|ab| {
            let mut acc = DMatrix::zeros(dl, dl);
            for col in ab.chunks(len) {
                let c = DMatrixView::from_slice(col, cols, dl);
                acc.gemm_tr(1.0, &c, &c, 1.0);
            }
            acc
        })
        .collect();
    let mut u = DMatrix::zeros(dl, dl);
    for p in partial {
        u += p;
    }
    u -= d_rank;
    for i in 0..dl {
        u[(i, i)] -= d_iso;
    }
    u /= (n * (n - 1)) as f64;
    Ok(symmetrize(&u))
}

#[cfg(test)]
pub(crate) fn ustat_for_tests(matrix: DMatrix<f64>, n: usize) -> UStat {
    UStat::new(1, matrix, UStatPath::ExactPairwise, n, None, None)
}

/// Labels as seen by the kernel: standardized for distance kernels.
pub(crate) fn prepare_labels(labels: &Labels, kernel: &KernelSpec) -> Labels {
    if kernel.is_distance_kernel() {
        labels.standardized()
    } else {
        labels.clone()
    }
}

/// `[y, Bᵀx]` with `B` the orthonormal frame of `subspace`.
pub fn augmented_labels(data: &Dataset, subspace: &Subspace) -> Labels {
    let s = subspace.dim();
    let basis = subspace.basis();
    let mut values = Vec::with_capacity(data.n() * (s + 1));
    for i in 0..data.n() {
        let x = data.x_row(i);
        values.push(data.y()[i]);
        for j in 0..s {
            values.push(basis.column(j).iter().zip(x).map(|(b, v)| b * v).sum());
        }
    }
    Labels::new(s + 1, values).expect("consistent shape")
}

/// Inputs in the coordinates of `frame` (`d × d′`): row `i` is `frameᵀ x_i`.
fn project_rows(data: &Dataset, frame: &DMatrix<f64>) -> Vec<f64> {
    let dl = frame.ncols();
    let mut out = vec![0.0; data.n() * dl];
    out.par_chunks_mut(dl).enumerate().for_each(|(i, row)| {
        let x = data.x_row(i);
        for (j, o) in row.iter_mut().enumerate() {
            *o = frame.column(j).iter().zip(x).map(|(f, v)| f * v).sum();
        }
    });
    out
}

/// U-statistic of `data` with scalar labels used as given.
pub fn build_ustat(data: &Dataset, k: usize, kernel: &KernelSpec, opts: &UStatOptions) -> Result<UStat> {
    let labels = Labels::scalar(data.y());
    let resolved = kernel.resolve(&labels, opts.seed)?;
    build_ustat_resolved(data.x(), data.d(), &labels, k, &resolved, opts)
}

/// U-statistic on arbitrary inputs and labels with a fixed kernel.
pub fn build_ustat_resolved(
    x: &[f64],
    d: usize,
    labels: &Labels,
    k: usize,
    kernel: &ResolvedKernel,
    opts: &UStatOptions,
) -> Result<UStat> {
    let (m, path) = ustat_matrix(x, d, labels, k, kernel, opts)?;
    Ok(UStat::new(k, m, path, labels.n(), kernel.bandwidth(), None))
}

/// The step statistic given an accumulated subspace `S`: labels `[y, Π_S x]`
/// (standardized for distance kernels), Hermite features on `S^⊥` coordinates.
pub fn build_conditioned_ustat(
    data: &Dataset,
    subspace: &Subspace,
    k: usize,
    kernel: &KernelSpec,
    opts: &UStatOptions,
) -> Result<UStat> {
    let labels = prepare_labels(&augmented_labels(data, subspace), kernel);
    let resolved = kernel.resolve(&labels, opts.seed)?;
    conditioned_with(data, subspace, k, &labels, &resolved, opts)
}

fn conditioned_with(
    data: &Dataset,
    subspace: &Subspace,
    k: usize,
    labels: &Labels,
    kernel: &ResolvedKernel,
    opts: &UStatOptions,
) -> Result<UStat> {
    if subspace.ambient_dim() != data.d() {
        return Err(MimError::DimensionMismatch(format!(
            "subspace in R^{}, data in R^{}",
            subspace.ambient_dim(),
            data.d()
        )));
    }
    if subspace.is_full() {
        return Err(MimError::invalid("conditioning subspace already spans R^d"));
    }
    if subspace.is_empty() {
        let (m, path) = ustat_matrix(data.x(), data.d(), labels, k, kernel, opts)?;
        return Ok(UStat::new(k, m, path, labels.n(), kernel.bandwidth(), None));
    }
    let frame = subspace.complement().basis().clone();
    let x = project_rows(data, &frame);
    let (m, path) = ustat_matrix(&x, frame.ncols(), labels, k, kernel, opts)?;
    Ok(UStat::new(k, m, path, labels.n(), kernel.bandwidth(), Some(frame)))
}

/// High-`n` estimate of `E U_n`, in ambient coordinates.
#[derive(Debug, Clone)]
pub struct UStatReference {
    pub matrix: DMatrix<f64>,
    /// Jackknife-style standard error in operator norm across batches.
    pub error: f64,
    pub batches: usize,
    pub n_ref: usize,
}

/// Averages the U-statistic over `batches` independent batches totalling `n_ref`
/// samples from `model` (optionally conditioned on `subspace`). The kernel
/// bandwidth is fixed from the first batch.
pub fn expected_ustat_reference(
    model: &PlantedModel,
    k: usize,
    kernel: &KernelSpec,
    subspace: Option<&Subspace>,
    n_ref: usize,
    batches: usize,
    seed: u64,
    opts: &UStatOptions,
) -> Result<UStatReference> {
    if batches < 2 || n_ref < 2 * batches {
        return Err(MimError::invalid("need at least 2 batches of at least 2 samples"));
    }
    let empty = Subspace::empty(model.d());
    let s = subspace.unwrap_or(&empty);
    let streams = Streams::new(seed).child("reference");
    let per = n_ref / batches;
    let mut mats = Vec::with_capacity(batches);
    let mut resolved: Option<ResolvedKernel> = None;
    for g in 0..batches {
        let data = sample(model, per, streams.child(&g.to_string()).master())?;
        let labels = prepare_labels(&augmented_labels(&data, s), kernel);
        if resolved.is_none() {
            resolved = Some(kernel.resolve(&labels, opts.seed)?);
        }
        let u = conditioned_with(&data, s, k, &labels, resolved.as_ref().unwrap(), opts)?;
        mats.push(u.ambient_matrix());
    }
    let d = model.d();
    let mut mean = DMatrix::zeros(d, d);
    for m in &mats {
        mean += m;
    }
    mean /= batches as f64;
    let ss: f64 = mats.iter().map(|m| op_norm(&(m - &mean)).powi(2)).sum();
    let error = (ss / (batches * (batches - 1)) as f64).sqrt();
    Ok(UStatReference {
        matrix: mean,
        error,
        batches,
        n_ref: per * batches,
    })
}
