use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MimError, Result};
use crate::hermite::hermite_value;
use crate::linalg::sym_eigen_desc;
use crate::rng::Streams;

/// Vector-valued labels, `n × dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    dim: usize,
    values: Vec<f64>,
}

impl Labels {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(MimError::DimensionMismatch(format!(
                "{} label values do not split into rows of {dim}",
                values.len()
            )));
        }
        Ok(Labels { dim, values })
    }

    pub fn scalar(y: &[f64]) -> Self {
        Labels {
            dim: 1,
            values: y.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Each coordinate shifted and scaled to zero mean, unit empirical variance.
    /// Constant coordinates are only centred.
    pub fn standardized(&self) -> Labels {
        let n = self.n() as f64;
        let mut out = self.values.clone();
        for j in 0..self.dim {
            let col = || (0..self.n()).map(|i| self.values[i * self.dim + j]);
            let mean = col().sum::<f64>() / n;
            let var = col().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
            for i in 0..self.n() {
                out[i * self.dim + j] = (self.values[i * self.dim + j] - mean) * scale;
            }
        }
        Labels {
            dim: self.dim,
            values: out,
        }
    }

    /// Rows `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Labels {
        Labels {
            dim: self.dim,
            values: self.values[range.start * self.dim..range.end * self.dim].to_vec(),
        }
    }
}

/// One coordinate of an explicit label embedding.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum LabelMap {
    /// `y[index]`.
    Coordinate { index: usize },
    /// `sign(y[index])`.
    Sign { index: usize },
    /// `He_k(y[index]) / √(k!)`.
    Hermite { index: usize, k: usize },
    /// `1(lo < y[index] ≤ hi)`.
    Indicator { index: usize, lo: f64, hi: f64 },
    #[serde(skip)]
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for LabelMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelMap::Coordinate { index } => write!(f, "Coordinate({index})"),
            LabelMap::Sign { index } => write!(f, "Sign({index})"),
            LabelMap::Hermite { index, k } => write!(f, "Hermite({index}, {k})"),
            LabelMap::Indicator { index, lo, hi } => write!(f, "Indicator({index}, {lo}, {hi})"),
            LabelMap::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl LabelMap {
    fn apply(&self, y: &[f64]) -> f64 {
        let at = |i: usize| y.get(i).copied().unwrap_or(0.0);
        match self {
            LabelMap::Coordinate { index } => at(*index),
            LabelMap::Sign { index } => {
                if at(*index) >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            LabelMap::Hermite { index, k } => hermite_value(*k, at(*index)),
            LabelMap::Indicator { index, lo, hi } => {
                let v = at(*index);
                if v > *lo && v <= *hi {
                    1.0
                } else {
                    0.0
                }
            }
            LabelMap::Custom(f) => f(y),
        }
    }
}

/// Positive semidefinite kernel on labels, normalized so `K(y, y) ≤ 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(−‖y − y′‖² / 2σ²)`; `sigma = None` uses the median heuristic.
    Rbf { sigma: Option<f64> },
    /// `exp(−‖y − y′‖ / σ)`.
    Laplacian { sigma: Option<f64> },
    /// `⟨T(y), T(y′)⟩` with `T(y)` rescaled into the unit ball when longer than 1.
    ExplicitEmbedding { maps: Vec<LabelMap> },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Rbf { sigma: None }
    }
}

impl FromStr for KernelSpec {
    type Err = MimError;

    /// `rbf`, `rbf:sigma=<f>`, `laplacian`, `laplacian:sigma=<f>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let sigma = match rest {
            None => None,
            Some(opt) => {
                let value = opt
                    .strip_prefix("sigma=")
                    .ok_or_else(|| MimError::invalid(format!("unknown kernel option '{opt}'")))?;
                let v: f64 = value
                    .parse()
                    .map_err(|_| MimError::invalid(format!("bad sigma '{value}'")))?;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(MimError::invalid("sigma must be positive"));
                }
                Some(v)
            }
        };
        match name {
            "rbf" => Ok(KernelSpec::Rbf { sigma }),
            "laplacian" => Ok(KernelSpec::Laplacian { sigma }),
            other => Err(MimError::invalid(format!("unknown kernel '{other}'"))),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let with_sigma = |f: &mut fmt::Formatter<'_>, name: &str, s: &Option<f64>| match s {
            Some(v) => write!(f, "{name}:sigma={v}"),
            None => write!(f, "{name}"),
        };
        match self {
            KernelSpec::Rbf { sigma } => with_sigma(f, "rbf", sigma),
            KernelSpec::Laplacian { sigma } => with_sigma(f, "laplacian", sigma),
            KernelSpec::ExplicitEmbedding { maps } => write!(f, "explicit:{}", maps.len()),
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Rbf { sigma: Some(s) } | KernelSpec::Laplacian { sigma: Some(s) }
                if !(*s > 0.0) || !s.is_finite() =>
            {
                Err(MimError::invalid("kernel bandwidth must be positive"))
            }
            KernelSpec::ExplicitEmbedding { maps } if maps.is_empty() => {
                Err(MimError::invalid("explicit embedding needs at least one map"))
            }
            _ => Ok(()),
        }
    }

    /// Whether labels are standardized before use (distance kernels only).
    pub fn is_distance_kernel(&self) -> bool {
        !matches!(self, KernelSpec::ExplicitEmbedding { .. })
    }

    /// Fixes the bandwidth, drawing median-heuristic pairs from stream `"bandwidth"`.
    pub fn resolve(&self, labels: &Labels, seed: u64) -> Result<ResolvedKernel> {
        self.validate()?;
        Ok(match self {
            KernelSpec::Rbf { sigma } => ResolvedKernel::Rbf {
                sigma: sigma.unwrap_or_else(|| median_bandwidth(labels, seed)),
            },
            KernelSpec::Laplacian { sigma } => ResolvedKernel::Laplacian {
                sigma: sigma.unwrap_or_else(|| median_bandwidth(labels, seed)),
            },
            KernelSpec::ExplicitEmbedding { maps } => ResolvedKernel::Explicit(maps.clone()),
        })
    }
}

/// Median heuristic: per coordinate, the median nonzero `|y_i − y_j|` over
/// 1000 random pairs; the bandwidth is the mean of these medians (1 if all
/// differences vanish).
pub fn median_bandwidth(labels: &Labels, seed: u64) -> f64 {
    let n = labels.n();
    if n < 2 {
        return 1.0;
    }
    let mut rng = Streams::new(seed).rng("bandwidth", 0);
    let pairs: Vec<(usize, usize)> = (0..1000)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect();
    let mut medians = Vec::new();
    for c in 0..labels.dim() {
        let mut diffs: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| (labels.row(i)[c] - labels.row(j)[c]).abs())
            .filter(|v| *v > 0.0)
            .collect();
        if diffs.is_empty() {
            continue;
        }
        diffs.sort_by(f64::total_cmp);
        let m = diffs.len();
        medians.push(if m % 2 == 1 {
            diffs[m / 2]
        } else {
            0.5 * (diffs[m / 2 - 1] + diffs[m / 2])
        });
    }
    if medians.is_empty() {
        1.0
    } else {
        medians.iter().sum::<f64>() / medians.len() as f64
    }
}

/// A kernel with its bandwidth fixed.
#[derive(Debug, Clone)]
pub enum ResolvedKernel {
    Rbf { sigma: f64 },
    Laplacian { sigma: f64 },
    Explicit(Vec<LabelMap>),
}

impl ResolvedKernel {
    fn embed(maps: &[LabelMap], y: &[f64], out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(maps) {
            *o = m.apply(y);
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            for o in out.iter_mut() {
                *o /= norm;
            }
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let dist2 = || a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
        match self {
            ResolvedKernel::Rbf { sigma } => (-dist2() / (2.0 * sigma * sigma)).exp(),
            ResolvedKernel::Laplacian { sigma } => (-dist2().sqrt() / sigma).exp(),
            ResolvedKernel::Explicit(maps) => {
                let mut ea = vec![0.0; maps.len()];
                let mut eb = vec![0.0; maps.len()];
                Self::embed(maps, a, &mut ea);
                Self::embed(maps, b, &mut eb);
                ea.iter().zip(&eb).map(|(u, v)| u * v).sum()
            }
        }
    }

    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            ResolvedKernel::Rbf { sigma } | ResolvedKernel::Laplacian { sigma } => Some(*sigma),
            ResolvedKernel::Explicit(_) => None,
        }
    }
}

/// How the kernel was expanded into features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Cosine/sine pairs at random frequencies; `K̃(y, y) = 1` exactly.
    RandomFourier,
    /// Exact factorization of the kernel Gram matrix over the distinct label values.
    LabelGram,
    /// The explicit embedding itself.
    Explicit,
}

/// A finite feature map `ψ` with `K(y, y′) ≈ ⟨ψ(y), ψ(y′)⟩`.
#[derive(Debug, Clone)]
pub(crate) enum FeatureMap {
    Fourier { freqs: Vec<f64>, label_dim: usize, scale: f64 },
    Gram { values: Vec<Vec<f64>>, psi: Vec<Vec<f64>> },
    Explicit(Vec<LabelMap>),
}

impl FeatureMap {
    pub(crate) fn kind(&self) -> FeatureKind {
        match self {
            FeatureMap::Fourier { .. } => FeatureKind::RandomFourier,
            FeatureMap::Gram { .. } => FeatureKind::LabelGram,
            FeatureMap::Explicit(_) => FeatureKind::Explicit,
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            FeatureMap::Fourier { freqs, label_dim, .. } => 2 * (freqs.len() / label_dim),
            FeatureMap::Gram { psi, .. } => psi.first().map_or(0, Vec::len),
            FeatureMap::Explicit(maps) => maps.len(),
        }
    }

    /// Writes `ψ(y)` into `out` (length [`Self::len`]).
    pub(crate) fn apply(&self, y: &[f64], out: &mut [f64]) {
        match self {
            FeatureMap::Fourier { freqs, label_dim, scale } => {
                let half = freqs.len() / label_dim;
                for (j, w) in freqs.chunks_exact(*label_dim).enumerate() {
                    let t: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
                    let (s, c) = t.sin_cos();
                    out[j] = scale * c;
                    out[half + j] = scale * s;
                }
            }
            FeatureMap::Gram { values, psi } => {
                let idx = values
                    .binary_search_by(|v| cmp_rows(v, y))
                    .expect("label outside the Gram support");
                out.copy_from_slice(&psi[idx]);
            }
            FeatureMap::Explicit(maps) => ResolvedKernel::embed(maps, y, out),
        }
    }
}

fn cmp_rows(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.total_cmp(v) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Distinct label rows, when there are at most `cap` of them.
fn distinct_rows(labels: &Labels, cap: usize) -> Option<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for i in 0..labels.n() {
        let r = labels.row(i);
        match rows.binary_search_by(|v| cmp_rows(v, r)) {
            Ok(_) => {}
            Err(pos) => {
                if rows.len() == cap {
                    return None;
                }
                rows.insert(pos, r.to_vec());
            }
        }
    }
    Some(rows)
}

/// Largest label alphabet expanded exactly through its Gram matrix.
pub const LABEL_GRAM_MAX_VALUES: usize = 64;

pub(crate) fn feature_map(
    kernel: &ResolvedKernel,
    labels: &Labels,
    n_features: usize,
    allow_label_gram: bool,
    seed: u64,
) -> Result<FeatureMap> {
    if let ResolvedKernel::Explicit(maps) = kernel {
        return Ok(FeatureMap::Explicit(maps.clone()));
    }
    if allow_label_gram {
        if let Some(values) = distinct_rows(labels, LABEL_GRAM_MAX_VALUES) {
            let v = values.len();
            let gram = DMatrix::from_fn(v, v, |a, b| kernel.eval(&values[a], &values[b]));
            let (eig, vecs) = sym_eigen_desc(&gram);
            let keep: Vec<usize> = (0..v).filter(|&j| eig[j] > 1e-12 * eig[0].max(1e-300)).collect();
            let psi = (0..v)
                .map(|a| keep.iter().map(|&j| vecs[(a, j)] * eig[j].sqrt()).collect())
                .collect();
            return Ok(FeatureMap::Gram { values, psi });
        }
    }
    if n_features < 2 {
        return Err(MimError::invalid("need at least 2 random features"));
    }
    let half = n_features / 2;
    let p = labels.dim();
    let mut rng = Streams::new(seed).rng("features", 0);
    let mut freqs = vec![0.0; half * p];
    match kernel {
        ResolvedKernel::Rbf { sigma } => {
            for w in freqs.iter_mut() {
                *w = rng.sample::<f64, _>(StandardNormal) / sigma;
            }
        }
        ResolvedKernel::Laplacian { sigma } => {
            // multivariate Cauchy: Gaussian direction over |N(0,1)|
            for w in freqs.chunks_exact_mut(p) {
                let u: f64 = StandardNormal.sample(&mut rng);
                let scale = 1.0 / (sigma * u.abs().max(1e-300));
                for c in w.iter_mut() {
                    *c = rng.sample::<f64, _>(StandardNormal) * scale;
                }
            }
        }
        ResolvedKernel::Explicit(_) => unreachable!(),
    }
    Ok(FeatureMap::Fourier {
        freqs,
        label_dim: p,
        scale: (1.0 / half as f64).sqrt(),
    })
}
