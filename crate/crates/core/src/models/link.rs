use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MimError, Result};
use crate::hermite::hermite_value;

/// Scalar activation of a shallow network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sign,
    Tanh,
    /// Normalized Hermite polynomial `He_k / √(k!)`.
    He(usize),
}

impl Activation {
    pub fn apply(&self, u: f64) -> f64 {
        match *self {
            Activation::Relu => u.max(0.0),
            Activation::Sign => sign(u),
            Activation::Tanh => u.tanh(),
            Activation::He(k) => hermite_value(k, u),
        }
    }

    fn name(&self) -> String {
        match self {
            Activation::Relu => "relu".into(),
            Activation::Sign => "sign".into(),
            Activation::Tanh => "tanh".into(),
            Activation::He(k) => format!("he{k}"),
        }
    }
}

/// A monomial `coef · ∏_j z_j^{exponents[j]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coef: f64,
    pub exponents: Vec<u32>,
}

/// Affine layer `out = W · in + b`, `W` stored as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// A user-supplied deterministic link.
#[derive(Clone)]
pub struct CustomLink {
    pub name: String,
    pub r: usize,
    pub map: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub noise_std: f64,
    /// Labels take finitely many values (only honoured when `noise_std == 0`).
    pub discrete: bool,
}

impl fmt::Debug for CustomLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLink")
            .field("name", &self.name)
            .field("r", &self.r)
            .field("noise_std", &self.noise_std)
            .field("discrete", &self.discrete)
            .finish()
    }
}

/// Conditional law of `Y` given `Z ∈ R^r`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkSpec {
    /// `ξ · sign(z_1 ⋯ z_r)` with `P[ξ = −1] = noise`.
    Parity {
        r: usize,
        #[serde(default)]
        noise: f64,
    },
    /// Sum of products `∏_{j ∈ term} z_j`.
    Staircase {
        r: usize,
        terms: Vec<Vec<usize>>,
        #[serde(default)]
        noise_std: f64,
    },
    /// `2 ∏_j 1(v_jᵀ z > α_j) − 1`.
    Halfspaces {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
    },
    Polynomial {
        r: usize,
        terms: Vec<PolyTerm>,
        #[serde(default)]
        noise_std: f64,
    },
    /// `Σ_j a_j ρ(v_jᵀ z) + ξ`; `neurons[j]` is `v_j ∈ R^r`.
    ShallowNn {
        a: Vec<f64>,
        neurons: Vec<Vec<f64>>,
        activation: Activation,
        #[serde(default)]
        noise_std: f64,
    },
    /// ReLU between layers, linear output of width one.
    ReluNet {
        layers: Vec<DenseLayer>,
        #[serde(default)]
        noise_std: f64,
    },
    /// Labels independent of `z`: Rademacher when `discrete`, else standard Gaussian.
    Noise { r: usize, discrete: bool },
    /// `inner(R z)` for an `r × r` matrix `R` (rows).
    Rotated {
        rotation: Vec<Vec<f64>>,
        inner: Box<LinkSpec>,
    },
    #[serde(skip)]
    Custom(CustomLink),
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinkSpec {
    /// Gaussian parity on `r` coordinates with flip probability `noise`.
    pub fn parity(r: usize, noise: f64) -> Self {
        LinkSpec::Parity { r, noise }
    }

    /// `y = z_1 + z_1 z_2 + z_1 z_2 z_3`.
    pub fn staircase() -> Self {
        LinkSpec::Staircase {
            r: 3,
            terms: vec![vec![0], vec![0, 1], vec![0, 1, 2]],
            noise_std: 0.0,
        }
    }

    /// Intersection of two half-planes in `R^2`.
    pub fn halfspaces() -> Self {
        let s = 0.5f64.sqrt();
        LinkSpec::Halfspaces {
            normals: vec![vec![1.0, 0.0], vec![-s, s]],
            offsets: vec![0.25, -0.5],
        }
    }

    /// `y = ‖z‖²`.
    pub fn norm_squared(r: usize) -> Self {
        LinkSpec::Polynomial {
            r,
            terms: (0..r)
                .map(|j| {
                    let mut e = vec![0; r];
                    e[j] = 2;
                    PolyTerm {
                        coef: 1.0,
                        exponents: e,
                    }
                })
                .collect(),
            noise_std: 0.0,
        }
    }

    /// Single-index `y = z_1` (as an `r = 1` polynomial).
    pub fn linear() -> Self {
        LinkSpec::Polynomial {
            r: 1,
            terms: vec![PolyTerm {
                coef: 1.0,
                exponents: vec![1],
            }],
            noise_std: 0.0,
        }
    }

    /// Single-index `y = He_k(z) / √(k!)`.
    pub fn hermite_single(k: usize) -> Self {
        LinkSpec::ShallowNn {
            a: vec![1.0],
            neurons: vec![vec![1.0]],
            activation: Activation::He(k),
            noise_std: 0.0,
        }
    }

    /// `y = Σ_j a_j ρ(z_j)` with orthogonal neurons and `a_j = 1/√(j+1)`.
    ///
    /// Distinct output weights avoid the coordinate-swap symmetry of equal ones.
    pub fn shallow_orthogonal(r: usize, activation: Activation) -> Self {
        LinkSpec::ShallowNn {
            a: (0..r).map(|j| 1.0 / ((j + 1) as f64).sqrt()).collect(),
            neurons: (0..r)
                .map(|j| {
                    let mut v = vec![0.0; r];
                    v[j] = 1.0;
                    v
                })
                .collect(),
            activation,
            noise_std: 0.0,
        }
    }

    /// A fixed two-layer ReLU network with biases on `R^2` (three hidden units).
    pub fn relu_net() -> Self {
        LinkSpec::ReluNet {
            layers: vec![
                DenseLayer {
                    weights: vec![vec![1.0, 0.5], vec![-0.3, 1.0], vec![0.8, -0.9]],
                    bias: vec![0.4, -0.2, 0.1],
                },
                DenseLayer {
                    weights: vec![vec![1.0, -0.7, 0.6]],
                    bias: vec![0.0],
                },
            ],
            noise_std: 0.0,
        }
    }

    /// Looks up a catalog link by its CLI name.
    pub fn from_name(name: &str, r: usize, noise: Option<f64>) -> Result<Self> {
        let noise_std = noise.unwrap_or(0.0);
        let mut link = match name {
            "parity" => LinkSpec::parity(r, noise.unwrap_or(0.0)),
            "staircase" => LinkSpec::staircase(),
            "halfspaces" => LinkSpec::halfspaces(),
            "norm2" => LinkSpec::norm_squared(r),
            "linear" => LinkSpec::linear(),
            "relu-net" => LinkSpec::relu_net(),
            "he3" => LinkSpec::hermite_single(3),
            "shallow-he3" => LinkSpec::shallow_orthogonal(r, Activation::He(3)),
            "shallow-relu" => LinkSpec::shallow_orthogonal(r, Activation::Relu),
            "shallow-tanh" => LinkSpec::shallow_orthogonal(r, Activation::Tanh),
            "shallow-sign" => LinkSpec::shallow_orthogonal(r, Activation::Sign),
            "noise" => LinkSpec::Noise { r, discrete: false },
            "noise-discrete" => LinkSpec::Noise { r, discrete: true },
            other => return Err(MimError::invalid(format!("unknown link '{other}'"))),
        };
        if name != "parity" && noise_std > 0.0 {
            link = link.with_noise_std(noise_std)?;
        }
        if link.r() != r {
            return Err(MimError::invalid(format!(
                "link '{name}' has index dimension {}, not {r}",
                link.r()
            )));
        }
        link.validate()?;
        Ok(link)
    }

    /// Sets additive Gaussian label noise on continuous links.
    pub fn with_noise_std(mut self, std: f64) -> Result<Self> {
        match &mut self {
            LinkSpec::Staircase { noise_std, .. }
            | LinkSpec::Polynomial { noise_std, .. }
            | LinkSpec::ShallowNn { noise_std, .. }
            | LinkSpec::ReluNet { noise_std, .. } => *noise_std = std,
            LinkSpec::Custom(c) => c.noise_std = std,
            _ => {
                return Err(MimError::invalid(format!(
                    "link {} has no additive label noise",
                    self.name()
                )))
            }
        }
        Ok(self)
    }

    /// `inner(R z)`.
    pub fn rotated(self, rotation: Vec<Vec<f64>>) -> Self {
        LinkSpec::Rotated {
            rotation,
            inner: Box::new(self),
        }
    }

    /// Index dimension `r`.
    pub fn r(&self) -> usize {
        match self {
            LinkSpec::Parity { r, .. }
            | LinkSpec::Staircase { r, .. }
            | LinkSpec::Polynomial { r, .. }
            | LinkSpec::Noise { r, .. } => *r,
            LinkSpec::Halfspaces { normals, .. } => normals.first().map_or(0, |v| v.len()),
            LinkSpec::ShallowNn { neurons, .. } => neurons.first().map_or(0, |v| v.len()),
            LinkSpec::ReluNet { layers, .. } => {
                layers.first().and_then(|l| l.weights.first()).map_or(0, |w| w.len())
            }
            LinkSpec::Rotated { inner, .. } => inner.r(),
            LinkSpec::Custom(c) => c.r,
        }
    }

    /// Short tag used in file headers and result tables.
    pub fn name(&self) -> String {
        match self {
            LinkSpec::Parity { r, noise } if *noise > 0.0 => format!("parity{r}-eta{noise}"),
            LinkSpec::Parity { r, .. } => format!("parity{r}"),
            LinkSpec::Staircase { .. } => "staircase".into(),
            LinkSpec::Halfspaces { normals, .. } => format!("halfspaces{}", normals.len()),
            LinkSpec::Polynomial { r, .. } => format!("poly{r}"),
            LinkSpec::ShallowNn {
                activation, a, ..
            } => format!("shallow-{}-{}", activation.name(), a.len()),
            LinkSpec::ReluNet { layers, .. } => format!("relu-net{}", layers.len()),
            LinkSpec::Noise { discrete, .. } => {
                if *discrete {
                    "noise-discrete".into()
                } else {
                    "noise".into()
                }
            }
            LinkSpec::Rotated { inner, .. } => format!("rotated-{}", inner.name()),
            LinkSpec::Custom(c) => c.name.clone(),
        }
    }

    /// Whether labels take finitely many values.
    pub fn is_discrete(&self) -> bool {
        match self {
            LinkSpec::Parity { .. } | LinkSpec::Halfspaces { .. } => true,
            LinkSpec::Noise { discrete, .. } => *discrete,
            LinkSpec::Rotated { inner, .. } => inner.is_discrete(),
            LinkSpec::Custom(c) => c.discrete && c.noise_std == 0.0,
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.r();
        if r == 0 {
            return Err(MimError::invalid("index dimension r must be at least 1"));
        }
        match self {
            LinkSpec::Parity { noise, .. } => {
                if !(0.0..0.5).contains(noise) {
                    return Err(MimError::invalid("parity noise must lie in [0, 0.5)"));
                }
            }
            LinkSpec::Staircase { terms, .. } => {
                if terms.iter().flatten().any(|&j| j >= r) {
                    return Err(MimError::invalid("staircase term uses a coordinate ≥ r"));
                }
            }
            LinkSpec::Halfspaces { normals, offsets } => {
                if normals.len() != offsets.len() || normals.is_empty() {
                    return Err(MimError::invalid("need one offset per half-space normal"));
                }
                for v in normals {
                    let norm = dot(v, v).sqrt();
                    if v.len() != r || (norm - 1.0).abs() > 1e-9 {
                        return Err(MimError::invalid("half-space normals must be unit vectors in R^r"));
                    }
                }
            }
            LinkSpec::Polynomial { terms, .. } => {
                if terms.iter().any(|t| t.exponents.len() != r) {
                    return Err(MimError::invalid("polynomial exponents must have length r"));
                }
            }
            LinkSpec::ShallowNn { a, neurons, .. } => {
                if a.len() != neurons.len() || neurons.iter().any(|v| v.len() != r) {
                    return Err(MimError::invalid("shallow network needs M output weights and M neurons in R^r"));
                }
            }
            LinkSpec::ReluNet { layers, .. } => {
                let mut width = r;
                for layer in layers {
                    if layer.weights.len() != layer.bias.len()
                        || layer.weights.iter().any(|w| w.len() != width)
                    {
                        return Err(MimError::invalid("ReLU network layer shapes are inconsistent"));
                    }
                    width = layer.weights.len();
                }
                if width != 1 {
                    return Err(MimError::invalid("ReLU network must end in a single output"));
                }
            }
            LinkSpec::Rotated { rotation, inner } => {
                if rotation.len() != r || rotation.iter().any(|row| row.len() != r) {
                    return Err(MimError::invalid("rotation must be r × r"));
                }
                inner.validate()?;
            }
            LinkSpec::Noise { .. } | LinkSpec::Custom(_) => {}
        }
        Ok(())
    }

    /// Noiseless part of the link.
    pub fn mean_map(&self, z: &[f64]) -> f64 {
        match self {
            LinkSpec::Parity { .. } => sign(z.iter().product()),
            LinkSpec::Staircase { terms, .. } => terms
                .iter()
                .map(|t| t.iter().map(|&j| z[j]).product::<f64>())
                .sum(),
            LinkSpec::Halfspaces { normals, offsets } => {
                let inside = normals
                    .iter()
                    .zip(offsets)
                    .all(|(v, &a)| dot(v, z) > a);
                if inside {
                    1.0
                } else {
                    -1.0
                }
            }
            LinkSpec::Polynomial { terms, .. } => terms
                .iter()
                .map(|t| {
                    t.coef
                        * t.exponents
                            .iter()
                            .zip(z)
                            .map(|(&e, &zj)| zj.powi(e as i32))
                            .product::<f64>()
                })
                .sum(),
            LinkSpec::ShallowNn {
                a,
                neurons,
                activation,
                ..
            } => a
                .iter()
                .zip(neurons)
                .map(|(aj, v)| aj * activation.apply(dot(v, z)))
                .sum(),
            LinkSpec::ReluNet { layers, .. } => {
                let mut h: Vec<f64> = z.to_vec();
                let last = layers.len().saturating_sub(1);
                for (li, layer) in layers.iter().enumerate() {
                    h = layer
                        .weights
                        .iter()
                        .zip(&layer.bias)
                        .map(|(w, b)| {
                            let pre = dot(w, &h) + b;
                            if li == last {
                                pre
                            } else {
                                pre.max(0.0)
                            }
                        })
                        .collect();
                }
                h[0]
            }
            LinkSpec::Noise { .. } => 0.0,
            LinkSpec::Rotated { rotation, inner } => {
                let rz: Vec<f64> = rotation.iter().map(|row| dot(row, z)).collect();
                inner.mean_map(&rz)
            }
            LinkSpec::Custom(c) => (c.map)(z),
        }
    }

    /// Draws a label for index coordinates `z`.
    pub fn eval<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> f64 {
        match self {
            LinkSpec::Parity { noise, .. } => {
                let s = self.mean_map(z);
                if *noise > 0.0 && rng.random::<f64>() < *noise {
                    -s
                } else {
                    s
                }
            }
            LinkSpec::Halfspaces { .. } => self.mean_map(z),
            LinkSpec::Staircase { noise_std, .. }
            | LinkSpec::Polynomial { noise_std, .. }
            | LinkSpec::ShallowNn { noise_std, .. }
            | LinkSpec::ReluNet { noise_std, .. } => {
                let y = self.mean_map(z);
                if *noise_std > 0.0 {
                    y + noise_std * rng.sample::<f64, _>(StandardNormal)
                } else {
                    y
                }
            }
            LinkSpec::Noise { discrete, .. } => {
                if *discrete {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    rng.sample(StandardNormal)
                }
            }
            LinkSpec::Rotated { rotation, inner } => {
                let rz: Vec<f64> = rotation.iter().map(|row| dot(row, z)).collect();
                inner.eval(&rz, rng)
            }
            LinkSpec::Custom(c) => {
                let y = (c.map)(z);
                if c.noise_std > 0.0 {
                    y + c.noise_std * rng.sample::<f64, _>(StandardNormal)
                } else {
                    y
                }
            }
        }
    }

    /// `P[Y = v | Z = z]` as `(v, p)` pairs, for discrete links.
    pub fn class_probabilities(&self, z: &[f64]) -> Option<Vec<(f64, f64)>> {
        if !self.is_discrete() {
            return None;
        }
        Some(match self {
            LinkSpec::Parity { noise, .. } => {
                let s = self.mean_map(z);
                vec![(s, 1.0 - noise), (-s, *noise)]
            }
            LinkSpec::Noise { .. } => vec![(1.0, 0.5), (-1.0, 0.5)],
            LinkSpec::Rotated { rotation, inner } => {
                let rz: Vec<f64> = rotation.iter().map(|row| dot(row, z)).collect();
                return inner.class_probabilities(&rz);
            }
            _ => vec![(self.mean_map(z), 1.0)],
        })
    }
}

/// Catalog instances used by invariant checks, all with `r ≤ 3`.
pub fn catalog() -> Vec<LinkSpec> {
    vec![
        LinkSpec::parity(1, 0.0),
        LinkSpec::parity(2, 0.0),
        LinkSpec::parity(3, 0.0),
        LinkSpec::staircase(),
        LinkSpec::halfspaces(),
        LinkSpec::norm_squared(2),
        LinkSpec::relu_net(),
        LinkSpec::shallow_orthogonal(2, Activation::He(3)),
        LinkSpec::shallow_orthogonal(2, Activation::Tanh),
    ]
}
