//! Gauss–Hermite quadrature for the standard Gaussian measure.

use nalgebra::DMatrix;

use crate::linalg::sym_eigen_desc;

/// Nodes and weights integrating against `N(0, 1)`; weights sum to one.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch on the Jacobi matrix of the monic probabilists' Hermite family.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut jacobi = DMatrix::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let (vals, vecs) = sym_eigen_desc(&jacobi);
        let mut pairs: Vec<(f64, f64)> = vals
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, vecs[(0, i)] * vecs[(0, i)]))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `E[f(Z)]` for `Z ~ N(0, I_dim)` on the tensor grid (`n^dim` points).
    pub fn expect_nd(&self, dim: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
        let n = self.nodes.len();
        let total = n.pow(dim as u32);
        let mut point = vec![0.0; dim];
        let mut acc = 0.0;
        for lin in 0..total {
            let mut r = lin;
            let mut w = 1.0;
            for j in (0..dim).rev() {
                let i = r % n;
                r /= n;
                point[j] = self.nodes[i];
                w *= self.weights[i];
            }
            acc += w * f(&point);
        }
        acc
    }
}
