use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::dataset::Dataset;
use super::link::LinkSpec;
use crate::error::{MimError, Result};
use crate::rng::Streams;
use crate::subspace::Subspace;

const SAMPLE_BLOCK: usize = 4096;

/// Haar-distributed `r × d` frame with orthonormal rows.
///
/// QR of a `d × r` standard Gaussian matrix with the signs of `R`'s diagonal
/// pushed into `Q`, then transposed.
pub fn plant_subspace(d: usize, r: usize, seed: u64) -> Result<DMatrix<f64>> {
    if r == 0 || r > d {
        return Err(MimError::invalid(format!("need 1 ≤ r ≤ d, got r = {r}, d = {d}")));
    }
    let mut rng = Streams::new(seed).rng("plant", 0);
    let g = DMatrix::<f64>::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let rf = qr.r();
    for j in 0..r {
        if rf[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q.transpose())
}

/// A multi-index model `y ~ link(w_star · x)`, `x ~ N(0, I_d)`.
#[derive(Debug, Clone)]
pub struct PlantedModel {
    d: usize,
    w_star: DMatrix<f64>,
    link: LinkSpec,
}

impl PlantedModel {
    /// Plants a Haar frame for `link` in dimension `d`.
    pub fn new(d: usize, link: LinkSpec, seed: u64) -> Result<Self> {
        link.validate()?;
        let w_star = plant_subspace(d, link.r(), seed)?;
        Ok(PlantedModel { d, w_star, link })
    }

    /// Uses a given frame; rows must be orthonormal to 1e-10.
    pub fn with_frame(w_star: DMatrix<f64>, link: LinkSpec) -> Result<Self> {
        link.validate()?;
        if w_star.nrows() != link.r() {
            return Err(MimError::DimensionMismatch(format!(
                "frame has {} rows, link needs r = {}",
                w_star.nrows(),
                link.r()
            )));
        }
        let gram = &w_star * w_star.transpose();
        let dev = (gram - DMatrix::identity(link.r(), link.r())).norm();
        if dev > 1e-10 {
            return Err(MimError::invalid(format!("frame rows not orthonormal (‖GGᵀ − I‖ = {dev:e})")));
        }
        Ok(PlantedModel {
            d: w_star.ncols(),
            w_star,
            link,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.w_star.nrows()
    }

    pub fn w_star(&self) -> &DMatrix<f64> {
        &self.w_star
    }

    pub fn link(&self) -> &LinkSpec {
        &self.link
    }

    /// The planted index space, span of the rows of `w_star`.
    pub fn index_space(&self) -> Subspace {
        Subspace::span(&self.w_star.transpose())
    }

    /// `w_star · x`.
    pub fn latent(&self, x: &[f64]) -> Vec<f64> {
        (0..self.r())
            .map(|j| self.w_star.row(j).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    pub fn tag(&self) -> String {
        format!("{}-r{}-d{}", self.link.name(), self.r(), self.d)
    }
}

/// Draws `n` iid samples. Sample `i` uses stream `("sample", i)`, so output is
/// independent of the thread count.
pub fn sample(model: &PlantedModel, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(MimError::invalid("sample count must be at least 1"));
    }
    let d = model.d;
    let base = Streams::new(seed).rng("sample", 0);
    let mut x = vec![0.0; n * d];
    let mut y = vec![0.0; n];
    x.par_chunks_mut(SAMPLE_BLOCK * d)
        .zip(y.par_chunks_mut(SAMPLE_BLOCK))
        .enumerate()
        .for_each(|(b, (xb, yb))| {
            for (j, (row, yi)) in xb.chunks_mut(d).zip(yb.iter_mut()).enumerate() {
                let mut rng = base.clone();
                rng.set_stream((b * SAMPLE_BLOCK + j) as u64);
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let z = model.latent(row);
                *yi = model.link.eval(&z, &mut rng);
            }
        });
    Dataset::new(x, y, d, seed, model.tag())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_frame_is_orthogonal() {
        let g = plant_subspace(5, 5, 11).unwrap();
        let dev = (&g * g.transpose() - DMatrix::identity(5, 5)).norm();
        assert!(dev <= 1e-10);
        let dev2 = (g.transpose() * &g - DMatrix::identity(5, 5)).norm();
        assert!(dev2 <= 1e-10);
    }

    #[test]
    fn frame_rows_orthonormal_and_deterministic() {
        let g = plant_subspace(40, 3, 5).unwrap();
        assert!((&g * g.transpose() - DMatrix::identity(3, 3)).norm() <= 1e-10);
        assert_eq!(g, plant_subspace(40, 3, 5).unwrap());
        assert_ne!(g, plant_subspace(40, 3, 6).unwrap());
    }

    #[test]
    fn r_above_d_rejected() {
        assert!(plant_subspace(2, 3, 0).is_err());
        assert!(plant_subspace(2, 0, 0).is_err());
    }

    #[test]
    fn single_index_parity_is_sign() {
        let model = PlantedModel::new(6, LinkSpec::parity(1, 0.0), 2).unwrap();
        let data = sample(&model, 500, 9).unwrap();
        for i in 0..data.n() {
            let z = model.latent(data.x_row(i));
            assert_eq!(data.y()[i], if z[0] >= 0.0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = PlantedModel::new(4, LinkSpec::staircase(), 1).unwrap();
        let a = sample(&model, 5000, 3).unwrap();
        let b = sample(&model, 5000, 3).unwrap();
        assert_eq!(a, b);
        // prefix consistency: sample i does not depend on n
        let c = sample(&model, 10, 3).unwrap();
        assert_eq!(c.x_row(7), a.x_row(7));
    }

    #[test]
    fn zero_samples_rejected() {
        let model = PlantedModel::new(4, LinkSpec::linear(), 1).unwrap();
        assert!(sample(&model, 0, 0).is_err());
    }
}
