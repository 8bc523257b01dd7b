//! Linear subspaces with orthonormal frames, and the projector distance between them.

use nalgebra::DMatrix;

use crate::error::{MimError, Result};
use crate::linalg::{orthogonal_complement, orthonormal_columns, sym_op_norm};

/// A subspace of `R^ambient_dim`, stored as an orthonormal column frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    ambient_dim: usize,
    basis: DMatrix<f64>,
}

impl Subspace {
    /// The zero subspace.
    pub fn empty(ambient_dim: usize) -> Self {
        Subspace {
            ambient_dim,
            basis: DMatrix::zeros(ambient_dim, 0),
        }
    }

    /// The whole space, with the standard basis.
    pub fn full(ambient_dim: usize) -> Self {
        Subspace {
            ambient_dim,
            basis: DMatrix::identity(ambient_dim, ambient_dim),
        }
    }

    /// Span of the columns of `columns`; dependent columns are dropped.
    pub fn span(columns: &DMatrix<f64>) -> Self {
        Subspace {
            ambient_dim: columns.nrows(),
            basis: orthonormal_columns(columns, 1e-10),
        }
    }

    /// Wraps a frame that is already orthonormal, checking it to 1e-10.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let s = basis.ncols();
        if s > basis.nrows() {
            return Err(MimError::DimensionMismatch(format!(
                "{} basis vectors in dimension {}",
                s,
                basis.nrows()
            )));
        }
        let gram = basis.transpose() * &basis;
        let err = (gram - DMatrix::<f64>::identity(s, s)).abs().max();
        if s > 0 && err > 1e-10 {
            return Err(MimError::invalid(format!(
                "basis is not orthonormal (max deviation {err:.3e})"
            )));
        }
        Ok(Subspace {
            ambient_dim: basis.nrows(),
            basis,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient_dim
    }

    /// Orthonormal frame, `ambient_dim × dim`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Frame vectors as rows (`dim × ambient_dim`), flattened row-major.
    pub fn basis_rows(&self) -> Vec<f64> {
        self.basis.as_slice().to_vec()
    }

    /// Orthogonal projector `B Bᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Smallest subspace containing both.
    pub fn union(&self, other: &Subspace) -> Result<Subspace> {
        self.check_ambient(other)?;
        if self.is_empty() {
            return Ok(other.clone());
        }
        let mut stacked = DMatrix::zeros(self.ambient_dim, self.dim() + other.dim());
        stacked.columns_mut(0, self.dim()).copy_from(&self.basis);
        stacked
            .columns_mut(self.dim(), other.dim())
            .copy_from(&other.basis);
        Ok(Subspace {
            ambient_dim: self.ambient_dim,
            basis: orthonormal_columns(&stacked, 1e-8),
        })
    }

    /// Orthogonal complement.
    pub fn complement(&self) -> Subspace {
        Subspace {
            ambient_dim: self.ambient_dim,
            basis: orthogonal_complement(&self.basis),
        }
    }

    /// Image under a linear map, `map · basis`, re-orthonormalized.
    pub fn mapped(&self, map: &DMatrix<f64>) -> Subspace {
        Subspace::span(&(map * &self.basis))
    }

    fn check_ambient(&self, other: &Subspace) -> Result<()> {
        if self.ambient_dim != other.ambient_dim {
            return Err(MimError::DimensionMismatch(format!(
                "ambient dimensions {} and {}",
                self.ambient_dim, other.ambient_dim
            )));
        }
        Ok(())
    }
}

/// `‖Π₁ − Π₂‖_op`, the sine of the largest principal angle when dimensions agree.
pub fn subspace_distance(t1: &Subspace, t2: &Subspace) -> Result<f64> {
    t1.check_ambient(t2)?;
    let diff = t1.projector() - t2.projector();
    Ok(sym_op_norm(&diff).clamp(0.0, 1.0))
}
