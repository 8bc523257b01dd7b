use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MimError, Result};
use crate::subspace::Subspace;

/// Where a serialized subspace came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Single-leap order, or the schedule tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[serde(default)]
    pub kernel: String,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub path: String,
    #[serde(default)]
    pub fold_boundaries: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// JSON form `{d, s, basis, provenance}`; `basis` is the `s × d` frame, row-major.
///
/// Floats are written in shortest round-trip form, so reading back is lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceRecord {
    pub d: usize,
    pub s: usize,
    pub basis: Vec<f64>,
    pub provenance: Provenance,
}

impl SubspaceRecord {
    pub fn new(subspace: &Subspace, provenance: Provenance) -> Self {
        SubspaceRecord {
            d: subspace.ambient_dim(),
            s: subspace.dim(),
            basis: subspace.basis_rows(),
            provenance,
        }
    }

    pub fn subspace(&self) -> Result<Subspace> {
        if self.basis.len() != self.d * self.s {
            return Err(MimError::DimensionMismatch(format!(
                "basis has {} entries, expected {}·{}",
                self.basis.len(),
                self.s,
                self.d
            )));
        }
        let cols = DMatrix::from_row_slice(self.s, self.d, &self.basis).transpose();
        Ok(Subspace::span(&cols))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| MimError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MimError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
