use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationCheck {
    pub holds_strictly: bool,
    /// `sum over G of |A_ij| + |B_ij|`
    pub lhs: f64,
    /// `sum over G of |A_ij|`
    pub rhs: f64,
}

/// Compares the summed magnitude of two overlapping feature maps on the
/// shared coordinates `active` with that of `a` alone. The sum exceeds `a`'s
/// exactly when `b` is nonzero somewhere on `active`.
pub fn deformation_check(a: &Array2<f64>, b: &Array2<f64>, active: &[(usize, usize)]) -> Result<DeformationCheck> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(a.dim(), b.dim()));
    }
    let (rows, cols) = a.dim();
    let coords: BTreeSet<(usize, usize)> = active.iter().copied().collect();
    let mut rhs = 0.0;
    let mut added = 0.0;
    for &(i, j) in &coords {
        if i >= rows || j >= cols {
            return Err(Error::CoordinateOutOfBounds(i, j));
        }
        rhs += a[[i, j]].abs();
        added += b[[i, j]].abs();
    }
    // strictness is decided on the added mass so a small |B| cannot be
    // absorbed by rounding against a large |A|
    Ok(DeformationCheck {
        holds_strictly: added > 0.0,
        lhs: rhs + added,
        rhs,
    })
}

/// Coordinates where both maps are active (nonzero).
pub fn shared_activations(a: &Array2<f64>, b: &Array2<f64>) -> Result<Vec<(usize, usize)>> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(a.dim(), b.dim()));
    }
    Ok(a.indexed_iter()
        .filter(|&((i, j), &v)| v != 0.0 && b[[i, j]] != 0.0)
        .map(|(ij, _)| ij)
        .collect())
}
