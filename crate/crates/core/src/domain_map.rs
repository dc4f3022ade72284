//! Transport matrix of the fixed-domain reformulation.
//!
//! Pulling the Laplacian back through a change of variables with Jacobian
//! `J = I + ∇φ` produces the diffusion matrix
//!
//! ```text
//! B = |det J| · J⁻¹ · J⁻ᵀ
//! ```
//!
//! which is symmetric, positive definite for `J` near the identity, and has
//! `det B = |det J|^{n−2}` (so `det B = 1` in the plane). The matrix is
//! exposed pointwise on Jacobian samples; it is the geometric kernel that
//! the discrete perturbed stencil mimics on layer 1.

use nalgebra::Matrix2;

use crate::error::{Error, Result};

/// Pointwise Jacobian sample `J = I + ∇φ` of a plane deformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianSample {
    pub j: Matrix2<f64>,
}

impl JacobianSample {
    pub fn new(j11: f64, j12: f64, j21: f64, j22: f64) -> Self {
        JacobianSample {
            j: Matrix2::new(j11, j12, j21, j22),
        }
    }

    pub fn det(&self) -> f64 {
        self.j.determinant()
    }
}

/// Computes `B = |det J| · J⁻¹ · J⁻ᵀ`.
///
/// Fails with a singularity error (carrying `|det J|`) when the Jacobian is
/// numerically singular.
pub fn transport_matrix(sample: &JacobianSample) -> Result<Matrix2<f64>> {
    let det = sample.det();
    if det.abs() < 1e-12 * sample.j.norm().max(1.0) {
        return Err(Error::SingularJacobian { det });
    }
    let inv = sample
        .j
        .try_inverse()
        .ok_or(Error::SingularJacobian { det })?;
    Ok(det.abs() * inv * inv.transpose())
}
