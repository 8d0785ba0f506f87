use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;

/// Minimum-norm estimate `argmin (1/2n)‖y - Lx‖² + λ‖x‖²` for each subject,
/// through the `n × n` system `x = Lᵀ (LLᵀ + 2nλ I)⁻¹ y`.
pub fn solve_mne(instance: &ProblemInstance, lambda: f64) -> Result<Vec<DVector<f64>>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Singular(format!("ridge penalty must be positive, got {lambda}")));
    }
    let n = instance.n_sensors();
    instance
        .subjects()
        .iter()
        .map(|s| {
            let gram = &s.design * s.design.transpose() + DMatrix::identity(n, n) * (2.0 * n as f64 * lambda);
            let chol = gram
                .cholesky()
                .ok_or_else(|| Error::Singular("regularized Gram matrix is not positive definite".into()))?;
            Ok(s.design.tr_mul(&chol.solve(&s.measurement)))
        })
        .collect()
}
