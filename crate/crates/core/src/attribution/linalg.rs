use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Accumulates the normal equations of a weighted least-squares problem.
pub(crate) struct NormalEquations {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl NormalEquations {
    pub fn new(dim: usize) -> Self {
        Self { gram: DMatrix::zeros(dim, dim), rhs: DVector::zeros(dim) }
    }

    pub fn add(&mut self, row: &[f64], target: f64, weight: f64) {
        for (i, &x) in row.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let wi = weight * x;
            self.rhs[i] += wi * target;
            for (j, &y) in row.iter().enumerate().skip(i) {
                self.gram[(i, j)] += wi * y;
            }
        }
    }

    /// Solves `(G + ridge * D) x = r`, where `D` is the identity with the
    /// entries listed in `unpenalized` zeroed. Falls back to an SVD solve
    /// when the system is not positive definite.
    pub fn solve(mut self, ridge: f64, unpenalized: &[usize]) -> Result<Vec<f64>> {
        let n = self.rhs.len();
        for i in 0..n {
            for j in 0..i {
                self.gram[(i, j)] = self.gram[(j, i)];
            }
            if !unpenalized.contains(&i) {
                self.gram[(i, i)] += ridge;
            }
        }
        if let Some(chol) = self.gram.clone().cholesky() {
            return Ok(chol.solve(&self.rhs).iter().copied().collect());
        }
        let svd = self.gram.svd(true, true);
        let solution = svd
            .solve(&self.rhs, 1e-12)
            .map_err(|e| Error::Validation(alloc::format!("least-squares solve failed: {e}")))?;
        Ok(solution.iter().copied().collect())
    }
}
