//! Dense linear-algebra helpers shared by the kernel, path and diagnostics code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{NgkError, Result};

/// Jitter ladder (relative to the mean diagonal) tried before a symmetric
/// solve is declared singular.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Cholesky factor of a symmetric positive-definite matrix, possibly with a
/// small diagonal jitter added.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(NgkError::DimensionMismatch {
                expected: n,
                found: a.ncols(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(NgkError::Numerical("matrix has non-finite entries".into()));
        }
        let scale = (a.trace() / n.max(1) as f64).abs().max(1.0);
        for &rel in JITTER_LADDER.iter() {
            let jitter = rel * scale;
            let mut m = a.clone();
            if jitter > 0.0 {
                for i in 0..n {
                    m[(i, i)] += jitter;
                }
            }
            if let Some(chol) = Cholesky::new(m) {
                if rel > 0.0 {
                    log::debug!("symmetric solve needed diagonal jitter {jitter:e}");
                }
                return Ok(SpdFactor { chol, jitter });
            }
        }
        Err(NgkError::Singular(format!(
            "{n}x{n} system not positive definite after jitter {:e}",
            JITTER_LADDER[JITTER_LADDER.len() - 1] * scale
        )))
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Solve `(shift I + a) x = b` for symmetric positive semidefinite `a`.
pub fn shifted_solve(a: &DMatrix<f64>, shift: f64, b: &DVector<f64>) -> Result<DVector<f64>> {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += shift;
    }
    Ok(SpdFactor::new(&m)?.solve(b))
}

pub fn sym_eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    SymmetricEigen::new(a.clone())
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    sym_eigen(a).eigenvalues.min()
}

/// Largest absolute row sum (the matrix infinity norm).
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Gather the listed columns of `a` into a new matrix.
pub fn select_columns(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), cols.len(), |i, k| a[(i, cols[k])])
}
