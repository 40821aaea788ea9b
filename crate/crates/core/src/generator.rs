use core::ops::Deref;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{kron_all, Matrix};

/// A certified intensity matrix: non-negative off-diagonal entries, rows
/// summing to zero, non-positive diagonal.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GeneratorMatrix(Matrix);

impl GeneratorMatrix {
    pub fn new(m: Matrix, tol: f64) -> Result<Self> {
        validate_generator(m, tol)
    }

    /// The zero generator on `n` states.
    pub fn zero(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Total exit rate `-λ^{xx}` of state `x`.
    pub fn exit_rate(&self, x: usize) -> f64 {
        -self.0[(x, x)]
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.dim()).map(|x| self.exit_rate(x).abs()).fold(0.0, f64::max)
    }
}

impl Deref for GeneratorMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Certifies `g` as an intensity matrix within absolute tolerance `tol`.
pub fn validate_generator(g: Matrix, tol: f64) -> Result<GeneratorMatrix> {
    if !g.is_square() {
        return Err(Error::NotSquare { rows: g.rows(), cols: g.cols() });
    }
    if let Some((row, col)) = g.first_non_finite() {
        return Err(Error::NonFiniteEntries { row, col });
    }
    let n = g.rows();
    for row in 0..n {
        for col in 0..n {
            let value = g[(row, col)];
            if row != col && value < 0.0 {
                return Err(Error::NegativeOffDiagonal { row, col, value });
            }
        }
        let residual: f64 = g.row(row).iter().sum();
        if residual.abs() > tol {
            return Err(Error::RowSumNonzero { row, residual });
        }
    }
    Ok(GeneratorMatrix(g))
}

/// Kronecker sum `Σ_k I ⊗ … ⊗ Ψ_k ⊗ … ⊗ I`, the generator of
/// conditionally independent components.
pub fn kron_sum(factors: &[Matrix]) -> Result<GeneratorMatrix> {
    for f in factors {
        if !f.is_square() {
            return Err(Error::NotSquare { rows: f.rows(), cols: f.cols() });
        }
    }
    let dims: Vec<usize> = factors.iter().map(Matrix::rows).collect();
    let d: usize = dims.iter().product();
    let mut out = Matrix::zeros(d, d);
    let idents: Vec<Matrix> = dims.iter().map(|&n| Matrix::identity(n)).collect();
    for (k, psi) in factors.iter().enumerate() {
        let term = kron_all((0..factors.len()).map(|j| if j == k { psi } else { &idents[j] }));
        out = &out + &term;
    }
    // accumulation error grows with d
    validate_generator(out, crate::STRUCTURAL_TOL * (d.max(1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorbing_two_state_is_valid() {
        assert!(validate_generator(Matrix::from_rows(&[[-1.0, 1.0], [0.0, 0.0]]), 1e-12).is_ok());
    }

    #[test]
    fn row_sum_violation_reports_residual() {
        let err = validate_generator(Matrix::from_rows(&[[-1.0, 0.5], [0.0, 0.0]]), 1e-12).unwrap_err();
        assert_eq!(err, Error::RowSumNonzero { row: 0, residual: -0.5 });
    }

    #[test]
    fn negative_off_diagonal() {
        let err = validate_generator(Matrix::from_rows(&[[1.0, -1.0], [0.0, 0.0]]), 1e-12).unwrap_err();
        assert_eq!(err, Error::NegativeOffDiagonal { row: 0, col: 1, value: -1.0 });
    }

    #[test]
    fn non_square_and_non_finite() {
        assert!(matches!(validate_generator(Matrix::zeros(2, 3), 1e-12), Err(Error::NotSquare { .. })));
        let m = Matrix::from_rows(&[[f64::NAN, 0.0], [0.0, 0.0]]);
        assert!(matches!(validate_generator(m, 1e-12), Err(Error::NonFiniteEntries { row: 0, col: 0 })));
    }

    #[test]
    fn common_jump_generator_is_valid() {
        let m = Matrix::from_rows(&[
            [-1.5, 0.5, 0.5, 0.5],
            [0.0, -1.0, 0.0, 1.0],
            [0.0, 0.0, -1.0, 1.0],
            [0.0, 0.0, 0.0, 0.0],
        ]);
        assert!(validate_generator(m, 1e-12).is_ok());
    }

    #[test]
    fn kron_sum_two_absorbing() {
        let (a, b) = (1.0, 2.0);
        let p1 = Matrix::from_rows(&[[-a, a], [0.0, 0.0]]);
        let p2 = Matrix::from_rows(&[[-b, b], [0.0, 0.0]]);
        let l = kron_sum(&[p1, p2]).unwrap();
        let want = Matrix::from_rows(&[
            [-3.0, 2.0, 1.0, 0.0],
            [0.0, -1.0, 0.0, 1.0],
            [0.0, 0.0, -2.0, 2.0],
            [0.0, 0.0, 0.0, 0.0],
        ]);
        assert_eq!(*l, want);
        // no simultaneous jumps of both coordinates
        assert_eq!(l[(0, 3)], 0.0);
        assert_eq!(l[(1, 2)], 0.0);
        assert_eq!(l[(2, 1)], 0.0);
    }

    #[test]
    fn kron_sum_single_factor() {
        let p = Matrix::from_rows(&[[-0.3, 0.1, 0.2], [0.5, -0.5, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(*kron_sum(core::slice::from_ref(&p)).unwrap(), p);
    }

    #[test]
    fn euler_step_is_stochastic() {
        let g = validate_generator(Matrix::from_rows(&[[-2.0, 1.5, 0.5], [1.0, -1.0, 0.0], [0.0, 3.0, -3.0]]), 1e-12)
            .unwrap();
        let h = 0.99 / g.max_exit_rate();
        let step = &Matrix::identity(3) + &g.scale(h);
        assert!(step.as_slice().iter().all(|&v| v >= 0.0));
        for s in step.row_sums() {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }
}
