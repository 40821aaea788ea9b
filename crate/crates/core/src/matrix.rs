//! Dense row-major matrices with the handful of operations the chain
//! machinery needs: products, Kronecker products, the matrix exponential
//! and a principal logarithm for propagator inversion.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, actual: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    ///
    /// Panics if the rows are ragged; intended for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: n_rows, cols: n_cols, data }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * factor).collect() }
    }

    /// Row vector times matrix.
    pub fn left_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(r)) {
                *o += vr * m;
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Induced infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows).map(|r| self.row(r).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Induced 1-norm (max absolute column sum).
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.data[r * self.cols + c].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// First non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data.iter().position(|v| !v.is_finite()).map(|i| (i / self.cols, i % self.cols))
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = rhs.row(k);
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    fn axpy(&mut self, alpha: f64, x: &Matrix) {
        for (a, b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
    }

    /// Solves `self * X = rhs` by LU decomposition with partial pivoting.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
                .unwrap_or(col);
            if a[pivot * n + col].abs() == 0.0 {
                return Err(Error::Singular);
            }
            if pivot != col {
                for c in 0..n {
                    a.swap(col * n + c, pivot * n + c);
                }
                for c in 0..m {
                    b.swap(col * m + c, pivot * m + c);
                }
            }
            let p = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                if f == 0.0 {
                    continue;
                }
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                for c in 0..m {
                    b[r * m + c] -= f * b[col * m + c];
                }
            }
        }
        for r in (0..n).rev() {
            let p = a[r * n + r];
            for c in 0..m {
                let mut s = b[r * m + c];
                for k in r + 1..n {
                    s -= a[r * n + k] * b[k * m + c];
                }
                b[r * m + c] = s / p;
            }
        }
        Ok(Matrix { rows: n, cols: m, data: b })
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.solve(&Matrix::identity(self.rows))
    }

    /// Matrix exponential by scaling and squaring with a degree-13 Padé
    /// approximant.
    pub fn expm(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        const THETA_13: f64 = 5.371_920_351_148_152;
        const B: [f64; 14] = [
            64_764_752_532_480_000.0,
            32_382_376_266_240_000.0,
            7_771_770_303_897_600.0,
            1_187_353_796_428_800.0,
            129_060_195_264_000.0,
            10_559_470_521_600.0,
            670_442_572_800.0,
            33_522_128_640.0,
            1_323_241_920.0,
            40_840_800.0,
            960_960.0,
            16_380.0,
            182.0,
            1.0,
        ];
        let n = self.rows;
        let norm = self.norm_one();
        if !norm.is_finite() {
            let (row, col) = self.first_non_finite().unwrap_or((0, 0));
            return Err(Error::NonFiniteEntries { row, col });
        }
        if norm == 0.0 {
            return Ok(Matrix::identity(n));
        }
        let squarings = if norm > THETA_13 { libm::ceil(libm::log2(norm / THETA_13)) as i32 } else { 0 };
        let a = self.scale(libm::pow(2.0, -f64::from(squarings)));
        let ident = Matrix::identity(n);
        let a2 = a.matmul(&a);
        let a4 = a2.matmul(&a2);
        let a6 = a4.matmul(&a2);

        let mut inner_u = a6.scale(B[13]);
        inner_u.axpy(B[11], &a4);
        inner_u.axpy(B[9], &a2);
        let mut u = a6.matmul(&inner_u);
        u.axpy(B[7], &a6);
        u.axpy(B[5], &a4);
        u.axpy(B[3], &a2);
        u.axpy(B[1], &ident);
        let u = a.matmul(&u);

        let mut inner_v = a6.scale(B[12]);
        inner_v.axpy(B[10], &a4);
        inner_v.axpy(B[8], &a2);
        let mut v = a6.matmul(&inner_v);
        v.axpy(B[6], &a6);
        v.axpy(B[4], &a4);
        v.axpy(B[2], &a2);
        v.axpy(B[0], &ident);

        let mut result = (&v - &u).solve(&(&v + &u))?;
        for _ in 0..squarings {
            result = result.matmul(&result);
        }
        if let Some((row, col)) = result.first_non_finite() {
            return Err(Error::NonFiniteEntries { row, col });
        }
        Ok(result)
    }

    /// Principal square root via the Denman–Beavers iteration.
    pub fn sqrtm(&self) -> Result<Matrix> {
        let n = self.rows;
        let mut y = self.clone();
        let mut z = Matrix::identity(n);
        for _ in 0..100 {
            let y_inv = y.inverse()?;
            let z_inv = z.inverse()?;
            let y_next = (&y + &z_inv).scale(0.5);
            let z_next = (&z + &y_inv).scale(0.5);
            let delta = y_next.max_abs_diff(&y);
            y = y_next;
            z = z_next;
            if delta <= 1e-15 * y.max_abs().max(1.0) {
                break;
            }
        }
        Ok(y)
    }

    /// Principal matrix logarithm by inverse scaling and squaring.
    ///
    /// Requires the spectrum to avoid the closed negative real axis, which
    /// holds for propagators `exp(hG)` with `h·|G|` moderate.
    pub fn logm(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        let ident = Matrix::identity(n);
        let mut x = self.clone();
        let mut roots = 0;
        while (&x - &ident).norm_one() > 0.25 {
            x = x.sqrtm()?;
            roots += 1;
            if roots > 60 {
                return Err(Error::Singular);
            }
        }
        let e = &x - &ident;
        let mut power = e.clone();
        let mut log = Matrix::zeros(n, n);
        for k in 1..200 {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            log.axpy(sign / k as f64, &power);
            power = power.matmul(&e);
            if power.max_abs() < 1e-18 {
                break;
            }
        }
        Ok(log.scale(libm::pow(2.0, f64::from(roots))))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (m, n) = (a.rows, a.cols);
    let (p, q) = (b.rows, b.cols);
    let mut out = Matrix::zeros(m * p, n * q);
    for i in 0..m {
        for j in 0..n {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..p {
                for l in 0..q {
                    out[(i * p + k, j * q + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Iterated Kronecker product `A_1 ⊗ … ⊗ A_N` (the 1×1 identity when empty).
pub fn kron_all<'a, I: IntoIterator<Item = &'a Matrix>>(factors: I) -> Matrix {
    factors.into_iter().fold(Matrix::identity(1), |acc, m| kron(&acc, m))
}

pub use crate::generator::kron_sum;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_identities() {
        assert_eq!(kron(&Matrix::identity(2), &Matrix::identity(2)), Matrix::identity(4));
    }

    #[test]
    fn kron_hand_expansion() {
        let a = 1.5;
        let psi = Matrix::from_rows(&[[-a, a], [0.0, 0.0]]);
        let k = kron(&psi, &Matrix::identity(2));
        assert_eq!(k.row(0), &[-a, 0.0, a, 0.0]);
        assert_eq!(k.row(1), &[0.0, -a, 0.0, a]);
        assert_eq!(k.row(2), &[0.0; 4]);
    }

    #[test]
    fn mixed_product_rule() {
        let a = Matrix::from_rows(&[[0.3, -1.2], [2.5, 0.7]]);
        let b = Matrix::from_rows(&[[1.1, 0.4], [-0.6, 0.9]]);
        let c = Matrix::from_rows(&[[-0.2, 0.8], [1.3, 0.05]]);
        let d = Matrix::from_rows(&[[0.5, -0.5], [2.0, 1.0]]);
        let lhs = kron(&a, &b).matmul(&kron(&c, &d));
        let rhs = kron(&a.matmul(&c), &b.matmul(&d));
        assert!(lhs.max_abs_diff(&rhs) < 1e-14);
    }

    #[test]
    fn expm_of_zero_and_diagonal() {
        assert_eq!(Matrix::zeros(3, 3).expm().unwrap(), Matrix::identity(3));
        let d = Matrix::diagonal(&[-1.0, 0.5, -20.0]);
        let e = d.expm().unwrap();
        for (i, v) in [-1.0f64, 0.5, -20.0].iter().enumerate() {
            let want = libm::exp(*v);
            assert!((e[(i, i)] - want).abs() <= 1e-14 * want.max(1.0));
        }
    }

    #[test]
    fn expm_two_state_absorbing() {
        // p' = a (1 - p), p(0) = 0  =>  p(t) = 1 - exp(-a t)
        let a = 1.0;
        let g = Matrix::from_rows(&[[-a, a], [0.0, 0.0]]);
        let p = g.expm().unwrap();
        assert!((p[(0, 1)] - (1.0 - libm::exp(-1.0))).abs() < 1e-15);
        assert!((p[(0, 0)] - libm::exp(-1.0)).abs() < 1e-15);
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        let g = Matrix::from_rows(&[[-40.0, 40.0], [10.0, -10.0]]);
        let p = g.expm().unwrap();
        // eigenvalues 0 and -50: stationary law (0.2, 0.8) plus a vanishing transient
        assert!((p[(0, 0)] - 0.2).abs() < 1e-12);
        assert!((p[(1, 1)] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn logm_inverts_expm() {
        let g = Matrix::from_rows(&[[-1.2, 0.7, 0.5], [0.3, -0.3, 0.0], [0.0, 2.0, -2.0]]);
        let p = g.scale(0.4).expm().unwrap();
        let back = p.logm().unwrap().scale(1.0 / 0.4);
        assert!(back.max_abs_diff(&g) < 1e-10, "{back:?}");
    }

    #[test]
    fn solve_recovers_rhs() {
        let a = Matrix::from_rows(&[[0.0, 2.0, 1.0], [1.0, -1.0, 0.0], [3.0, 0.0, 4.0]]);
        let x = Matrix::from_rows(&[[1.0], [2.0], [-1.0]]);
        let b = a.matmul(&x);
        assert!(a.solve(&b).unwrap().max_abs_diff(&x) < 1e-14);
        assert_eq!(Matrix::zeros(2, 2).solve(&Matrix::identity(2)), Err(Error::Singular));
    }
}
