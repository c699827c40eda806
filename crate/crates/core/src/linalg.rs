//! Small dense matrices over real or complex scalars.
//!
//! Dimensions in this crate are tiny (the series dimension `d`, or `d·p` for
//! block-Toeplitz systems), so everything here is straightforward row-major
//! storage with O(n³) factorizations.

use std::fmt::Debug;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex;
use num_traits::{Float, NumAssign, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular to working precision (pivot ratio {condition:e})")]
    Singular { condition: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
}

/// Entry type of a [`Mat`]: a real [`Scalar`] or a complex number over one.
pub trait Element:
    Copy + NumAssign + Neg<Output = Self> + Debug + Send + Sync + 'static
{
    type Real: Scalar;

    fn modulus(self) -> Self::Real;
    fn conj(self) -> Self;
    fn from_real(r: Self::Real) -> Self;
}

impl Element for f64 {
    type Real = f64;

    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }

    #[inline]
    fn conj(self) -> f64 {
        self
    }

    #[inline]
    fn from_real(r: f64) -> f64 {
        r
    }
}

impl Element for f32 {
    type Real = f32;

    #[inline]
    fn modulus(self) -> f32 {
        self.abs()
    }

    #[inline]
    fn conj(self) -> f32 {
        self
    }

    #[inline]
    fn from_real(r: f32) -> f32 {
        r
    }
}

impl<S: Scalar> Element for Complex<S> {
    type Real = S;

    #[inline]
    fn modulus(self) -> S {
        self.norm()
    }

    #[inline]
    fn conj(self) -> Self {
        Complex::conj(&self)
    }

    #[inline]
    fn from_real(r: S) -> Self {
        Complex::new(r, S::zero())
    }
}

/// Row-major dense matrix.
///
/// Serializes as a list of rows.
#[derive(Clone, PartialEq)]
pub struct Mat<E> {
    rows: usize,
    cols: usize,
    data: Vec<E>,
}

pub type Matrix<S> = Mat<S>;
pub type CMatrix<S> = Mat<Complex<S>>;

impl<E: Debug> Debug for Mat<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rows: Vec<&[E]> = self.data.chunks(self.cols.max(1)).collect();
        f.debug_struct("Mat")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("data", &rows)
            .finish()
    }
}

impl<E: Element> Mat<E> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![E::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = E::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> E) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<E>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<E>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::Dimension("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn diag(values: &[E]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
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

    pub fn as_slice(&self) -> &[E] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[E] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<E>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn map<F: Element>(&self, f: impl Fn(E) -> F) -> Mat<F> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: E) -> Self {
        self.map(|x| x * s)
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == E::zero() {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> E {
        (0..self.rows.min(self.cols)).fold(E::zero(), |acc, i| acc + self[(i, i)])
    }

    /// Largest entry modulus (the matrix max-norm).
    pub fn max_abs(&self) -> E::Real {
        self.data
            .iter()
            .fold(E::Real::zero(), |m, x| m.max(x.modulus()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.modulus().is_finite())
    }

    /// `(A + Aᴴ)/2`.
    pub fn hermitian_part(&self) -> Self {
        let half = E::from_real(E::Real::of(0.5));
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * half
        })
    }

    /// Max-norm distance from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> E::Real {
        let mut worst = E::Real::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).modulus());
            }
        }
        worst
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<Lu<E>, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::Dimension("LU of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut odd = false;
        let scale = self.max_abs();
        let tiny = scale * E::Real::epsilon() * E::Real::of_usize(n.max(1));
        let mut min_pivot = E::Real::infinity();
        let mut max_pivot = E::Real::zero();
        for col in 0..n {
            let mut best = col;
            let mut best_mod = a[(col, col)].modulus();
            for r in col + 1..n {
                let m = a[(r, col)].modulus();
                if m > best_mod {
                    best = r;
                    best_mod = m;
                }
            }
            min_pivot = min_pivot.min(best_mod);
            max_pivot = max_pivot.max(best_mod);
            if best_mod <= tiny || best_mod == E::Real::zero() {
                let condition = if best_mod == E::Real::zero() {
                    f64::INFINITY
                } else {
                    (max_pivot / best_mod).as_f64()
                };
                return Err(LinalgError::Singular { condition });
            }
            if best != col {
                for j in 0..n {
                    a.data.swap(col * n + j, best * n + j);
                }
                perm.swap(col, best);
                odd = !odd;
            }
            let pivot = a[(col, col)];
            for r in col + 1..n {
                let factor = a[(r, col)] / pivot;
                a[(r, col)] = factor;
                if factor == E::zero() {
                    continue;
                }
                for j in col + 1..n {
                    let u = a[(col, j)];
                    a[(r, j)] -= factor * u;
                }
            }
        }
        Ok(Lu {
            lu: a,
            perm,
            odd,
            condition: if n == 0 {
                1.0
            } else {
                (max_pivot / min_pivot).as_f64()
            },
        })
    }

    pub fn solve(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.lu()?.solve(rhs)
    }

    pub fn inverse(&self) -> Result<Self, LinalgError> {
        self.lu()?.solve(&Self::identity(self.rows))
    }

    pub fn determinant(&self) -> E {
        match self.lu() {
            Ok(lu) => lu.determinant(),
            Err(_) => E::zero(),
        }
    }
}

impl<S: Scalar> Mat<S> {
    /// Embeds a real matrix into the complex field.
    pub fn to_complex(&self) -> CMatrix<S> {
        self.map(|x| Complex::new(x, S::zero()))
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    ///
    /// Returns eigenvalues in ascending order with the matching orthonormal
    /// eigenvectors as columns.
    pub fn symmetric_eigen(&self) -> Result<(Vec<S>, Matrix<S>), LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::Dimension("eigen of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.hermitian_part();
        let mut v = Matrix::<S>::identity(n);
        let two = S::of(2.0);
        for _sweep in 0..100 {
            let mut off = S::zero();
            for i in 0..n {
                for j in i + 1..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            let total = a.data.iter().fold(S::zero(), |s, &x| s + x * x);
            if off <= S::epsilon() * S::epsilon() * total || off == S::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == S::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                    let c = S::one() / (t * t + S::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
        Ok((values, vectors))
    }

    /// Symmetric positive-semidefinite square root `R` with `R Rᵀ = R² = A`.
    ///
    /// Eigenvalues in `[-tol, 0)` are clamped to zero, where
    /// `tol = 1e-10 · max(1, ‖A‖)`; anything more negative is an error.
    pub fn psd_sqrt(&self) -> Result<Matrix<S>, LinalgError> {
        let (values, vectors) = self.symmetric_eigen()?;
        let tol = S::of(1e-10) * self.max_abs().max(S::one());
        let n = self.rows;
        let mut roots = Vec::with_capacity(n);
        for &lam in &values {
            if lam < -tol {
                return Err(LinalgError::NotPsd(lam.as_f64()));
            }
            roots.push(lam.max(S::zero()).sqrt());
        }
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = S::zero();
                for k in 0..n {
                    s += vectors[(i, k)] * roots[k] * vectors[(j, k)];
                }
                out[(i, j)] = s;
            }
        }
        Ok(out)
    }

    /// Spectral radius via Gelfand's formula on repeated squaring:
    /// `ρ(A) = lim ‖A^{2^k}‖^{1/2^k}`, with the running scale kept in log space.
    pub fn spectral_radius(&self) -> S {
        assert!(self.is_square(), "spectral radius of a non-square matrix");
        let norm = self.max_abs();
        if norm == S::zero() {
            return S::zero();
        }
        let mut m = self.scale(S::one() / norm);
        let mut log_scale = norm.ln();
        let mut exponent = S::one();
        for _ in 0..48 {
            m = m.matmul(&m).expect("square");
            log_scale *= S::of(2.0);
            exponent *= S::of(2.0);
            let n = m.max_abs();
            if n == S::zero() || !n.is_finite() {
                return S::zero();
            }
            m = m.scale(S::one() / n);
            log_scale += n.ln();
        }
        (log_scale / exponent).exp()
    }
}

impl<S: Scalar> Mat<Complex<S>> {
    pub fn re(&self) -> Matrix<S> {
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].re)
    }

    pub fn im(&self) -> Matrix<S> {
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].im)
    }

    /// Eigenvalues of a Hermitian matrix (ascending), via the real symmetric
    /// embedding `[[Re, -Im], [Im, Re]]` whose spectrum doubles each value.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<S>, LinalgError> {
        let n = self.rows;
        let h = self.hermitian_part();
        let big = Matrix::from_fn(2 * n, 2 * n, |i, j| {
            let z = h[(i % n, j % n)];
            match (i < n, j < n) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        });
        let (values, _) = big.symmetric_eigen()?;
        Ok(values.into_iter().step_by(2).collect())
    }
}

/// Packed LU factors with the row permutation.
#[derive(Debug, Clone)]
pub struct Lu<E> {
    lu: Mat<E>,
    perm: Vec<usize>,
    odd: bool,
    condition: f64,
}

impl<E: Element> Lu<E> {
    /// Ratio of the largest to the smallest pivot modulus.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn determinant(&self) -> E {
        let n = self.lu.rows;
        let mut det = if self.odd { -E::one() } else { E::one() };
        for i in 0..n {
            det *= self.lu[(i, i)];
        }
        det
    }

    pub fn solve(&self, rhs: &Mat<E>) -> Result<Mat<E>, LinalgError> {
        let n = self.lu.rows;
        if rhs.rows != n {
            return Err(LinalgError::Dimension(format!(
                "right-hand side has {} rows, system has {n}",
                rhs.rows
            )));
        }
        let m = rhs.cols;
        let mut x = Mat::from_fn(n, m, |i, j| rhs[(self.perm[i], j)]);
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                if l == E::zero() {
                    continue;
                }
                for j in 0..m {
                    let v = x[(k, j)];
                    x[(i, j)] -= l * v;
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[(i, k)];
                if u == E::zero() {
                    continue;
                }
                for j in 0..m {
                    let v = x[(k, j)];
                    x[(i, j)] -= u * v;
                }
            }
            let d = self.lu[(i, i)];
            for j in 0..m {
                x[(i, j)] /= d;
            }
        }
        Ok(x)
    }
}

impl<E> Index<(usize, usize)> for Mat<E> {
    type Output = E;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &E {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<E> IndexMut<(usize, usize)> for Mat<E> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut E {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<E: Element> Add for &Mat<E> {
    type Output = Mat<E>;

    fn add(self, rhs: &Mat<E>) -> Mat<E> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<E: Element> Sub for &Mat<E> {
    type Output = Mat<E>;

    fn sub(self, rhs: &Mat<E>) -> Mat<E> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<E: Element> Mul for &Mat<E> {
    type Output = Mat<E>;

    fn mul(self, rhs: &Mat<E>) -> Mat<E> {
        self.matmul(rhs).expect("shape mismatch in matrix product")
    }
}

impl<E: Element + Serialize> Serialize for Mat<E> {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de, E: Element + Deserialize<'de>> Deserialize<'de> for Mat<E> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<E>>::deserialize(deserializer)?;
        Mat::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Zero-lag complex helper: `e^{iθ}`.
#[inline]
pub fn cis<S: Scalar>(theta: S) -> Complex<S> {
    Complex::new(theta.cos(), theta.sin())
}

/// Convenience: a complex number with zero imaginary part.
#[inline]
pub fn real<S: Scalar>(x: S) -> Complex<S> {
    Complex::new(x, S::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn lu_solves_and_inverts() {
        let a = m(&[&[4.0, 1.0, 2.0], &[1.0, 3.0, 0.0], &[2.0, 0.0, 5.0]]);
        let inv = a.inverse().unwrap();
        let id = &a * &inv;
        assert!((&id - &Matrix::identity(3)).max_abs() < 1e-14);
        assert!((a.determinant() - 43.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(a.lu(), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn complex_inverse() {
        let a = CMatrix::<f64>::from_rows(&[
            vec![Complex::new(2.0, 1.0), Complex::new(0.0, -1.0)],
            vec![Complex::new(1.0, 0.5), Complex::new(3.0, 0.0)],
        ])
        .unwrap();
        let id = &a * &a.inverse().unwrap();
        assert!((&id - &CMatrix::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn jacobi_eigen_and_sqrt() {
        let a = m(&[&[2.0, 0.5, 0.1], &[0.5, 1.0, 0.3], &[0.1, 0.3, 0.7]]);
        let (vals, vecs) = a.symmetric_eigen().unwrap();
        let recon = Matrix::from_fn(3, 3, |i, j| {
            (0..3).map(|k| vecs[(i, k)] * vals[k] * vecs[(j, k)]).sum()
        });
        assert!((&recon - &a).max_abs() < 1e-13);
        let r = a.psd_sqrt().unwrap();
        assert!((&(&r * &r.transpose()) - &a).max_abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let a = m(&[&[1.0, 0.0], &[0.0, -1.0]]);
        assert!(matches!(a.psd_sqrt(), Err(LinalgError::NotPsd(_))));
        // Tiny negative eigenvalues are clamped.
        let b = m(&[&[1.0, 0.0], &[0.0, -1e-13]]);
        let r = b.psd_sqrt().unwrap();
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn spectral_radius_matches_known_values() {
        // Rotation scaled by 0.9: complex eigenvalues of modulus 0.9.
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let a = m(&[&[0.9 * c, -0.9 * s], &[0.9 * s, 0.9 * c]]);
        assert!((a.spectral_radius() - 0.9).abs() < 1e-9);
        // Defective (Jordan) block.
        let j = m(&[&[0.5, 10.0], &[0.0, 0.5]]);
        assert!((j.spectral_radius() - 0.5).abs() < 1e-9);
        // Nilpotent.
        let n = m(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(n.spectral_radius(), 0.0);
        // [[φ,0.2],[0.2,φ]] has eigenvalues φ±0.2.
        let v = m(&[&[0.5, 0.2], &[0.2, 0.5]]);
        assert!((v.spectral_radius() - 0.7).abs() < 1e-9);
    }

    #[test]
    fn hermitian_eigenvalues_of_rank_one() {
        let v = [Complex::new(1.0, 2.0), Complex::new(-0.5, 0.25)];
        let a = CMatrix::<f64>::from_fn(2, 2, |i, j| v[i] * v[j].conj());
        let ev = a.hermitian_eigenvalues().unwrap();
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - norm2).abs() < 1e-12);
    }

    #[test]
    fn serde_rows() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.0]]");
        let b: Matrix<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
        assert!(serde_json::from_str::<Matrix<f64>>("[[1.0],[2.0,3.0]]").is_err());
    }
}
