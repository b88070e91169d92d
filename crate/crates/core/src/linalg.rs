//! Dense complex linear algebra for the small (N ≤ 16) Hermitian problems
//! that appear throughout the estimator.
//!
//! Matrices are column-major so that the columns of a data matrix (one
//! snapshot per range bin) are contiguous slices. Inverses are never formed:
//! every `y† H⁻¹ x` goes through the cached Cholesky factor of a
//! [`HermitianPd`].

use std::ops::{Deref, DerefMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative asymmetry above which a matrix is rejected as non-Hermitian
/// instead of being silently symmetrized.
const HERMITIAN_TOL: f64 = 1e-10;

/// Complex column vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVec(pub Vec<C64>);

impl CVec {
    pub fn zeros(n: usize) -> Self {
        Self(vec![C64::new(0.0, 0.0); n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> C64) -> Self {
        Self((0..n).map(f).collect())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|x| x.norm_sqr()).sum()
    }

    /// `self† other`
    pub fn dot(&self, other: &[C64]) -> C64 {
        dot(&self.0, other)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }
}

impl Deref for CVec {
    type Target = [C64];
    fn deref(&self) -> &[C64] {
        &self.0
    }
}

impl DerefMut for CVec {
    fn deref_mut(&mut self) -> &mut [C64] {
        &mut self.0
    }
}

impl From<Vec<C64>> for CVec {
    fn from(v: Vec<C64>) -> Self {
        Self(v)
    }
}

/// `x† y`
#[inline]
pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Dense complex matrix, column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major nested slices; convenient for literals.
    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn from_columns(columns: &[CVec]) -> Self {
        let rows = columns.first().map_or(0, |c| c.len());
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend_from_slice(c);
        }
        Self {
            rows,
            cols: columns.len(),
            data,
        }
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn col(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [C64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[C64]> {
        self.data.chunks_exact(self.rows.max(1)).take(self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.scale(s);
        self
    }

    pub fn add_assign(&mut self, other: &CMat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows);
        let mut out = CMat::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for l in 0..self.cols {
                let b = other[(l, j)];
                if b == C64::new(0.0, 0.0) {
                    continue;
                }
                for i in 0..self.rows {
                    out.data[j * self.rows + i] += self.data[l * self.rows + i] * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C64]) -> CVec {
        assert_eq!(self.cols, x.len());
        let mut out = CVec::zeros(self.rows);
        for (j, xj) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.col(j)) {
                *o += a * xj;
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `‖H − H†‖_F / ‖H‖_F` (zero for the zero matrix).
    pub fn hermitian_residual(&self) -> f64 {
        assert!(self.is_square());
        let norm = self.frobenius();
        if norm == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in 0..self.cols {
            for i in 0..self.rows {
                acc += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt() / norm
    }

    /// Replaces `H` by `(H + H†)/2`.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        let n = self.rows;
        for j in 0..n {
            let d = self[(j, j)];
            self[(j, j)] = C64::new(d.re, 0.0);
            for i in j + 1..n {
                let avg = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                self[(i, j)] = avg;
                self[(j, i)] = avg.conj();
            }
        }
    }

    /// In place `self += w · x x†`, writing each off-diagonal pair as an exact
    /// conjugate pair so Hermitian structure is preserved bit for bit.
    pub fn add_outer(&mut self, x: &[C64], w: f64) {
        let n = self.rows;
        assert!(self.is_square() && x.len() == n);
        for j in 0..n {
            let xj = x[j].conj() * w;
            self.data[j * n + j] += C64::new(w * x[j].norm_sqr(), 0.0);
            for i in j + 1..n {
                let v = x[i] * xj;
                self.data[j * n + i] += v;
                self.data[i * n + j] += v.conj();
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|x| x.re.is_finite() && x.im.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[j * self.rows + i]
    }
}

/// `acc + w · x x†`.
pub fn accumulate_outer(acc: &CMat, x: &[C64], w: f64) -> CMat {
    debug_assert!(w >= 0.0);
    let mut out = acc.clone();
    out.add_outer(x, w);
    out
}

/// Lower-triangular Cholesky factor `L` with `L L† = h`.
///
/// The input is symmetrized first; a non-positive (or non-finite) pivot is
/// reported as [`Error::NotPositiveDefinite`].
pub fn cholesky(h: &CMat) -> Result<CMat> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            got: h.cols(),
        });
    }
    let mut a = h.clone();
    a.symmetrize();
    factor_in_place(a)
}

fn factor_in_place(a: CMat) -> Result<CMat> {
    let n = a.rows;
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        let inv = 1.0 / ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s * inv;
        }
    }
    Ok(l)
}

/// Hermitian positive-definite matrix with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPd {
    mat: CMat,
    factor: CMat,
}

impl HermitianPd {
    /// Symmetrizes and factors `mat`. Fails if `mat` is visibly non-Hermitian
    /// or if any pivot is non-positive.
    pub fn new(mut mat: CMat) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::DimensionMismatch {
                expected: mat.rows(),
                got: mat.cols(),
            });
        }
        let resid = mat.hermitian_residual();
        if !(resid <= HERMITIAN_TOL) {
            return Err(Error::NotHermitian(resid));
        }
        mat.symmetrize();
        let factor = factor_in_place(mat.clone())?;
        Ok(Self { mat, factor })
    }

    /// Factors `mat`, retrying once with diagonal loading `eps · tr(mat)/N`
    /// if the plain factorization fails.
    pub fn new_with_loading(mat: CMat, eps: f64) -> Result<Self> {
        match Self::new(mat.clone()) {
            Ok(h) => Ok(h),
            Err(Error::NotPositiveDefinite { .. }) => {
                let n = mat.rows();
                let load = eps * mat.trace().re / n as f64;
                let mut loaded = mat;
                for i in 0..n {
                    loaded[(i, i)] += C64::new(load, 0.0);
                }
                Self::new(loaded)
            }
            Err(e) => Err(e),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mat: CMat::identity(n),
            factor: CMat::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn cholesky(&self) -> &CMat {
        &self.factor
    }

    /// Forward substitution: returns `L⁻¹ x`.
    pub fn whiten(&self, x: &[C64]) -> CVec {
        let mut out = CVec(x.to_vec());
        self.whiten_in_place(&mut out);
        out
    }

    pub fn whiten_in_place(&self, x: &mut [C64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        let l = &self.factor;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[(i, k)] * x[k];
            }
            x[i] = s / l[(i, i)].re;
        }
    }

    /// `y† H⁻¹ x`
    pub fn quad_form(&self, x: &[C64], y: &[C64]) -> C64 {
        let wx = self.whiten(x);
        let wy = self.whiten(y);
        dot(&wy, &wx)
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim())
            .map(|i| self.factor[(i, i)].re.ln())
            .sum::<f64>()
    }
}

/// `y† h⁻¹ x` via two triangular solves.
pub fn quad_form(h: &HermitianPd, x: &[C64], y: &[C64]) -> Result<C64> {
    let n = h.dim();
    for len in [x.len(), y.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    Ok(h.quad_form(x, y))
}

pub fn logdet(h: &HermitianPd) -> f64 {
    h.logdet()
}
