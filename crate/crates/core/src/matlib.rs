//! Small dense real linear algebra.
//!
//! Only what the transmission-policy design needs: a row-major [`Matrix`],
//! a Lyapunov solver built on Kronecker vectorization, Cholesky-based
//! definiteness tests, and cyclic Jacobi for symmetric eigenvalue bounds.
//! Every system in scope is tiny (n ≤ ~8), so nothing here is blocked or
//! cache-aware.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative residual accepted from [`solve_lyapunov`].
pub const LYAPUNOV_RTOL: f64 = 1e-8;
/// Relative pivot magnitude below which elimination declares singularity.
pub const PIVOT_RTOL: f64 = 1e-12;
/// Relative asymmetry tolerated by symmetric routines.
pub const SYMMETRY_RTOL: f64 = 1e-9;
/// Jacobi stops once the off-diagonal norm drops below this fraction of ‖S‖.
pub const JACOBI_RTOL: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} exceeds {tolerance:.3e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },
    #[error("Lyapunov equation is singular or ill-conditioned: {0}")]
    SingularLyapunov(String),
}

/// Numerical tolerances used by this module. `Default` gives the module
/// constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub lyapunov_rtol: f64,
    pub pivot_rtol: f64,
    pub symmetry_rtol: f64,
    pub jacobi_rtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            lyapunov_rtol: LYAPUNOV_RTOL,
            pivot_rtol: PIVOT_RTOL,
            symmetry_rtol: SYMMETRY_RTOL,
            jacobi_rtol: JACOBI_RTOL,
        }
    }
}

/// Dense real matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if rows * cols != data.len() {
            return Err(MatError::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatError::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. All rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(MatError::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Column vector as an n×1 matrix.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, MatError> {
        if self.cols != rhs.rows {
            return Err(MatError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Accumulates `self · v` into `out` (out += M v).
    pub fn mul_vec_add(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.cols, "mul_vec_add dimension mismatch");
        assert_eq!(out.len(), self.rows, "mul_vec_add dimension mismatch");
        for (i, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(i), v);
        }
    }

    fn zip_with(&self, rhs: &Matrix, op: impl Fn(f64, f64) -> f64) -> Result<Matrix, MatError> {
        if self.shape() != rhs.shape() {
            return Err(MatError::Dimension(format!(
                "shape {:?} vs {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| op(*a, *b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix, MatError> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix, MatError> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest |S_ij − S_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows.min(self.cols) {
            for j in i + 1..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetrized(&self) -> Matrix {
        let t = self.transpose();
        self.zip_with(&t, |a, b| 0.5 * (a + b))
            .expect("square matrix symmetrization")
    }

    /// Quadratic form vᵀ M v.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }

    /// Copies `block` into this matrix with its top-left corner at (r0, c0).
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    /// Block-diagonal assembly `diag(a, b)`.
    pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows + b.rows, a.cols + b.cols);
        out.set_block(0, 0, a);
        out.set_block(a.rows, a.cols, b);
        out
    }

    fn require_square(&self) -> Result<usize, MatError> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(MatError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    fn require_symmetric(&self, rtol: f64) -> Result<usize, MatError> {
        let n = self.require_square()?;
        let tolerance = rtol * self.frobenius_norm().max(f64::MIN_POSITIVE);
        let asymmetry = self.asymmetry();
        if asymmetry > tolerance {
            return Err(MatError::NotSymmetric {
                asymmetry,
                tolerance,
            });
        }
        Ok(n)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.to_rows())
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = MatError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Solves AᵀP + PA = −Q for symmetric P.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix, MatError> {
    solve_lyapunov_with(a, q, &Tolerances::default())
}

pub fn solve_lyapunov_with(a: &Matrix, q: &Matrix, tol: &Tolerances) -> Result<Matrix, MatError> {
    let n = a.require_square()?;
    if q.shape() != (n, n) {
        return Err(MatError::Dimension(format!(
            "Q is {:?}, A is {n}x{n}",
            q.shape()
        )));
    }
    q.require_symmetric(tol.symmetry_rtol)?;

    // Unknown P(k, l) lives at column k*n + l; equation (i, j) at row i*n + j:
    //   sum_k A(k,i) P(k,j) + sum_k P(i,k) A(k,j) = -Q(i,j)
    let m = n * n;
    let mut kron = Matrix::zeros(m, m);
    let mut rhs = vec![0.0; m];
    for i in 0..n {
        for j in 0..n {
            let r = i * n + j;
            for k in 0..n {
                kron[(r, k * n + j)] += a[(k, i)];
                kron[(r, i * n + k)] += a[(k, j)];
            }
            rhs[r] = -q[(i, j)];
        }
    }

    let sol = gauss_solve(kron, rhs, tol.pivot_rtol)?;
    let p = Matrix::new(n, n, sol)
        .map_err(|e| MatError::SingularLyapunov(format!("non-finite solution ({e})")))?
        .symmetrized();

    let residual = lyapunov_residual(a, &p, q);
    let bound = tol.lyapunov_rtol * q.frobenius_norm().max(f64::MIN_POSITIVE);
    if residual > bound {
        return Err(MatError::SingularLyapunov(format!(
            "residual {residual:.3e} exceeds {bound:.3e}"
        )));
    }
    Ok(p)
}

/// Frobenius norm of AᵀP + PA + Q.
pub fn lyapunov_residual(a: &Matrix, p: &Matrix, q: &Matrix) -> f64 {
    let at = a.transpose();
    let lhs = at
        .matmul(p)
        .and_then(|x| x.add(&p.matmul(a)?))
        .and_then(|x| x.add(q))
        .expect("Lyapunov residual dimensions");
    lhs.frobenius_norm()
}

/// Gaussian elimination with partial pivoting on a dense square system.
fn gauss_solve(mut m: Matrix, mut b: Vec<f64>, pivot_rtol: f64) -> Result<Vec<f64>, MatError> {
    let n = m.rows();
    let scale = m.max_abs();
    if scale == 0.0 {
        return Err(MatError::SingularLyapunov("zero operator".into()));
    }
    let threshold = pivot_rtol * scale;
    for col in 0..n {
        let (piv, piv_abs) =
            (col..n)
                .map(|r| (r, m[(r, col)].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if piv_abs < threshold {
            return Err(MatError::SingularLyapunov(format!(
                "pivot {piv_abs:.3e} below {threshold:.3e} in column {col}"
            )));
        }
        if piv != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            b.swap(col, piv);
        }
        let d = m[(col, col)];
        for r in col + 1..n {
            let f = m[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[(r, j)] -= f * m[(col, j)];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (b[i] - s) / m[(i, i)];
    }
    Ok(x)
}

/// Cholesky test: true iff every pivot is strictly positive.
pub fn is_positive_definite(s: &Matrix) -> Result<bool, MatError> {
    let n = s.require_symmetric(SYMMETRY_RTOL)?;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Ok(false);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(true)
}

/// Outcome of a Hurwitz test, with the reason when it fails.
#[derive(Debug, Clone, PartialEq)]
pub struct HurwitzReport {
    pub hurwitz: bool,
    pub reason: Option<String>,
}

/// Lyapunov criterion: A is Hurwitz iff AᵀP + PA = −I has a positive
/// definite solution.
pub fn check_hurwitz(a: &Matrix) -> HurwitzReport {
    let fail = |reason: String| HurwitzReport {
        hurwitz: false,
        reason: Some(reason),
    };
    if !a.is_square() {
        return fail(format!("matrix is {}x{}, not square", a.rows(), a.cols()));
    }
    match solve_lyapunov(a, &Matrix::identity(a.rows())) {
        Err(e) => fail(e.to_string()),
        Ok(p) => match is_positive_definite(&p) {
            Ok(true) => HurwitzReport {
                hurwitz: true,
                reason: None,
            },
            Ok(false) => fail("Lyapunov solution is not positive definite".into()),
            Err(e) => fail(e.to_string()),
        },
    }
}

pub fn is_hurwitz(a: &Matrix) -> bool {
    check_hurwitz(a).hurwitz
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi.
pub fn sym_eigenvalues(s: &Matrix) -> Result<Vec<f64>, MatError> {
    sym_eigenvalues_with(s, &Tolerances::default())
}

pub fn sym_eigenvalues_with(s: &Matrix, tol: &Tolerances) -> Result<Vec<f64>, MatError> {
    let n = s.require_symmetric(tol.symmetry_rtol)?;
    let mut a = s.symmetrized();
    let target = tol.jacobi_rtol * s.frobenius_norm();
    let off_norm = |a: &Matrix| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[(i, j)] * a[(i, j)];
                }
            }
        }
        acc.sqrt()
    };

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- Jᵀ A J with the rotation in the (p, q) plane
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
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Extreme eigenvalues (λ_min, λ_max) of a symmetric matrix.
pub fn sym_eig_bounds(s: &Matrix) -> Result<(f64, f64), MatError> {
    let eig = sym_eigenvalues(s)?;
    match (eig.first(), eig.last()) {
        (Some(lo), Some(hi)) => Ok((*lo, *hi)),
        _ => Err(MatError::Dimension(
            "empty matrix has no eigenvalues".into(),
        )),
    }
}

/// Induced 2-norm, sqrt(λ_max(MᵀM)).
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let gram = m.transpose().matmul(m).expect("gram dimensions");
    let (_, hi) = sym_eig_bounds(&gram).expect("gram matrix is symmetric");
    hi.max(0.0).sqrt()
}
