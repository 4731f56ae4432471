//! Dense Cholesky factorization with a diagonal jitter ladder.
//!
//! The factor is stored as `Lᵀ` in a column-major matrix so that every row of
//! `L` is a contiguous slice; the factorization and both triangular solves then
//! reduce to contiguous dot products and axpys.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// First jitter tried after an unmodified factorization fails.
pub const JITTER_START: f64 = 1e-10;
/// Last jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;
const JITTER_GROWTH: f64 = 10.0;

const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor of `A + jitter·I`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    // column i holds row i of L, i.e. this is Lᵀ
    upper: DMatrix<f64>,
    jitter_used: f64,
    log_det: f64,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.upper.nrows()
    }

    /// Diagonal jitter that was needed for the factorization to succeed.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// `log |A + jitter·I|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// The lower-triangular factor `L`.
    pub fn l(&self) -> DMatrix<f64> {
        self.upper.transpose()
    }

    /// `L·Lᵀ`, i.e. the jittered matrix that was actually factored.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let l = self.l();
        &l * l.transpose()
    }

    /// Solves `L z = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let u = self.upper.as_slice();
        for i in 0..n {
            let row = &u[i * n..i * n + i];
            let s = b[i] - dot(row, &b[..i]);
            b[i] = s / u[i * n + i];
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let u = self.upper.as_slice();
        for i in (0..n).rev() {
            let xi = b[i] / u[i * n + i];
            b[i] = xi;
            let row = &u[i * n..i * n + i];
            for (bk, lik) in b[..i].iter_mut().zip(row) {
                *bk -= xi * lik;
            }
        }
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(x.as_mut_slice());
        self.solve_upper_in_place(x.as_mut_slice());
        x
    }

    /// Replaces every column `c` of `b` by `L⁻¹ c`.
    pub fn solve_lower_columns(&self, b: &mut DMatrix<f64>) {
        assert_eq!(b.nrows(), self.dim());
        for mut col in b.column_iter_mut() {
            self.solve_lower_in_place(col.as_mut_slice());
        }
    }

    /// `bᵀ (L Lᵀ)⁻¹ b`, computed as `‖L⁻¹ b‖²`.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        let mut z = b.to_vec();
        self.solve_lower_in_place(&mut z);
        dot(&z, &z)
    }
}

/// Factors a symmetric matrix, retrying with a growing diagonal jitter
/// (`1e-10`, `1e-9`, …, `1e-4`) when the unmodified matrix is not numerically
/// positive definite.
pub fn chol_with_jitter(a: &DMatrix<f64>) -> Result<CholFactor> {
    check_symmetric(a)?;
    let n = a.nrows();
    let mut upper = DMatrix::zeros(n, n);
    if factor_into(a, 0.0, &mut upper) {
        return Ok(finish(upper, 0.0));
    }
    let mut jitter = JITTER_START;
    loop {
        if factor_into(a, jitter, &mut upper) {
            return Ok(finish(upper, jitter));
        }
        if jitter >= JITTER_MAX * (1.0 - 1e-9) {
            return Err(Error::Factorization { jitter });
        }
        jitter = (jitter * JITTER_GROWTH).min(JITTER_MAX);
    }
}

/// Single factorization attempt of `A + shift·I` with no retries.
pub fn chol_shifted(a: &DMatrix<f64>, shift: f64) -> Option<CholFactor> {
    let n = a.nrows();
    let mut upper = DMatrix::zeros(n, n);
    factor_into(a, shift, &mut upper).then(|| finish(upper, shift))
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            if (x - y).abs() > SYMMETRY_TOL * (1.0 + x.abs().max(y.abs())) {
                return Err(Error::invalid(format!(
                    "matrix not symmetric at ({i},{j}): {x} vs {y}"
                )));
            }
        }
    }
    Ok(())
}

fn finish(upper: DMatrix<f64>, jitter: f64) -> CholFactor {
    let n = upper.nrows();
    let log_det = 2.0 * (0..n).map(|i| upper[(i, i)].ln()).sum::<f64>();
    CholFactor {
        upper,
        jitter_used: jitter,
        log_det,
    }
}

/// Row-by-row (Cholesky–Banachiewicz) factorization of `A + shift·I`, reading
/// the upper triangle of `a`. Returns false when a pivot is not clearly
/// positive: below `8nε` times its diagonal entry it is round-off, and a
/// matrix with an exactly repeated row would otherwise slip through.
fn factor_into(a: &DMatrix<f64>, shift: f64, upper: &mut DMatrix<f64>) -> bool {
    let n = a.nrows();
    let rel_tol = 8.0 * n as f64 * f64::EPSILON;
    let a = a.as_slice();
    let u = upper.as_mut_slice();
    for i in 0..n {
        let (done, rest) = u.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        // A is symmetric, so column i of A (contiguous) supplies A[j][i] for j ≤ i.
        let a_col = &a[i * n..i * n + n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + n];
            let s = a_col[j] - dot(&row_j[..j], &row_i[..j]);
            row_i[j] = s / row_j[j];
        }
        let diag = a_col[i] + shift;
        let s = diag - dot(&row_i[..i], &row_i[..i]);
        if !(s > rel_tol * diag) || !s.is_finite() {
            return false;
        }
        row_i[i] = s.sqrt();
        for v in &mut row_i[i + 1..] {
            *v = 0.0;
        }
    }
    true
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}
