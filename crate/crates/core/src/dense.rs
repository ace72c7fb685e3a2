//! Dense row-major matrices and the small-block kernels used inside the
//! structured factorizations.
//!
//! Kernels operate on plain row-major slices so the structured code can keep
//! its blocks in flat arenas. Pivot vectors follow the LAPACK convention: at
//! elimination step `k` rows `k` and `piv[k]` were exchanged.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMatrix {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        gemm_acc(
            &mut out.data,
            &self.data,
            &other.data,
            self.rows,
            self.cols,
            other.cols,
            1.0,
        );
        out
    }

    /// `y = A x`, summing each row left to right.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| {
                let mut acc = 0.0;
                for (a, b) in self.row(i).iter().zip(x) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scaled(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|a| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.data[i * cols + j] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, a| m.max(a.abs()))
}

/// `C += alpha * A * B` with `A` m×k, `B` k×n, all row-major.
pub fn gemm_acc(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize, alpha: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for l in 0..k {
            let s = alpha * a[i * k + l];
            if s == 0.0 {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += s * bv;
            }
        }
    }
}

/// `y += alpha * A x` with `A` m×k row-major.
pub fn gemv_acc(y: &mut [f64], a: &[f64], x: &[f64], m: usize, k: usize, alpha: f64) {
    debug_assert_eq!(a.len(), m * k);
    for i in 0..m {
        let mut acc = 0.0;
        for l in 0..k {
            acc += a[i * k + l] * x[l];
        }
        y[i] += alpha * acc;
    }
}

/// `y += alpha * Aᵀ x` with `A` m×k row-major (so `x` has length m).
pub fn gemv_t_acc(y: &mut [f64], a: &[f64], x: &[f64], m: usize, k: usize, alpha: f64) {
    debug_assert_eq!(a.len(), m * k);
    for i in 0..m {
        let s = alpha * x[i];
        if s == 0.0 {
            continue;
        }
        for l in 0..k {
            y[l] += s * a[i * k + l];
        }
    }
}

/// In-place LU of an n×n block. With `pivot` false the row exchanges are the
/// identity. Returns the failing column on an exactly zero (or non-finite) pivot.
pub fn lu_factor(a: &mut [f64], n: usize, piv: &mut [usize], pivot: bool) -> std::result::Result<(), usize> {
    for k in 0..n {
        let mut p = k;
        if pivot {
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
        }
        piv[k] = p;
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
        }
        let d = a[k * n + k];
        if d == 0.0 || !d.is_finite() {
            return Err(k);
        }
        for i in k + 1..n {
            let l = a[i * n + k] / d;
            a[i * n + k] = l;
            if l != 0.0 {
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
    }
    Ok(())
}

/// `b <- L⁻¹ P b`.
pub fn lu_apply_pl_inv(a: &[f64], n: usize, piv: &[usize], b: &mut [f64]) {
    for k in 0..n {
        if piv[k] != k {
            b.swap(k, piv[k]);
        }
    }
    for i in 1..n {
        let mut acc = b[i];
        for j in 0..i {
            acc -= a[i * n + j] * b[j];
        }
        b[i] = acc;
    }
}

/// `b <- U⁻¹ b`.
pub fn lu_apply_u_inv(a: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= a[i * n + j] * b[j];
        }
        b[i] = acc / a[i * n + i];
    }
}

/// `b <- U⁻ᵀ b`.
pub fn lu_apply_u_inv_t(a: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut acc = b[i];
        for j in 0..i {
            acc -= a[j * n + i] * b[j];
        }
        b[i] = acc / a[i * n + i];
    }
}

/// `b <- (L⁻¹P)ᵀ b = Pᵀ L⁻ᵀ b`.
pub fn lu_apply_pl_inv_t(a: &[f64], n: usize, piv: &[usize], b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= a[j * n + i] * b[j];
        }
        b[i] = acc;
    }
    for k in (0..n).rev() {
        if piv[k] != k {
            b.swap(k, piv[k]);
        }
    }
}

/// `b <- Pᵀ L b` (the inverse of [`lu_apply_pl_inv`]).
pub fn lu_apply_pl(a: &[f64], n: usize, piv: &[usize], b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in 0..i {
            acc += a[i * n + j] * b[j];
        }
        b[i] = acc;
    }
    for k in (0..n).rev() {
        if piv[k] != k {
            b.swap(k, piv[k]);
        }
    }
}

/// `b <- U b`.
pub fn lu_apply_u(a: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut acc = 0.0;
        for j in i..n {
            acc += a[i * n + j] * b[j];
        }
        b[i] = acc;
    }
}

/// Solves with a factor from [`lu_factor`].
pub fn lu_solve(a: &[f64], n: usize, piv: &[usize], b: &mut [f64]) {
    lu_apply_pl_inv(a, n, piv, b);
    lu_apply_u_inv(a, n, b);
}

/// Solves `Aᵀ x = b` with a factor from [`lu_factor`].
pub fn lu_solve_t(a: &[f64], n: usize, piv: &[usize], b: &mut [f64]) {
    lu_apply_u_inv_t(a, n, b);
    lu_apply_pl_inv_t(a, n, piv, b);
}

/// Replaces the row-major m×k matrix `x` (k right-hand sides laid out as
/// columns) by `f(column)` column by column.
pub fn map_columns(x: &mut [f64], m: usize, k: usize, mut f: impl FnMut(&mut [f64])) {
    let mut col = vec![0.0; m];
    for j in 0..k {
        for i in 0..m {
            col[i] = x[i * k + j];
        }
        f(&mut col);
        for i in 0..m {
            x[i * k + j] = col[i];
        }
    }
}

/// Householder QR of a rows×cols block (rows ≥ cols) in LAPACK layout: R in
/// the upper triangle, reflector tails below the diagonal, scalars in `tau`.
pub fn householder_qr(a: &mut [f64], rows: usize, cols: usize, tau: &mut [f64]) {
    debug_assert!(rows >= cols);
    for k in 0..cols {
        let mut norm2 = 0.0;
        for i in k + 1..rows {
            norm2 += a[i * cols + k] * a[i * cols + k];
        }
        let alpha = a[k * cols + k];
        if norm2 == 0.0 {
            tau[k] = 0.0;
            continue;
        }
        let norm = (alpha * alpha + norm2).sqrt();
        let beta = if alpha >= 0.0 { -norm } else { norm };
        tau[k] = (beta - alpha) / beta;
        let scale = 1.0 / (alpha - beta);
        for i in k + 1..rows {
            a[i * cols + k] *= scale;
        }
        a[k * cols + k] = beta;
        for j in k + 1..cols {
            let mut s = a[k * cols + j];
            for i in k + 1..rows {
                s += a[i * cols + k] * a[i * cols + j];
            }
            s *= tau[k];
            a[k * cols + j] -= s;
            for i in k + 1..rows {
                a[i * cols + j] -= s * a[i * cols + k];
            }
        }
    }
}

/// `b <- Qᵀ b` for the reflectors stored by [`householder_qr`].
pub fn qr_apply_qt(a: &[f64], rows: usize, cols: usize, tau: &[f64], b: &mut [f64]) {
    for k in 0..cols {
        apply_reflector(a, rows, cols, tau[k], k, b);
    }
}

/// `b <- Q b`.
pub fn qr_apply_q(a: &[f64], rows: usize, cols: usize, tau: &[f64], b: &mut [f64]) {
    for k in (0..cols).rev() {
        apply_reflector(a, rows, cols, tau[k], k, b);
    }
}

fn apply_reflector(a: &[f64], rows: usize, cols: usize, tau: f64, k: usize, b: &mut [f64]) {
    if tau == 0.0 {
        return;
    }
    let mut s = b[k];
    for i in k + 1..rows {
        s += a[i * cols + k] * b[i];
    }
    s *= tau;
    b[k] -= s;
    for i in k + 1..rows {
        b[i] -= s * a[i * cols + k];
    }
}

/// Singular values of a rows×cols block by one-sided Jacobi rotations,
/// sorted in decreasing order.
pub fn singular_values(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    // work on columns of A (or of Aᵀ when wide)
    let (m, n, mut w) = if rows >= cols {
        (rows, cols, a.to_vec())
    } else {
        let mut t = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = a[i * cols + j];
            }
        }
        (cols, rows, t)
    };
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (w[i * n + p], w[i * n + q]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (w[i * n + p], w[i * n + q]);
                    w[i * n + p] = c * x - s * y;
                    w[i * n + q] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[i * n + j] * w[i * n + j]).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// LU with partial pivoting of a dense square matrix.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch(format!(
                "LU of a non-square {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut lu = a.as_slice().to_vec();
        let mut piv = vec![0; n];
        lu_factor(&mut lu, n, &mut piv, true).map_err(Error::SingularBlock)?;
        Ok(DenseLu { n, lu, piv })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        lu_solve(&self.lu, self.n, &self.piv, b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_matrix(&self, b: &DenseMatrix) -> DenseMatrix {
        let mut out = b.clone();
        map_columns(out.as_mut_slice(), b.rows(), b.cols(), |c| self.solve_in_place(c));
        out
    }

    pub fn inverse(&self) -> DenseMatrix {
        self.solve_matrix(&DenseMatrix::identity(self.n))
    }
}
