//! Dense real matrix arithmetic, Kronecker calculus, the `vec` operator and
//! the eigenvalue routines every spectral-radius evaluation goes through.
//!
//! Matrices are stored row-major. Eigenvalues of general matrices come from
//! balancing, reduction to upper Hessenberg form by stabilised elementary
//! similarity transforms, and Francis double-shift QR iteration. Symmetric
//! problems use cyclic Jacobi rotations.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default ceiling on the number of entries of any lifted matrix.
pub const DEFAULT_MAX_LIFT_ENTRIES: usize = 10_000_000;

static MAX_LIFT_ENTRIES: AtomicUsize = AtomicUsize::new(DEFAULT_MAX_LIFT_ENTRIES);

/// Current process-wide cap on lifted matrix entries.
pub fn lift_cap() -> usize {
    MAX_LIFT_ENTRIES.load(Ordering::Relaxed)
}

/// Overrides the process-wide lift cap. Intended for the CLI front-end.
pub fn set_lift_cap(entries: usize) {
    MAX_LIFT_ENTRIES.store(entries.max(1), Ordering::Relaxed);
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error(
        "lifted matrix of {rows}x{cols} ({requested} entries) exceeds the cap of {cap} entries"
    )]
    DimensionCap {
        rows: usize,
        cols: usize,
        requested: u128,
        cap: usize,
    },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix must have at least one row and column")]
    Empty,
    #[error("{routine} did not converge after {iterations} iterations ({} eigenvalues found)", partial.len())]
    SolverFailure {
        routine: &'static str,
        iterations: usize,
        partial: Vec<Complex64>,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense real matrix, row-major, finite entries.
#[derive(Clone, PartialEq)]
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
    /// Builds a matrix from row-major data, rejecting empty shapes and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::Shape(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(LinalgError::Shape(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
        Self::new(nrows, ncols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
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

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// Block-diagonal matrix with the given square blocks.
    pub fn block_diagonal(blocks: &[Matrix]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(LinalgError::Empty);
        }
        let n: usize = blocks.iter().map(|b| b.rows).sum();
        let m: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(n, m);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out[(r0 + i, c0 + j)] = b[(i, j)];
                }
            }
            r0 += b.rows;
            c0 += b.cols;
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Dimension of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
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

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(LinalgError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(LinalgError::Shape(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Row vector times matrix, `xᵀ M`.
    pub fn vec_mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(LinalgError::Shape(format!(
                "row vector of length {} against {} rows",
                x.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
        Ok(out)
    }

    fn zip_with(&self, rhs: &Matrix, op: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(LinalgError::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        })
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * rhs`, shapes must agree.
    pub fn axpy(&mut self, s: f64, rhs: &Matrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Induced ∞-norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest singular value, computed as the root of the top eigenvalue
    /// of `MᵀM`.
    pub fn norm_spectral(&self) -> Result<f64> {
        let gram = self.transpose().matmul(self)?;
        let eig = symmetric_eigenvalues(&gram)?;
        Ok(eig.last().copied().unwrap_or(0.0).max(0.0).sqrt())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn is_positive(&self) -> bool {
        self.data.iter().all(|&v| v > 0.0)
    }

    /// Largest absolute asymmetry `max |S - Sᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetric_part(&self) -> Matrix {
        let t = self.transpose();
        self.zip_with(&t, |a, b| 0.5 * (a + b))
            .expect("square matrix")
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

fn check_cap(rows: usize, cols: usize, cap: usize) -> Result<()> {
    let requested = rows as u128 * cols as u128;
    if requested > cap as u128 {
        return Err(LinalgError::DimensionCap {
            rows,
            cols,
            requested,
            cap,
        });
    }
    Ok(())
}

/// Kronecker product under the process-wide lift cap.
pub fn kron(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    kron_with_cap(a, b, lift_cap())
}

/// Kronecker product: block `(i, j)` of the result is `a[i, j] · b`.
pub fn kron_with_cap(a: &Matrix, b: &Matrix, cap: usize) -> Result<Matrix> {
    let rows = a.rows.saturating_mul(b.rows);
    let cols = a.cols.saturating_mul(b.cols);
    check_cap(rows, cols, cap)?;
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for k in 0..b.rows {
                let dst = (i * b.rows + k) * cols + j * b.cols;
                let src = b.row(k);
                for (o, &v) in out.data[dst..dst + b.cols].iter_mut().zip(src) {
                    *o = s * v;
                }
            }
        }
    }
    Ok(out)
}

/// `p`-fold Kronecker power under the process-wide lift cap.
pub fn kron_power(m: &Matrix, p: u32) -> Result<Matrix> {
    kron_power_with_cap(m, p, lift_cap())
}

pub fn kron_power_with_cap(m: &Matrix, p: u32, cap: usize) -> Result<Matrix> {
    if p == 0 {
        return Err(LinalgError::Precondition(
            "Kronecker power must be positive".into(),
        ));
    }
    let rows = checked_pow(m.rows, p);
    let cols = checked_pow(m.cols, p);
    check_cap(rows, cols, cap)?;
    let mut acc = m.clone();
    for _ in 1..p {
        acc = kron_with_cap(&acc, m, cap)?;
    }
    Ok(acc)
}

pub(crate) fn checked_pow(base: usize, exp: u32) -> usize {
    base.checked_pow(exp).unwrap_or(usize::MAX)
}

pub fn kron_vec(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter()
        .flat_map(|&a| y.iter().map(move |&b| a * b))
        .collect()
}

/// `x^{⊗q}` for a vector.
pub fn kron_power_vec(x: &[f64], q: u32) -> Vec<f64> {
    let mut acc = x.to_vec();
    for _ in 1..q.max(1) {
        acc = kron_vec(&acc, x);
    }
    acc
}

/// Stacks equally sized columns into one vector, in list order.
pub fn vec_of(columns: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = columns.first().map(Vec::len).ok_or(LinalgError::Empty)?;
    if let Some((i, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != d) {
        return Err(LinalgError::Shape(format!(
            "column {i} has length {}, expected {d}",
            c.len()
        )));
    }
    Ok(columns.concat())
}

/// Inverse of [`vec_of`]: splits a vector into `n` consecutive columns.
pub fn unvec(v: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || !v.len().is_multiple_of(n) {
        return Err(LinalgError::Shape(format!(
            "cannot split length {} into {n} columns",
            v.len()
        )));
    }
    Ok(v.chunks(v.len() / n).map(<[f64]>::to_vec).collect())
}

/// Column-major vectorisation of a matrix.
pub fn vec_matrix(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.rows * m.cols);
    for j in 0..m.cols {
        for i in 0..m.rows {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vec_matrix`] for a square `n x n` result.
pub fn unvec_square(v: &[f64], n: usize) -> Result<Matrix> {
    if v.len() != n * n {
        return Err(LinalgError::Shape(format!(
            "length {} is not {n}x{n}",
            v.len()
        )));
    }
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] = v[j * n + i];
        }
    }
    Ok(m)
}

/// Eigenvalues of a square matrix together with their maximum modulus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub spectral_radius: f64,
}

impl Spectrum {
    fn from_eigenvalues(mut eigenvalues: Vec<Complex64>) -> Self {
        eigenvalues.sort_by(|a, b| {
            b.norm()
                .total_cmp(&a.norm())
                .then(b.re.total_cmp(&a.re))
                .then(b.im.total_cmp(&a.im))
        });
        let spectral_radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Self {
            eigenvalues,
            spectral_radius,
        }
    }
}

/// All eigenvalues of `m`.
pub fn spectrum(m: &Matrix) -> Result<Spectrum> {
    if !m.is_square() {
        return Err(LinalgError::Shape(format!(
            "spectrum of a non-square {}x{} matrix",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    if n == 1 {
        return Ok(Spectrum::from_eigenvalues(vec![Complex64::new(
            m.data[0], 0.0,
        )]));
    }
    let mut h = OneBased::from_matrix(m);
    balance(&mut h);
    reduce_to_hessenberg(&mut h);
    let eig = hessenberg_qr(&mut h, 100 * n)?;
    Ok(Spectrum::from_eigenvalues(eig))
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(spectrum(m)?.spectral_radius)
}

/// Square work array indexed from 1, which keeps the Hessenberg/QR loops
/// aligned with their classical formulation.
struct OneBased {
    n: usize,
    a: Vec<f64>,
}

impl OneBased {
    fn from_matrix(m: &Matrix) -> Self {
        let n = m.rows;
        let mut a = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                a[(i + 1) * (n + 1) + j + 1] = m[(i, j)];
            }
        }
        Self { n, a }
    }
}

impl Index<(usize, usize)> for OneBased {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i * (self.n + 1) + j]
    }
}

impl IndexMut<(usize, usize)> for OneBased {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i * (self.n + 1) + j]
    }
}

/// Diagonal similarity scaling by powers of two so that row and column
/// norms are comparable.
fn balance(a: &mut OneBased) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let n = a.n;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 1..=n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 1..=n {
                        a[(i, j)] *= g;
                    }
                    for j in 1..=n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
    }
}

/// Gaussian elimination with partial pivoting to upper Hessenberg form.
fn reduce_to_hessenberg(a: &mut OneBased) {
    let n = a.n;
    for m in 2..n {
        let mut x: f64 = 0.0;
        let mut i = m;
        for j in m..=n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                let t = a[(i, j)];
                a[(i, j)] = a[(m, j)];
                a[(m, j)] = t;
            }
            for j in 1..=n {
                let t = a[(j, i)];
                a[(j, i)] = a[(j, m)];
                a[(j, m)] = t;
            }
        }
        if x != 0.0 {
            for i in (m + 1)..=n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..=n {
                        let v = a[(m, j)];
                        a[(i, j)] -= y * v;
                    }
                    for j in 1..=n {
                        let v = a[(j, i)];
                        a[(j, m)] += y * v;
                    }
                }
            }
        }
    }
    for i in 3..=n {
        for j in 1..(i - 1) {
            a[(i, j)] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix. `budget` bounds
/// the total number of QR sweeps; on exhaustion the eigenvalues deflated so
/// far are returned inside the error.
fn hessenberg_qr(a: &mut OneBased, budget: usize) -> Result<Vec<Complex64>> {
    let n = a.n;
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let mut sweeps = 0usize;
    let (mut p, mut q, mut r): (f64, f64, f64);
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() <= f64::EPSILON * s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nn, nn)];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[(nn - 1, nn - 1)];
            let mut w = a[(nn, nn - 1)] * a[(nn - 1, nn)];
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != 0.0 {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn -= 2;
                break;
            }
            if sweeps >= budget {
                let partial = ((nn + 1)..=n)
                    .map(|i| Complex64::new(wr[i], wi[i]))
                    .collect();
                return Err(LinalgError::SolverFailure {
                    routine: "hessenberg QR",
                    iterations: sweeps,
                    partial,
                });
            }
            if its > 0 && its.is_multiple_of(10) {
                // exceptional shift
                t += x;
                for i in 1..=nn {
                    a[(i, i)] -= x;
                }
                let s = a[(nn, nn - 1)].abs() + a[(nn - 1, nn - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            sweeps += 1;
            let mut m = nn - 2;
            let mut z;
            loop {
                z = a[(m, m)];
                let r0 = x - z;
                let s0 = y - z;
                p = (r0 * s0 - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - r0 - s0;
                r = a[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                a[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = 0.0;
                    if k != nn - 1 {
                        r = a[(k + 2, k - 1)];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = a[(k, j)] + q * a[(k + 1, j)];
                        if k != nn - 1 {
                            p += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= p * z;
                        }
                        a[(k + 1, j)] -= p * y;
                        a[(k, j)] -= p * x;
                    }
                    let mmin = nn.min(k + 3);
                    for i in l..=mmin {
                        p = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k != nn - 1 {
                            p += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= p * r;
                        }
                        a[(i, k + 1)] -= p * q;
                        a[(i, k)] -= p;
                    }
                }
                k += 1;
            }
        }
    }
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

/// Eigenvalues of the symmetric part of `s`, ascending, by cyclic Jacobi
/// rotations.
pub fn symmetric_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    if !s.is_square() {
        return Err(LinalgError::Shape(
            "symmetric eigenproblem needs a square matrix".into(),
        ));
    }
    let n = s.rows;
    let mut a = s.symmetric_part();
    const MAX_SWEEPS: usize = 100;
    for sweep in 0..=MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= f64::EPSILON * f64::EPSILON * diag.max(f64::MIN_POSITIVE) || off == 0.0 {
            break;
        }
        if sweep == MAX_SWEEPS {
            let partial = (0..n).map(|i| Complex64::new(a[(i, i)], 0.0)).collect();
            return Err(LinalgError::SolverFailure {
                routine: "Jacobi",
                iterations: sweep,
                partial,
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = sign(1.0, theta) / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// `true` iff the smallest eigenvalue of `(S + Sᵀ)/2` is at least `-tol`.
/// `S` must be symmetric to within `tol`.
pub fn is_positive_semidefinite(s: &Matrix, tol: f64) -> Result<bool> {
    let asym = s.asymmetry();
    if asym > tol {
        return Err(LinalgError::Precondition(format!(
            "matrix is not symmetric (max asymmetry {asym:e} > {tol:e})"
        )));
    }
    let eig = symmetric_eigenvalues(s)?;
    Ok(eig[0] >= -tol)
}

/// Lower-triangular Cholesky factor `L` with `S = L Lᵀ`.
pub fn cholesky(s: &Matrix) -> Result<Matrix> {
    let n = s.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::Precondition(
                "matrix is not positive definite".into(),
            ));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(l)
}

/// Largest `λ` with `S v = λ H v` for symmetric `S` and positive definite `H`.
pub fn max_generalized_eigenvalue(s: &Matrix, h: &Matrix) -> Result<f64> {
    let l = cholesky(h)?;
    let n = l.rows;
    // C = L⁻¹ S L⁻ᵀ, built column by column with forward substitution.
    let forward = |b: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= l[(i, k)] * y[k];
            }
            y[i] = v / l[(i, i)];
        }
        y
    };
    let s_sym = s.symmetric_part();
    let mut tmp = Matrix::zeros(n, n);
    for j in 0..n {
        let col: Vec<f64> = (0..n).map(|i| s_sym[(i, j)]).collect();
        let y = forward(&col);
        for i in 0..n {
            tmp[(i, j)] = y[i];
        }
    }
    let tmp_t = tmp.transpose();
    let mut c = Matrix::zeros(n, n);
    for j in 0..n {
        let col: Vec<f64> = (0..n).map(|i| tmp_t[(i, j)]).collect();
        let y = forward(&col);
        for i in 0..n {
            c[(i, j)] = y[i];
        }
    }
    let eig = symmetric_eigenvalues(&c)?;
    Ok(*eig.last().expect("non-empty"))
}

/// Perron root and left Perron vector of an entrywise positive matrix by
/// power iteration on `Mᵀ`. The vector is scaled so its largest entry is 1.
pub fn dominant_left_eigenvector(m: &Matrix) -> Result<(f64, Vec<f64>)> {
    if !m.is_square() {
        return Err(LinalgError::Shape(
            "Perron vector of a non-square matrix".into(),
        ));
    }
    if !m.is_positive() {
        return Err(LinalgError::Precondition(
            "Perron vector requires an entrywise positive matrix".into(),
        ));
    }
    let n = m.rows;
    const BUDGET: usize = 100_000;
    let mut f = vec![1.0; n];
    let mut rho = 0.0;
    for _ in 0..BUDGET {
        let g = m.vec_mul(&f)?;
        // Collatz-Wielandt bracket on the Perron root.
        let (lo, hi) = g
            .iter()
            .zip(&f)
            .map(|(gi, fi)| gi / fi)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
                (lo.min(r), hi.max(r))
            });
        let gmax = g.iter().copied().fold(0.0, f64::max);
        f = g.iter().map(|v| v / gmax).collect();
        rho = 0.5 * (lo + hi);
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    let residual = left_residual(m, rho, &f)?;
    if residual > 1e-9 * rho {
        return Err(LinalgError::SolverFailure {
            routine: "power iteration",
            iterations: BUDGET,
            partial: vec![Complex64::new(rho, 0.0)],
        });
    }
    Ok((rho, f))
}

/// `‖fᵀM − λ fᵀ‖_∞`.
pub fn left_residual(m: &Matrix, lambda: f64, f: &[f64]) -> Result<f64> {
    let g = m.vec_mul(f)?;
    Ok(g.iter()
        .zip(f)
        .map(|(gi, fi)| (gi - lambda * fi).abs())
        .fold(0.0, f64::max))
}
