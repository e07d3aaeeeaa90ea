//! Dense kernels: whitening, leading singular pair, PCA and correlations.
//!
//! [`Matrix`] is a plain row-major buffer. Heavy lifting (QR, products, dense
//! SVD/eigen fallbacks) goes through zero-copy `faer` views of that buffer.

use faer::{MatRef, Side};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{Stream, TrialKey};

/// Largest allowed ratio between extreme singular values in [`whiten`].
pub const WHITEN_CONDITION_LIMIT: f64 = 1e10;

/// Below this size [`top_singular_pair`] uses a dense SVD.
pub const DENSE_SVD_CUTOFF: usize = 32;

pub const DEFAULT_SVD_TOL: f64 = 1e-12;
pub const DEFAULT_SVD_MAX_ITER: usize = 20_000;

const START_VECTOR_SEED: u64 = 0x0005_eed0_f5ad;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Builds a matrix from row-major entries, rejecting bad lengths and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        let m = Self { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite {
                row: k / self.cols.max(1),
                col: k % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix::from_faer((self.as_faer() * other.as_faer()).as_ref()))
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "cannot form AᵀB with A {}x{} and B {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix::from_faer(
            (self.as_faer().transpose() * other.as_faer()).as_ref(),
        ))
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec length mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · y`
    pub fn t_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "t_matvec length mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (o, &a) in out.iter_mut().zip(self.row(i)) {
                    *o += yi * a;
                }
            }
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Entrywise product with a mask of the same shape.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "hadamard product of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, &v) in means.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }
}

/// Leading singular triple `M ≈ value · left · rightᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriple {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub value: f64,
    /// Power iterations used; zero when the dense path ran.
    pub iterations: usize,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `a` to unit norm in place and returns the old norm.
pub fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Index of the entry with the largest magnitude, lowest index on ties.
fn argmax_abs(a: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in a.iter().enumerate() {
        if v.abs() > a[best].abs() {
            best = i;
        }
    }
    best
}

/// Flips `(left, right)` jointly so the largest-magnitude entry of `left`
/// is positive.
pub fn fix_sign(left: &mut [f64], right: &mut [f64]) {
    if left.is_empty() {
        return;
    }
    if left[argmax_abs(left)] < 0.0 {
        left.iter_mut().for_each(|v| *v = -*v);
        right.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Returns `√N · Q` where `raw = QR` is the thin QR factorization with
/// positive `diag(R)`, so the result satisfies `resultᵀ result = N I`.
pub fn whiten(raw: &Matrix) -> Result<Matrix> {
    let (n, d) = raw.shape();
    if n < d {
        return Err(Error::Dimension(format!(
            "whitening needs rows >= cols, got {n}x{d}"
        )));
    }
    if d == 0 {
        return Err(Error::Dimension("whitening an empty matrix".into()));
    }
    raw.check_finite()?;

    let qr = raw.as_faer().qr();
    let r = qr.thin_R();
    let condition = triangular_condition_estimate(r);
    if !(condition <= WHITEN_CONDITION_LIMIT) {
        return Err(Error::RankDeficient {
            condition,
            limit: WHITEN_CONDITION_LIMIT,
        });
    }

    let q = qr.compute_thin_Q();
    let root_n = (n as f64).sqrt();
    let signs: Vec<f64> = (0..d)
        .map(|j| if r[(j, j)] < 0.0 { -root_n } else { root_n })
        .collect();
    Ok(Matrix::from_fn(n, d, |i, j| q[(i, j)] * signs[j]))
}

/// Estimates `σ_max / σ_min` of an upper-triangular `R` by power and inverse
/// iteration on `RᵀR`. Never exceeds the true condition number.
fn triangular_condition_estimate(r: MatRef<'_, f64>) -> f64 {
    let d = r.nrows();
    let diag_min = (0..d).map(|j| r[(j, j)].abs()).fold(f64::INFINITY, f64::min);
    if diag_min == 0.0 {
        return f64::INFINITY;
    }
    // Row-major copy of the upper triangle.
    let upper: Vec<f64> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| if j >= i { r[(i, j)] } else { 0.0 })
        .collect();
    let at = |i: usize, j: usize| upper[i * d + j];

    let mut rng = TrialKey::root(START_VECTOR_SEED).stream(Stream::Start);
    let start: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();

    // σ_max² via x ← Rᵀ R x
    let mut x = start.clone();
    normalize(&mut x);
    let mut sigma_max_sq = 0.0;
    for _ in 0..40 {
        let rx: Vec<f64> = (0..d)
            .map(|i| (i..d).map(|j| at(i, j) * x[j]).sum::<f64>())
            .collect();
        let mut y = vec![0.0; d];
        for i in 0..d {
            for j in i..d {
                y[j] += at(i, j) * rx[i];
            }
        }
        sigma_max_sq = dot(&x, &y);
        x = y;
        if normalize(&mut x) == 0.0 {
            break;
        }
    }

    // σ_min⁻² via x ← (RᵀR)⁻¹ x: forward solve with Rᵀ, back solve with R.
    let mut x = start;
    normalize(&mut x);
    let mut inv_min_sq = 0.0;
    for _ in 0..40 {
        let mut y = vec![0.0; d];
        for i in 0..d {
            let s: f64 = (0..i).map(|k| at(k, i) * y[k]).sum();
            y[i] = (x[i] - s) / at(i, i);
        }
        let mut z = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|k| at(i, k) * z[k]).sum();
            z[i] = (y[i] - s) / at(i, i);
        }
        inv_min_sq = dot(&x, &z);
        if !inv_min_sq.is_finite() {
            return f64::INFINITY;
        }
        x = z;
        if normalize(&mut x) == 0.0 || x.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
    }
    (sigma_max_sq * inv_min_sq).max(0.0).sqrt()
}

/// Leading singular triple of `m`.
///
/// Uses a dense SVD when `min(rows, cols) <= 32` and power iteration on the
/// smaller Gram operator otherwise. Convergence requires the relative change
/// of the Rayleigh quotient to drop below `tol` and the iterate to move by
/// less than `√tol`.
pub fn top_singular_pair(m: &Matrix, tol: f64, max_iter: usize) -> Result<SingularTriple> {
    if !(tol > 0.0) {
        return Err(crate::error::invalid("tol", "must be positive"));
    }
    if max_iter == 0 {
        return Err(crate::error::invalid("max_iter", "must be at least 1"));
    }
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::Dimension("empty matrix has no singular pair".into()));
    }
    m.check_finite()?;
    if m.is_zero() {
        return Err(Error::ZeroMatrix);
    }
    if m.rows().min(m.cols()) <= DENSE_SVD_CUTOFF {
        dense_top_singular_pair(m)
    } else {
        power_top_singular_pair(m, None, tol, max_iter)
    }
}

/// Dense SVD route, used directly for small matrices.
pub fn dense_top_singular_pair(m: &Matrix) -> Result<SingularTriple> {
    if m.is_zero() {
        return Err(Error::ZeroMatrix);
    }
    let svd = m
        .as_faer()
        .thin_svd()
        .map_err(|e| Error::Degenerate(format!("dense SVD failed: {e:?}")))?;
    let u = svd.U();
    let v = svd.V();
    let mut left: Vec<f64> = (0..m.rows()).map(|i| u[(i, 0)]).collect();
    let mut right: Vec<f64> = (0..m.cols()).map(|j| v[(j, 0)]).collect();
    let value = svd.S().column_vector()[0].abs();
    normalize(&mut left);
    normalize(&mut right);
    fix_sign(&mut left, &mut right);
    Ok(SingularTriple {
        left,
        right,
        value,
        iterations: 0,
    })
}

/// Power iteration on `MᵀM` (or `MMᵀ` when `M` is wide). `start` is a
/// warm-start vector on the iterated side.
pub fn power_top_singular_pair(
    m: &Matrix,
    start: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<SingularTriple> {
    let tall = m.cols() <= m.rows();
    let dim = if tall { m.cols() } else { m.rows() };
    let mut x: Vec<f64> = match start {
        Some(s) if s.len() == dim && norm(s) > 0.0 => s.to_vec(),
        _ => {
            let mut rng = TrialKey::root(START_VECTOR_SEED).stream(Stream::Start);
            (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
    };
    normalize(&mut x);

    // One application of the Gram operator: returns (Gx, inner image).
    let apply = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        if tall {
            let w = m.matvec(x);
            (m.t_matvec(&w), w)
        } else {
            let w = m.t_matvec(x);
            (m.matvec(&w), w)
        }
    };

    let mut lambda_prev = f64::NAN;
    let mut step_prev = f64::NAN;
    let mut contraction = f64::NAN;
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iter {
        let (mut gx, _) = apply(&x);
        let lambda = dot(&x, &gx);
        if normalize(&mut gx) == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let step = gx
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if step_prev.is_finite() && step_prev > 0.0 {
            contraction = step / step_prev;
        }
        step_prev = step;
        last_change = if lambda_prev.is_finite() {
            (lambda - lambda_prev).abs() / lambda.abs().max(f64::MIN_POSITIVE)
        } else {
            f64::INFINITY
        };
        lambda_prev = lambda;
        x = gx;
        if last_change < tol && step < tol.sqrt() {
            return Ok(finish_power(m, tall, x, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        estimate: lambda_prev,
        last_change,
        contraction,
    })
}

fn finish_power(m: &Matrix, tall: bool, x: Vec<f64>, iterations: usize) -> SingularTriple {
    let (mut left, mut right) = if tall {
        let u = m.matvec(&x);
        (u, x)
    } else {
        let v = m.t_matvec(&x);
        (x, v)
    };
    let value = if tall { normalize(&mut left) } else { normalize(&mut right) };
    normalize(&mut left);
    normalize(&mut right);
    fix_sign(&mut left, &mut right);
    SingularTriple {
        left,
        right,
        value,
        iterations,
    }
}

/// Projects the column-centred data onto its top `target_dims` principal
/// directions. Scores come back ordered by decreasing variance.
pub fn pca_reduce(m: &Matrix, target_dims: usize) -> Result<Matrix> {
    Ok(pca(m, target_dims)?.scores)
}

/// Full PCA output, exposed for diagnostics.
#[derive(Debug, Clone)]
pub struct Pca {
    pub scores: Matrix,
    /// Per-component variances (divisor `n − 1`), non-increasing.
    pub variances: Vec<f64>,
    /// Principal directions as columns (`cols × target_dims`).
    pub directions: Matrix,
}

pub fn pca(m: &Matrix, target_dims: usize) -> Result<Pca> {
    let (n, p) = m.shape();
    if target_dims == 0 || target_dims > p {
        return Err(Error::Dimension(format!(
            "target_dims {target_dims} must be in 1..={p}"
        )));
    }
    if n < 2 {
        return Err(Error::Degenerate("PCA needs at least two rows".into()));
    }
    m.check_finite()?;
    let means = m.column_means();
    let centered = Matrix::from_fn(n, p, |i, j| m.get(i, j) - means[j]);
    let mut cov = centered.t_matmul(&centered)?;
    cov.scale(1.0 / (n as f64 - 1.0));
    let total: f64 = (0..p).map(|j| cov.get(j, j)).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("data has zero total variance".into()));
    }

    let eig = cov
        .as_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Degenerate(format!("eigendecomposition failed: {e:?}")))?;
    let vals = eig.S().column_vector();
    let vecs = eig.U();
    // faer sorts ascending; walk from the top.
    let mut directions = Matrix::zeros(p, target_dims);
    let mut variances = Vec::with_capacity(target_dims);
    for k in 0..target_dims {
        let src = p - 1 - k;
        let mut col: Vec<f64> = (0..p).map(|i| vecs[(i, src)]).collect();
        if col[argmax_abs(&col)] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        for (i, v) in col.into_iter().enumerate() {
            directions.set(i, k, v);
        }
        variances.push(vals[src].max(0.0));
    }
    let scores = centered.matmul(&directions)?;
    Ok(Pca {
        scores,
        variances,
        directions,
    })
}

/// Cosine of the angle between `a` and `b`.
pub fn vector_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("correlation with a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}
