//! PLS-SVD on masked views, imputation baselines, the complete-data oracle,
//! overlap measurement and the split-half stability diagnostic.

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, dot, Matrix, SingularTriple};
use crate::rng::{Stream, TrialKey};
use crate::synth::MaskedPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorKind {
    /// Missing entries as zeros, `C = XᵀY / (N√ρ)`.
    PlsSvdZero,
    /// Observed column means fill the gaps, then `XᵀY / N`.
    MeanImpute,
    /// Alternates rank-1 imputation of Y with re-estimation of the pair.
    EmPls { max_iter: usize, tol: f64 },
    /// Rank-`rank` hard impute on each view, then PLS-SVD with `ρ = 1`.
    IterativeSvd { rank: usize, max_iter: usize, tol: f64 },
    /// PLS-SVD on the latent complete matrices.
    Oracle,
}

impl EstimatorKind {
    pub const DEFAULT_EM: EstimatorKind = EstimatorKind::EmPls { max_iter: 50, tol: 1e-6 };
    pub const DEFAULT_ITERATIVE_SVD: EstimatorKind = EstimatorKind::IterativeSvd {
        rank: 1,
        max_iter: 100,
        tol: 1e-5,
    };

    /// The five estimators compared in the baseline study.
    pub fn baseline_suite() -> Vec<EstimatorKind> {
        vec![
            EstimatorKind::PlsSvdZero,
            EstimatorKind::MeanImpute,
            Self::DEFAULT_EM,
            Self::DEFAULT_ITERATIVE_SVD,
            EstimatorKind::Oracle,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::PlsSvdZero => "pls_svd_zero",
            EstimatorKind::MeanImpute => "mean_impute",
            EstimatorKind::EmPls { .. } => "em_pls",
            EstimatorKind::IterativeSvd { .. } => "iterative_svd",
            EstimatorKind::Oracle => "oracle",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (max_iter, tol) = match *self {
            EstimatorKind::EmPls { max_iter, tol } => (max_iter, tol),
            EstimatorKind::IterativeSvd { rank, max_iter, tol } => {
                if rank == 0 {
                    return Err(invalid("rank", "must be at least 1"));
                }
                (max_iter, tol)
            }
            _ => return Ok(()),
        };
        if max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {tol}")));
        }
        Ok(())
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which `ρ` normalises the missing-as-zero cross-covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    /// The configured retention stored on the pair.
    #[default]
    Configured,
    /// Product of the two masks' observed densities.
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub u_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub singular_value: f64,
    pub r2_x: f64,
    pub r2_y: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Wall-clock seconds spent inside the estimator.
    pub runtime: f64,
    /// EM-PLS relative singular-value changes, one per iteration.
    pub changes: Vec<f64>,
}

impl EstimateResult {
    /// Whether the EM change sequence never increased.
    pub fn changes_monotone(&self) -> bool {
        self.changes.windows(2).all(|w| w[1] <= w[0])
    }
}

/// `(ûᵀu₀)², (v̂ᵀv₀)²`
pub fn squared_overlaps(u_hat: &[f64], v_hat: &[f64], u0: &[f64], v0: &[f64]) -> Result<(f64, f64)> {
    if u_hat.len() != u0.len() || v_hat.len() != v0.len() {
        return Err(Error::Dimension(format!(
            "overlap of lengths ({}, {}) against ({}, {})",
            u_hat.len(),
            v_hat.len(),
            u0.len(),
            v0.len()
        )));
    }
    let rx = dot(u_hat, u0);
    let ry = dot(v_hat, v0);
    Ok(((rx * rx).clamp(0.0, 1.0), (ry * ry).clamp(0.0, 1.0)))
}

fn cross_covariance(x: &Matrix, y: &Matrix, scale: f64) -> Result<Matrix> {
    let mut c = x.t_matmul(y)?;
    c.scale(1.0 / scale);
    Ok(c)
}

/// `C = x_obsᵀ y_obs / (N √ρ)` with the configured `ρ`.
pub fn rescaled_cross_covariance(pair: &MaskedPair) -> Result<Matrix> {
    rescaled_cross_covariance_with(pair, RhoMode::Configured)
}

pub fn rescaled_cross_covariance_with(pair: &MaskedPair, mode: RhoMode) -> Result<Matrix> {
    let rho = match mode {
        RhoMode::Configured => pair.rho,
        RhoMode::Estimated => pair.empirical_rho(),
    };
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(invalid("rho", format!("retention must lie in (0, 1], got {rho}")));
    }
    if pair.x_obs.rows() != pair.y_obs.rows() {
        return Err(Error::Dimension("views have different row counts".into()));
    }
    cross_covariance(&pair.x_obs, &pair.y_obs, pair.n_samples() as f64 * rho.sqrt())
}

/// Leading pair with a dense fallback when power iteration stalls.
///
/// Near the threshold the spectral gap closes and power iteration needs far
/// more sweeps than a dense SVD costs, so the budget scales with the size.
fn leading_pair(c: &Matrix) -> Result<SingularTriple> {
    let budget = c.rows().min(c.cols()).max(100);
    match linalg::top_singular_pair(c, linalg::DEFAULT_SVD_TOL, budget) {
        Err(Error::NonConvergence { .. }) => linalg::dense_top_singular_pair(c),
        other => other,
    }
}

/// Runs one estimator on a pair.
pub fn estimate(pair: &MaskedPair, kind: &EstimatorKind) -> Result<EstimateResult> {
    kind.validate()?;
    let start = Instant::now();
    let fit = match *kind {
        EstimatorKind::PlsSvdZero => Fit::direct(leading_pair(&rescaled_cross_covariance(pair)?)?),
        EstimatorKind::MeanImpute => {
            let x = impute_column_means(&pair.x_obs, &pair.mask_x);
            let y = impute_column_means(&pair.y_obs, &pair.mask_y);
            Fit::direct(leading_pair(&cross_covariance(&x, &y, pair.n_samples() as f64)?)?)
        }
        EstimatorKind::EmPls { max_iter, tol } => em_pls(pair, max_iter, tol)?,
        EstimatorKind::IterativeSvd { rank, max_iter, tol } => iterative_svd(pair, rank, max_iter, tol)?,
        EstimatorKind::Oracle => {
            let latent = pair
                .latent
                .as_ref()
                .ok_or_else(|| invalid("oracle", "pair does not retain the latent complete matrices"))?;
            Fit::direct(leading_pair(&cross_covariance(&latent.x, &latent.y, pair.n_samples() as f64)?)?)
        }
    };
    let runtime = start.elapsed().as_secs_f64();
    let (r2_x, r2_y) = squared_overlaps(&fit.triple.left, &fit.triple.right, &pair.u0, &pair.v0)?;
    Ok(EstimateResult {
        u_hat: fit.triple.left,
        v_hat: fit.triple.right,
        singular_value: fit.triple.value,
        r2_x,
        r2_y,
        iterations: fit.iterations,
        converged: fit.converged,
        runtime,
        changes: fit.changes,
    })
}

struct Fit {
    triple: SingularTriple,
    iterations: usize,
    converged: bool,
    changes: Vec<f64>,
}

impl Fit {
    fn direct(triple: SingularTriple) -> Self {
        Self {
            iterations: 1,
            triple,
            converged: true,
            changes: Vec::new(),
        }
    }
}

/// Missing entries (mask 0) replaced by the column's observed mean; a
/// column with nothing observed is filled with zeros.
pub fn impute_column_means(obs: &Matrix, mask: &Matrix) -> Matrix {
    let (n, p) = obs.shape();
    let mut sums = vec![0.0; p];
    let mut counts = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            if mask.get(i, j) != 0.0 {
                sums[j] += obs.get(i, j);
                counts[j] += 1.0;
            }
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| if *c > 0.0 { s / c } else { 0.0 })
        .collect();
    Matrix::from_fn(n, p, |i, j| if mask.get(i, j) != 0.0 { obs.get(i, j) } else { means[j] })
}

fn has_missing(mask: &Matrix) -> bool {
    mask.as_slice().contains(&0.0)
}

/// EM-style alternation. X's gaps hold column means throughout; Y's gaps
/// hold the current rank-1 prediction `θ̂ (X̂ û)_i v̂_j` with `θ̂` the
/// leading singular value of `X̂ᵀŶ / N`.
fn em_pls(pair: &MaskedPair, max_iter: usize, tol: f64) -> Result<Fit> {
    let n = pair.n_samples() as f64;
    let x_hat = impute_column_means(&pair.x_obs, &pair.mask_x);
    let initial = leading_pair(&rescaled_cross_covariance(pair)?)?;
    if !has_missing(&pair.mask_y) {
        return Ok(Fit::direct(leading_pair(&cross_covariance(&x_hat, &pair.y_obs, n)?)?));
    }
    // σ(C) estimates √ρ θ; undo the attenuation for the first fill.
    let mut theta_hat = initial.value / pair.rho.sqrt();
    let mut triple = initial;
    let mut changes = Vec::new();
    let mut y_hat = pair.y_obs.clone();
    for it in 1..=max_iter {
        let score = x_hat.matvec(&triple.left);
        for i in 0..y_hat.rows() {
            let mask_row = pair.mask_y.row(i);
            let obs_row = pair.y_obs.row(i);
            let pred = theta_hat * score[i];
            for (j, yij) in y_hat.row_mut(i).iter_mut().enumerate() {
                *yij = if mask_row[j] != 0.0 { obs_row[j] } else { pred * triple.right[j] };
            }
        }
        triple = leading_pair(&cross_covariance(&x_hat, &y_hat, n)?)?;
        let change = (triple.value - theta_hat).abs() / triple.value.max(f64::MIN_POSITIVE);
        theta_hat = triple.value;
        changes.push(change);
        if change < tol {
            return Ok(Fit {
                triple,
                iterations: it,
                converged: true,
                changes,
            });
        }
    }
    Ok(Fit {
        triple,
        iterations: max_iter,
        converged: false,
        changes,
    })
}

/// Rank-`rank` hard impute of both views, then PLS-SVD on the completed
/// pair with `ρ = 1`.
fn iterative_svd(pair: &MaskedPair, rank: usize, max_iter: usize, tol: f64) -> Result<Fit> {
    let (x, ix, cx) = hard_impute(&pair.x_obs, &pair.mask_x, rank, max_iter, tol)?;
    let (y, iy, cy) = hard_impute(&pair.y_obs, &pair.mask_y, rank, max_iter, tol)?;
    let triple = leading_pair(&cross_covariance(&x, &y, pair.n_samples() as f64)?)?;
    Ok(Fit {
        triple,
        iterations: ix.max(iy),
        converged: cx && cy,
        changes: Vec::new(),
    })
}

/// Orthonormal basis of the column space of a tall `rows × r` block.
fn orthonormalize(block: &Matrix) -> Matrix {
    let q = block.as_faer().qr().compute_thin_Q();
    Matrix::from_faer(q.as_ref())
}

/// Alternating subspace iteration: each sweep refines a warm-started rank-r
/// basis with two block power steps, replaces the missing entries by the
/// projection of the current completion, and stops once the relative change
/// of the completion falls below `tol`.
///
/// Returns `(completed, iterations, converged)`.
pub fn hard_impute(obs: &Matrix, mask: &Matrix, rank: usize, max_iter: usize, tol: f64) -> Result<(Matrix, usize, bool)> {
    let (n, p) = obs.shape();
    if rank == 0 || rank > n.min(p) {
        return Err(invalid("rank", format!("must be in 1..={}, got {rank}", n.min(p))));
    }
    let mut z = impute_column_means(obs, mask);
    if !has_missing(mask) {
        return Ok((z, 0, true));
    }
    // Deterministic start: the first `rank` coordinate directions on the
    // right, perturbed so they are not orthogonal to the top subspace.
    let mut v = Matrix::from_fn(p, rank, |i, j| if i == j { 1.0 } else { 1.0 / (1.0 + (i + j) as f64) });
    v = orthonormalize(&v);
    for it in 1..=max_iter {
        let mut q = Matrix::zeros(n, rank);
        for _ in 0..2 {
            q = orthonormalize(&z.matmul(&v)?);
            v = orthonormalize(&z.t_matmul(&q)?);
        }
        // Projection onto span(q): q (qᵀ z)
        let coeffs = q.t_matmul(&z)?;
        let approx = q.matmul(&coeffs)?;
        let mut diff = 0.0;
        let mut scale = 0.0;
        for i in 0..n {
            let mrow = mask.row(i);
            let arow = approx.row(i);
            for (j, zij) in z.row_mut(i).iter_mut().enumerate() {
                if mrow[j] == 0.0 {
                    let new = arow[j];
                    diff += (new - *zij) * (new - *zij);
                    *zij = new;
                }
                scale += *zij * *zij;
            }
        }
        if (diff / scale.max(f64::MIN_POSITIVE)).sqrt() < tol {
            return Ok((z, it, true));
        }
    }
    Ok((z, max_iter, false))
}

/// Per-view agreement of the two half-sample estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitHalf {
    pub u_correlation: f64,
    pub v_correlation: f64,
    pub stability: f64,
}

/// Split-half stability: rows are shuffled into two halves, missing-as-zero
/// PLS-SVD runs on each (normalised by the half's own size), and the result
/// is the mean of the absolute correlations of the two `u` and two `v`
/// estimates.
pub fn split_half_stability<R: Rng + ?Sized>(pair: &MaskedPair, rng: &mut R) -> Result<SplitHalf> {
    let n = pair.n_samples();
    if n < 4 {
        return Err(invalid("n_samples", format!("split-half needs N >= 4, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (a, b) = idx.split_at(n / 2);
    let fit = |rows: &[usize]| -> Result<SingularTriple> {
        let x = pair.x_obs.select_rows(rows);
        let y = pair.y_obs.select_rows(rows);
        let c = cross_covariance(&x, &y, rows.len() as f64 * pair.rho.sqrt())?;
        if c.is_zero() {
            return Err(Error::Degenerate("a split half has an all-zero cross-covariance".into()));
        }
        leading_pair(&c)
    };
    let (ta, tb) = (fit(a)?, fit(b)?);
    let u_correlation = linalg::vector_correlation(&ta.left, &tb.left)?.abs();
    let v_correlation = linalg::vector_correlation(&ta.right, &tb.right)?.abs();
    Ok(SplitHalf {
        u_correlation,
        v_correlation,
        stability: 0.5 * (u_correlation + v_correlation),
    })
}

/// [`split_half_stability`] seeded from a plain integer.
pub fn split_half_stability_seeded(pair: &MaskedPair, seed: u64) -> Result<f64> {
    Ok(split_half_stability(pair, &mut TrialKey::root(seed).stream(Stream::Split))?.stability)
}
