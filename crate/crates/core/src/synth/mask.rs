//! Retention masks: MCAR plus four data-dependent (MAR) mechanisms.
//!
//! A data-dependent mechanism marks entry `(i, j)` missing with probability
//! `sigmoid(a + γ s)`, where `s` is a standardised score and the intercept
//! `a` is found by bisection so that the mean missing probability equals the
//! target rate. With `γ = 0` every mechanism is plain MCAR.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;

/// Quantile above which an entry counts as "high" for [`Mechanism::Thresholded`].
pub const THRESHOLD_QUANTILE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Mcar,
    /// Row score `|X⋆ u₀|_i`; applies to the Y view.
    SignalDependent,
    /// Entry score `|A_ij|` of the view's own latent entries.
    MagnitudeDependent,
    /// Entry score `1[A_ij > q₀.₇(column j)]` of the view's own latent entries.
    Thresholded,
    /// Row score `mean_k |B_ik|` of the other view; applies to the Y view.
    Correlated,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::Mcar,
        Mechanism::SignalDependent,
        Mechanism::MagnitudeDependent,
        Mechanism::Thresholded,
        Mechanism::Correlated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Mcar => "mcar",
            Mechanism::SignalDependent => "signal_dependent",
            Mechanism::MagnitudeDependent => "magnitude_dependent",
            Mechanism::Thresholded => "thresholded",
            Mechanism::Correlated => "correlated",
        }
    }

    /// Mechanisms whose score comes from the other view or the planted
    /// signal, and which therefore only make sense on the response.
    pub fn response_only(self) -> bool {
        matches!(self, Mechanism::SignalDependent | Mechanism::Correlated)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    pub mechanism: Mechanism,
    /// Marginal missing probability.
    pub target_rate: f64,
    /// MAR strength γ.
    #[serde(default)]
    pub strength: f64,
}

impl MaskSpec {
    pub fn mcar(rate: f64) -> Self {
        Self {
            mechanism: Mechanism::Mcar,
            target_rate: rate,
            strength: 0.0,
        }
    }

    pub fn mar(mechanism: Mechanism, rate: f64, strength: f64) -> Self {
        Self {
            mechanism,
            target_rate: rate,
            strength,
        }
    }

    pub fn retention(&self) -> f64 {
        1.0 - self.target_rate
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.target_rate) {
            return Err(invalid(
                "target_rate",
                format!("must lie in [0, 1), got {}", self.target_rate),
            ));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(invalid(
                "strength",
                format!("MAR strength must lie in [0, 1], got {}", self.strength),
            ));
        }
        Ok(())
    }
}

/// Data a mechanism may look at.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskContext<'a> {
    /// Latent complete entries of the view being masked.
    pub latent: Option<&'a Matrix>,
    /// Per-row projection `X⋆ u₀`.
    pub row_signal: Option<&'a [f64]>,
    /// Latent complete entries of the other view.
    pub other_view: Option<&'a Matrix>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in values.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
}

/// Linear-interpolation quantile of an unsorted slice.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Solves `mean_k sigmoid(a + γ s_k) = rate` for `a` by bisection.
pub fn calibrate_intercept(scores: &[f64], gamma: f64, rate: f64) -> f64 {
    let mean_rate = |a: f64| scores.iter().map(|&s| sigmoid(a + gamma * s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_rate(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Scores of a data-dependent mechanism, either one per row or one per
/// entry (row-major).
enum Scores {
    Rows(Vec<f64>),
    Entries(Vec<f64>),
}

fn need<'a, T: ?Sized>(field: Option<&'a T>, mechanism: Mechanism, what: &str) -> Result<&'a T> {
    field.ok_or_else(|| invalid("mask", format!("mechanism `{mechanism}` needs {what} as data context")))
}

fn check_rows(got: usize, rows: usize, what: &str) -> Result<()> {
    if got != rows {
        return Err(Error::Dimension(format!("{what} has {got} rows, mask has {rows}")));
    }
    Ok(())
}

fn scores(spec: &MaskSpec, ctx: &MaskContext<'_>, rows: usize, cols: usize) -> Result<Scores> {
    let mech = spec.mechanism;
    let s = match mech {
        Mechanism::Mcar => unreachable!("MCAR has no scores"),
        Mechanism::SignalDependent => {
            let sig = need(ctx.row_signal, mech, "the row signal X⋆u₀")?;
            check_rows(sig.len(), rows, "row signal")?;
            let mut s: Vec<f64> = sig.iter().map(|v| v.abs()).collect();
            standardize(&mut s);
            Scores::Rows(s)
        }
        Mechanism::Correlated => {
            let other = need(ctx.other_view, mech, "the other view's latent data")?;
            check_rows(other.rows(), rows, "other view")?;
            let mut s: Vec<f64> = (0..rows)
                .map(|i| other.row(i).iter().map(|v| v.abs()).sum::<f64>() / other.cols().max(1) as f64)
                .collect();
            standardize(&mut s);
            Scores::Rows(s)
        }
        Mechanism::MagnitudeDependent => {
            let latent = need(ctx.latent, mech, "the view's latent data")?;
            if latent.shape() != (rows, cols) {
                return Err(Error::Dimension(format!("latent {:?} vs mask {:?}", latent.shape(), (rows, cols))));
            }
            let mut s: Vec<f64> = latent.as_slice().iter().map(|v| v.abs()).collect();
            standardize(&mut s);
            Scores::Entries(s)
        }
        Mechanism::Thresholded => {
            let latent = need(ctx.latent, mech, "the view's latent data")?;
            if latent.shape() != (rows, cols) {
                return Err(Error::Dimension(format!("latent {:?} vs mask {:?}", latent.shape(), (rows, cols))));
            }
            let cut: Vec<f64> = (0..cols).map(|j| quantile(&latent.column(j), THRESHOLD_QUANTILE)).collect();
            let mut s: Vec<f64> = latent
                .as_slice()
                .iter()
                .enumerate()
                .map(|(k, &v)| if v > cut[k % cols] { 1.0 } else { 0.0 })
                .collect();
            standardize(&mut s);
            Scores::Entries(s)
        }
    };
    Ok(s)
}

/// Per-entry missing probabilities (row-major) for a mechanism.
pub fn missing_probabilities(spec: &MaskSpec, ctx: &MaskContext<'_>, rows: usize, cols: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    let rate = spec.target_rate;
    if spec.mechanism == Mechanism::Mcar {
        return Ok(vec![rate; rows * cols]);
    }
    let scores = scores(spec, ctx, rows, cols)?;
    if rate == 0.0 {
        return Ok(vec![0.0; rows * cols]);
    }
    let gamma = spec.strength;
    if gamma == 0.0 {
        return Ok(vec![rate; rows * cols]);
    }
    Ok(match scores {
        Scores::Rows(s) => {
            let a = calibrate_intercept(&s, gamma, rate);
            s.iter()
                .flat_map(|&si| std::iter::repeat_n(sigmoid(a + gamma * si), cols))
                .collect()
        }
        Scores::Entries(s) => {
            let a = calibrate_intercept(&s, gamma, rate);
            s.iter().map(|&sk| sigmoid(a + gamma * sk)).collect()
        }
    })
}

/// Draws a binary mask: 1 = retained, 0 = missing.
pub fn sample_mask<R: Rng + ?Sized>(
    spec: &MaskSpec,
    ctx: &MaskContext<'_>,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<Matrix> {
    let p = missing_probabilities(spec, ctx, rows, cols)?;
    let data = p
        .iter()
        .map(|&pk| if rng.random::<f64>() < pk { 0.0 } else { 1.0 })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Fraction of zero entries.
pub fn missing_rate(mask: &Matrix) -> f64 {
    let s = mask.as_slice();
    s.iter().filter(|&&v| v == 0.0).count() as f64 / s.len().max(1) as f64
}
