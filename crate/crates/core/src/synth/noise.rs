use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::rng::{Stream, TrialKey};

/// Noise law for the response matrix. Every kind has unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    Gaussian,
    /// Student-t with `nu` degrees of freedom, divided by `√(ν/(ν−2))`.
    StudentT { nu: f64 },
    /// Laplace with scale `1/√2`.
    Laplace,
    /// Column `j` is `N(0, σ_j²)` with `σ_j² ~ Uniform[low, high]`.
    Heteroskedastic { low: f64, high: f64 },
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::Gaussian => write!(f, "gaussian"),
            NoiseSpec::StudentT { nu } => write!(f, "student_t({nu})"),
            NoiseSpec::Laplace => write!(f, "laplace"),
            NoiseSpec::Heteroskedastic { low, high } => write!(f, "heteroskedastic({low},{high})"),
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gaussian | NoiseSpec::Laplace => Ok(()),
            NoiseSpec::StudentT { nu } => {
                if nu.is_finite() && nu > 2.0 {
                    Ok(())
                } else {
                    Err(invalid("nu", format!("student_t needs nu > 2 for finite variance, got {nu}")))
                }
            }
            NoiseSpec::Heteroskedastic { low, high } => {
                if !(low > 0.0 && high >= low && high.is_finite()) {
                    return Err(invalid(
                        "heteroskedastic",
                        format!("need 0 < low <= high, got [{low}, {high}]"),
                    ));
                }
                if ((low + high) / 2.0 - 1.0).abs() > 1e-12 {
                    return Err(invalid(
                        "heteroskedastic",
                        format!("variance range must be centred on 1, got [{low}, {high}]"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Excess kurtosis of one entry, `None` when infinite.
    pub fn excess_kurtosis(&self) -> Option<f64> {
        match *self {
            NoiseSpec::Gaussian => Some(0.0),
            NoiseSpec::Laplace => Some(3.0),
            NoiseSpec::StudentT { nu } if nu > 4.0 => Some(6.0 / (nu - 4.0)),
            NoiseSpec::StudentT { .. } => None,
            // Gaussian scale mixture: 3 E[σ⁴] / E[σ²]² − 3.
            NoiseSpec::Heteroskedastic { low, high } => {
                let m2 = (low + high) / 2.0;
                let m4 = if high > low {
                    (high.powi(3) - low.powi(3)) / (3.0 * (high - low))
                } else {
                    low * low
                };
                Some(3.0 * m4 / (m2 * m2) - 3.0)
            }
        }
    }
}

/// Draws a `rows × cols` noise matrix from `rng`.
pub fn sample_noise_with<R: Rng + ?Sized>(spec: &NoiseSpec, rows: usize, cols: usize, rng: &mut R) -> Result<Matrix> {
    spec.validate()?;
    let n = rows * cols;
    let mut data = Vec::with_capacity(n);
    match *spec {
        NoiseSpec::Gaussian => {
            data.extend((0..n).map(|_| -> f64 { StandardNormal.sample(rng) }));
        }
        NoiseSpec::StudentT { nu } => {
            let t = StudentT::new(nu).map_err(|e| invalid("nu", e.to_string()))?;
            let scale = ((nu - 2.0) / nu).sqrt();
            data.extend((0..n).map(|_| t.sample(rng) * scale));
        }
        NoiseSpec::Laplace => {
            let b = std::f64::consts::FRAC_1_SQRT_2;
            data.extend((0..n).map(|_| {
                // Inverse CDF on u ∈ (−½, ½).
                let u: f64 = rng.random::<f64>() - 0.5;
                let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
                -b * u.signum() * tail.ln()
            }));
        }
        NoiseSpec::Heteroskedastic { low, high } => {
            let sd: Vec<f64> = (0..cols)
                .map(|_| (low + (high - low) * rng.random::<f64>()).sqrt())
                .collect();
            for _ in 0..rows {
                for s in &sd {
                    let z: f64 = StandardNormal.sample(rng);
                    data.push(s * z);
                }
            }
        }
    }
    Matrix::from_vec(rows, cols, data)
}

/// Noise matrix seeded from `seed` alone.
pub fn sample_noise(spec: &NoiseSpec, rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    sample_noise_with(spec, rows, cols, &mut TrialKey::root(seed).stream(Stream::Noise))
}
