use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mask::{sample_mask, MaskContext, MaskSpec};
use super::noise::{sample_noise_with, NoiseSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, normalize, Matrix};
use crate::rng::{Stream, TrialId, TrialKey};
use crate::theory::{self, TheoryPrediction};

/// Tolerance on the norm of caller-supplied planted directions.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// One synthetic trial's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_samples: usize,
    pub dx: usize,
    pub dy: usize,
    pub theta: f64,
    pub mask_x: MaskSpec,
    pub mask_y: MaskSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl ModelConfig {
    /// Gaussian noise, MCAR masks.
    pub fn mcar(n_samples: usize, dx: usize, dy: usize, theta: f64, m_x: f64, m_y: f64, seed: u64) -> Self {
        Self {
            n_samples,
            dx,
            dy,
            theta,
            mask_x: MaskSpec::mcar(m_x),
            mask_y: MaskSpec::mcar(m_y),
            noise: NoiseSpec::Gaussian,
            seed,
        }
    }

    pub fn alpha_x(&self) -> f64 {
        self.n_samples as f64 / self.dx as f64
    }

    pub fn alpha_y(&self) -> f64 {
        self.n_samples as f64 / self.dy as f64
    }

    /// Joint retention `(1 − m_x)(1 − m_y)` from the configured rates.
    pub fn rho(&self) -> f64 {
        self.mask_x.retention() * self.mask_y.retention()
    }

    pub fn theta_crit(&self) -> Result<f64> {
        theory::critical_threshold(self.alpha_x(), self.alpha_y(), self.rho())
    }

    pub fn theory(&self) -> Result<TheoryPrediction> {
        TheoryPrediction::new(self.alpha_x(), self.alpha_y(), self.rho(), self.theta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dx == 0 || self.dy == 0 {
            return Err(invalid("dx/dy", "dimensions must be positive"));
        }
        if self.n_samples < self.dx {
            return Err(invalid(
                "n_samples",
                format!("whitening needs n_samples >= dx, got N={} < D_x={}", self.n_samples, self.dx),
            ));
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(invalid("theta", format!("must be finite and >= 0, got {}", self.theta)));
        }
        self.mask_x.validate()?;
        self.mask_y.validate()?;
        if self.mask_x.mechanism.response_only() {
            return Err(invalid(
                "mask_x",
                format!("mechanism `{}` applies to the Y view only", self.mask_x.mechanism),
            ));
        }
        self.noise.validate()
    }
}

/// Latent complete matrices, kept for the oracle estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPair {
    pub x: Matrix,
    pub y: Matrix,
}

/// Observed missing-as-zero views with their masks and planted directions.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPair {
    pub x_obs: Matrix,
    pub y_obs: Matrix,
    pub mask_x: Matrix,
    pub mask_y: Matrix,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    /// Configured joint retention `ρ`.
    pub rho: f64,
    pub latent: Option<LatentPair>,
}

impl MaskedPair {
    pub fn n_samples(&self) -> usize {
        self.x_obs.rows()
    }

    pub fn dx(&self) -> usize {
        self.x_obs.cols()
    }

    pub fn dy(&self) -> usize {
        self.y_obs.cols()
    }

    /// Retention estimated from the masks, `mean(S_x) · mean(S_y)`.
    pub fn empirical_rho(&self) -> f64 {
        let mean = |m: &Matrix| m.as_slice().iter().sum::<f64>() / m.as_slice().len().max(1) as f64;
        mean(&self.mask_x) * mean(&self.mask_y)
    }
}

/// A fixed (already whitened) design with extracted planted directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDesign {
    pub x: Matrix,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl PreparedDesign {
    pub fn n_samples(&self) -> usize {
        self.x.rows()
    }

    pub fn dx(&self) -> usize {
        self.x.cols()
    }

    pub fn dy(&self) -> usize {
        self.v.len()
    }
}

/// Where a trial's design and planted directions come from.
#[derive(Debug, Clone, Default)]
pub enum Design {
    /// Fresh whitened Gaussian design and random directions per trial.
    #[default]
    Gaussian,
    /// Fixed design; directions either the extracted ones or fresh random.
    Prepared {
        design: Arc<PreparedDesign>,
        random_directions: bool,
    },
}

fn random_unit<R: rand::Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        if normalize(&mut v) > 0.0 {
            return v;
        }
    }
}

fn check_direction(name: &str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::Dimension(format!("{name} has length {}, expected {len}", v.len())));
    }
    let n = linalg::norm(v);
    if (n - 1.0).abs() > UNIT_NORM_TOL {
        return Err(invalid(name, format!("must be unit norm, got norm {n}")));
    }
    Ok(())
}

/// Draws one masked pair from the spiked two-view model.
///
/// Each ingredient has its own substream of the trial key: the design,
/// planted directions, noise and each mask. Supplied `directions` must be
/// unit vectors.
pub fn generate_pair(config: &ModelConfig, directions: Option<(&[f64], &[f64])>, id: TrialId) -> Result<MaskedPair> {
    config.validate()?;
    let key = TrialKey::new(config.seed, id);
    let (n, dx, dy) = (config.n_samples, config.dx, config.dy);

    let mut design_rng = key.stream(Stream::Design);
    let raw = Matrix::from_vec(n, dx, (0..n * dx).map(|_| StandardNormal.sample(&mut design_rng)).collect())?;
    let x = linalg::whiten(&raw)?;

    let (u0, v0) = match directions {
        Some((u, v)) => {
            check_direction("u0", u, dx)?;
            check_direction("v0", v, dy)?;
            (u.to_vec(), v.to_vec())
        }
        None => {
            let mut rng = key.stream(Stream::Directions);
            let u = random_unit(dx, &mut rng);
            let v = random_unit(dy, &mut rng);
            (u, v)
        }
    };
    assemble(config, x, u0, v0, key)
}

/// Pair on a fixed design, for the semi-synthetic protocol.
pub fn generate_pair_on_design(config: &ModelConfig, design: &PreparedDesign, random_directions: bool, id: TrialId) -> Result<MaskedPair> {
    config.validate()?;
    if (config.n_samples, config.dx, config.dy) != (design.n_samples(), design.dx(), design.dy()) {
        return Err(Error::Dimension(format!(
            "config is {}x({}, {}) but the prepared design is {}x({}, {})",
            config.n_samples,
            config.dx,
            config.dy,
            design.n_samples(),
            design.dx(),
            design.dy()
        )));
    }
    let key = TrialKey::new(config.seed, id);
    let (u0, v0) = if random_directions {
        let mut rng = key.stream(Stream::Directions);
        let u = random_unit(design.dx(), &mut rng);
        let v = random_unit(design.dy(), &mut rng);
        (u, v)
    } else {
        (design.u.clone(), design.v.clone())
    };
    assemble(config, design.x.clone(), u0, v0, key)
}

/// Dispatches on [`Design`].
pub fn generate_with_design(config: &ModelConfig, design: &Design, id: TrialId) -> Result<MaskedPair> {
    match design {
        Design::Gaussian => generate_pair(config, None, id),
        Design::Prepared { design, random_directions } => generate_pair_on_design(config, design, *random_directions, id),
    }
}

/// `Y⋆ = θ (X⋆ u₀) v₀ᵀ + Z`, then masks.
fn assemble(config: &ModelConfig, x: Matrix, u0: Vec<f64>, v0: Vec<f64>, key: TrialKey) -> Result<MaskedPair> {
    let (n, dx, dy) = (x.rows(), x.cols(), v0.len());
    let signal = x.matvec(&u0);
    let z = sample_noise_with(&config.noise, n, dy, &mut key.stream(Stream::Noise))?;
    let theta = config.theta;
    let mut y = z;
    for (i, &s) in signal.iter().enumerate() {
        let ts = theta * s;
        for (yij, &vj) in y.row_mut(i).iter_mut().zip(&v0) {
            *yij += ts * vj;
        }
    }

    let ctx_x = MaskContext {
        latent: Some(&x),
        row_signal: Some(&signal),
        other_view: Some(&y),
    };
    let mask_x = sample_mask(&config.mask_x, &ctx_x, n, dx, &mut key.stream(Stream::MaskX))?;
    let ctx_y = MaskContext {
        latent: Some(&y),
        row_signal: Some(&signal),
        other_view: Some(&x),
    };
    let mask_y = sample_mask(&config.mask_y, &ctx_y, n, dy, &mut key.stream(Stream::MaskY))?;

    Ok(MaskedPair {
        x_obs: x.hadamard(&mask_x)?,
        y_obs: y.hadamard(&mask_y)?,
        mask_x,
        mask_y,
        u0,
        v0,
        rho: config.rho(),
        latent: Some(LatentPair { x, y }),
    })
}

/// Z-scores each column; constant columns become zero.
pub fn standardize_columns(m: &Matrix) -> Matrix {
    let (n, p) = m.shape();
    let means = m.column_means();
    let sds: Vec<f64> = (0..p)
        .map(|j| {
            let ss: f64 = (0..n).map(|i| (m.get(i, j) - means[j]).powi(2)).sum();
            (ss / (n.max(2) - 1) as f64).sqrt()
        })
        .collect();
    Matrix::from_fn(n, p, |i, j| if sds[j] > 0.0 { (m.get(i, j) - means[j]) / sds[j] } else { 0.0 })
}

/// Preprocessing of two real views: standardise, PCA both to
/// `target_dims`, whiten X, standardise the Y scores, and take the leading
/// PLS-SVD pair of the complete data as planted directions.
pub fn prepare_semi_synthetic(x_real: &Matrix, y_real: &Matrix, target_dims: usize) -> Result<PreparedDesign> {
    if x_real.rows() != y_real.rows() {
        return Err(Error::Dimension(format!(
            "views have {} and {} rows",
            x_real.rows(),
            y_real.rows()
        )));
    }
    if x_real.rows() < target_dims {
        return Err(Error::Dimension(format!(
            "need rows >= target_dims, got {} < {target_dims}",
            x_real.rows()
        )));
    }
    let n = x_real.rows();
    let xp = linalg::pca_reduce(&standardize_columns(x_real), target_dims)?;
    let yp = linalg::pca_reduce(&standardize_columns(y_real), target_dims)?;
    let xw = linalg::whiten(&xp)?;
    let ys = standardize_columns(&yp);
    let mut c = xw.t_matmul(&ys)?;
    c.scale(1.0 / n as f64);
    let top = linalg::top_singular_pair(&c, linalg::DEFAULT_SVD_TOL, linalg::DEFAULT_SVD_MAX_ITER)
        .or_else(|_| linalg::dense_top_singular_pair(&c))?;
    Ok(PreparedDesign {
        x: xw,
        u: top.left,
        v: top.right,
    })
}

/// Full semi-synthetic construction for one draw: preprocessing, response
/// regeneration with fresh Gaussian noise at strength `theta`, and masks.
pub fn semi_synthetic_pair(
    x_real: &Matrix,
    y_real: &Matrix,
    target_dims: usize,
    theta: f64,
    mask_x: MaskSpec,
    mask_y: MaskSpec,
    seed: u64,
) -> Result<MaskedPair> {
    let design = prepare_semi_synthetic(x_real, y_real, target_dims)?;
    let config = ModelConfig {
        n_samples: design.n_samples(),
        dx: design.dx(),
        dy: design.dy(),
        theta,
        mask_x,
        mask_y,
        noise: NoiseSpec::Gaussian,
        seed,
    };
    generate_pair_on_design(&config, &design, false, TrialId::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::mask::Mechanism;

    fn gram_deviation(x: &Matrix) -> f64 {
        let g = x.t_matmul(x).unwrap();
        let n = x.rows() as f64;
        let target = Matrix::from_fn(g.rows(), g.cols(), |i, j| if i == j { n } else { 0.0 });
        g.max_abs_diff(&target)
    }

    #[test]
    fn experiment_one_retention() {
        let c = ModelConfig::mcar(1000, 200, 50, 0.5, 0.3, 0.4, 1);
        assert!((c.rho() - 0.42).abs() < 1e-15);
        let p = generate_pair(&ModelConfig::mcar(120, 20, 10, 0.5, 0.3, 0.4, 1), None, TrialId::default()).unwrap();
        assert!((p.rho - 0.42).abs() < 1e-15);
    }

    #[test]
    fn no_missingness_means_observed_equals_latent() {
        let c = ModelConfig::mcar(80, 10, 6, 1.0, 0.0, 0.0, 4);
        let p = generate_pair(&c, None, TrialId::default()).unwrap();
        let latent = p.latent.as_ref().unwrap();
        assert_eq!(p.x_obs, latent.x);
        assert_eq!(p.y_obs, latent.y);
        assert!(p.mask_x.as_slice().iter().all(|&v| v == 1.0));
        assert!(gram_deviation(&latent.x) < 1e-8);
    }

    #[test]
    fn zero_signal_leaves_noise_only() {
        let c = ModelConfig::mcar(60, 8, 5, 0.0, 0.2, 0.2, 11);
        let p = generate_pair(&c, None, TrialId::default()).unwrap();
        let z = sample_noise_with(&NoiseSpec::Gaussian, 60, 5, &mut TrialKey::root(11).stream(Stream::Noise)).unwrap();
        assert_eq!(p.y_obs, z.hadamard(&p.mask_y).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ModelConfig::mcar(10, 20, 5, 1.0, 0.1, 0.1, 0).validate().is_err());
        assert!(ModelConfig::mcar(30, 20, 5, -1.0, 0.1, 0.1, 0).validate().is_err());
        let mut c = ModelConfig::mcar(30, 20, 5, 1.0, 0.1, 0.1, 0);
        c.mask_x = MaskSpec::mar(Mechanism::SignalDependent, 0.3, 0.5);
        assert!(c.validate().is_err());
        let c = ModelConfig::mcar(30, 4, 3, 1.0, 0.0, 0.0, 0);
        assert!(generate_pair(&c, Some((&[1.0, 0.0, 0.0, 0.0], &[0.5, 0.5, 0.0])), TrialId::default()).is_err());
    }

    #[test]
    fn standardize_zeroes_constant_columns() {
        let m = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]]).unwrap();
        let s = standardize_columns(&m);
        assert_eq!(s.column(1), vec![0.0; 3]);
        assert!((s.get(0, 0) + 1.0).abs() < 1e-15 && s.get(1, 0).abs() < 1e-15);
    }
}
