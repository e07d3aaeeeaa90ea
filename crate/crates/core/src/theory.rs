//! Closed-form threshold and overlap predictions, plus the reduced
//! zero-temperature objective used to cross-check them numerically.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Overlap excursions outside `[0, 1]` smaller than this are clamped.
const CLAMP_SLACK: f64 = 1e-12;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn check_rho(rho: f64) -> Result<()> {
    check_positive("rho", rho)?;
    if rho > 1.0 {
        return Err(invalid("rho", format!("must be <= 1, got {rho}")));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta >= 0.0 {
        Ok(())
    } else {
        Err(invalid("theta", format!("must be finite and >= 0, got {theta}")))
    }
}

fn check_unit_interval(name: &str, r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in [0, 1], got {r}")))
    }
}

/// `1 / ((α_x α_y)^{1/4} √ρ)`
pub fn critical_threshold(alpha_x: f64, alpha_y: f64, rho: f64) -> Result<f64> {
    check_positive("alpha_x", alpha_x)?;
    check_positive("alpha_y", alpha_y)?;
    check_rho(rho)?;
    Ok(1.0 / ((alpha_x * alpha_y).powf(0.25) * rho.sqrt()))
}

/// Signal strength after dual masking, `√ρ θ`.
pub fn effective_spike(theta: f64, rho: f64) -> Result<f64> {
    check_theta(theta)?;
    check_rho(rho)?;
    Ok(rho.sqrt() * theta)
}

/// Asymptotic squared overlaps `(r_x², r_y²)` of the leading PLS-SVD pair.
///
/// Zero on the subcritical branch `α_x α_y ρ² θ⁴ <= 1` (equality included).
pub fn asymptotic_overlaps(alpha_x: f64, alpha_y: f64, rho: f64, theta: f64) -> Result<(f64, f64)> {
    check_positive("alpha_x", alpha_x)?;
    check_positive("alpha_y", alpha_y)?;
    check_rho(rho)?;
    check_theta(theta)?;
    let s = rho * theta * theta; // ρθ²
    let k = alpha_x * alpha_y * s * s;
    if k <= 1.0 {
        return Ok((0.0, 0.0));
    }
    let r2x = (k - 1.0) / (alpha_y * s * (alpha_x * s + 1.0));
    let r2y = (k - 1.0) / (alpha_x * s * (alpha_y * s + 1.0));
    Ok((clamp_overlap(r2x), clamp_overlap(r2y)))
}

fn clamp_overlap(r: f64) -> f64 {
    debug_assert!(r > -CLAMP_SLACK && r < 1.0 + CLAMP_SLACK, "overlap {r} out of range");
    r.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub theta_crit: f64,
    pub theta_eff: f64,
    pub r2_x: f64,
    pub r2_y: f64,
    pub supercritical: bool,
}

impl TheoryPrediction {
    pub fn new(alpha_x: f64, alpha_y: f64, rho: f64, theta: f64) -> Result<Self> {
        let theta_crit = critical_threshold(alpha_x, alpha_y, rho)?;
        let theta_eff = effective_spike(theta, rho)?;
        let (r2_x, r2_y) = asymptotic_overlaps(alpha_x, alpha_y, rho, theta)?;
        let supercritical = alpha_x * alpha_y * (rho * theta * theta).powi(2) > 1.0;
        Ok(Self {
            theta_crit,
            theta_eff,
            r2_x,
            r2_y,
            supercritical,
        })
    }
}

/// `(ρ, θ_crit(ρ))` along a grid of retention probabilities.
pub fn phase_boundary(alpha_x: f64, alpha_y: f64, rho_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    rho_grid
        .iter()
        .map(|&rho| Ok((rho, critical_threshold(alpha_x, alpha_y, rho)?)))
        .collect()
}

/// Reduced objective
/// `Ψ(r_u, r_v) = √(1−r_u²)/√α_x + √(1−r_v²)/√α_y + θ_eff r_u r_v`.
pub fn variational_objective(r_u: f64, r_v: f64, alpha_x: f64, alpha_y: f64, theta_eff: f64) -> Result<f64> {
    check_unit_interval("r_u", r_u)?;
    check_unit_interval("r_v", r_v)?;
    check_positive("alpha_x", alpha_x)?;
    check_positive("alpha_y", alpha_y)?;
    Ok((1.0 - r_u * r_u).sqrt() / alpha_x.sqrt()
        + (1.0 - r_v * r_v).sqrt() / alpha_y.sqrt()
        + theta_eff * r_u * r_v)
}

/// Four-argument form of Ψ before the susceptibilities are optimised out.
pub fn variational_objective_with_susceptibilities(
    point: &VariationalPoint,
    alpha_x: f64,
    alpha_y: f64,
    theta_eff: f64,
) -> f64 {
    let VariationalPoint { r_u, r_v, chi_u, chi_v, .. } = *point;
    (1.0 - r_u * r_u) / (2.0 * alpha_x * chi_u)
        + (1.0 - r_v * r_v) / (2.0 * alpha_y * chi_v)
        + (chi_u + chi_v) / 2.0
        + theta_eff * r_u * r_v
}

/// Residuals of the two stationarity conditions
/// `θ_eff r_v − r_u / (√α_x √(1−r_u²))` and its mirror.
pub fn stationarity_residual(r_u: f64, r_v: f64, alpha_x: f64, alpha_y: f64, theta_eff: f64) -> Result<(f64, f64)> {
    check_positive("alpha_x", alpha_x)?;
    check_positive("alpha_y", alpha_y)?;
    for (name, r) in [("r_u", r_u), ("r_v", r_v)] {
        if !(0.0..1.0).contains(&r) {
            return Err(invalid(name, format!("must lie in [0, 1) (r = 1 is singular), got {r}")));
        }
    }
    let res_u = theta_eff * r_v - r_u / (alpha_x.sqrt() * (1.0 - r_u * r_u).sqrt());
    let res_v = theta_eff * r_u - r_v / (alpha_y.sqrt() * (1.0 - r_v * r_v).sqrt());
    Ok((res_u, res_v))
}

/// `χ* = √((1−r²)/α)` for each view.
pub fn optimal_susceptibilities(r_u: f64, r_v: f64, alpha_x: f64, alpha_y: f64) -> Result<(f64, f64)> {
    check_unit_interval("r_u", r_u)?;
    check_unit_interval("r_v", r_v)?;
    check_positive("alpha_x", alpha_x)?;
    check_positive("alpha_y", alpha_y)?;
    Ok((
        ((1.0 - r_u * r_u) / alpha_x).sqrt(),
        ((1.0 - r_v * r_v) / alpha_y).sqrt(),
    ))
}

/// One-view slice of the susceptibility objective, `(1−r²)/(2αχ) + χ/2`.
pub fn susceptibility_objective(chi: f64, r: f64, alpha: f64) -> f64 {
    (1.0 - r * r) / (2.0 * alpha * chi) + chi / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalPoint {
    pub r_u: f64,
    pub r_v: f64,
    pub chi_u: f64,
    pub chi_v: f64,
    pub psi: f64,
}

/// Maximises Ψ by exhaustive search over a `(n+1) × (n+1)` grid on
/// `[0,1]²` (step `1/n`). No derivatives are used.
pub fn maximize_objective_on_grid(alpha_x: f64, alpha_y: f64, theta_eff: f64, n: usize) -> Result<VariationalPoint> {
    check_positive("alpha_x", alpha_x)?;
    check_positive("alpha_y", alpha_y)?;
    if n == 0 {
        return Err(invalid("n", "grid needs at least one interval"));
    }
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let a: Vec<f64> = grid.iter().map(|r| (1.0 - r * r).sqrt() / alpha_x.sqrt()).collect();
    let b: Vec<f64> = grid.iter().map(|r| (1.0 - r * r).sqrt() / alpha_y.sqrt()).collect();
    let (mut best, mut bi, mut bj) = (f64::NEG_INFINITY, 0, 0);
    for (i, (&ri, &ai)) in grid.iter().zip(&a).enumerate() {
        let t = theta_eff * ri;
        for (j, (&rj, &bj_)) in grid.iter().zip(&b).enumerate() {
            let v = ai + bj_ + t * rj;
            if v > best {
                best = v;
                bi = i;
                bj = j;
            }
        }
    }
    let (r_u, r_v) = (grid[bi], grid[bj]);
    let (chi_u, chi_v) = optimal_susceptibilities(r_u, r_v, alpha_x, alpha_y)?;
    Ok(VariationalPoint { r_u, r_v, chi_u, chi_v, psi: best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let t = critical_threshold(5.0, 20.0, 0.42).unwrap();
        assert!((t - 0.48795).abs() < 1e-4, "{t}");
        assert_eq!(critical_threshold(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((critical_threshold(4.0, 4.0, 0.25).unwrap() - 1.0).abs() < 1e-15);
        assert!(critical_threshold(0.0, 1.0, 1.0).is_err());
        assert!(critical_threshold(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn effective_spike_examples() {
        assert_eq!(effective_spike(2.0, 0.25).unwrap(), 1.0);
        assert_eq!(effective_spike(0.7, 1.0).unwrap(), 0.7);
        assert!((effective_spike(1.0, 0.42).unwrap() - 0.648_074).abs() < 1e-6);
    }

    #[test]
    fn overlaps_at_twice_threshold() {
        let tc = critical_threshold(5.0, 20.0, 0.42).unwrap();
        let (rx, ry) = asymptotic_overlaps(5.0, 20.0, 0.42, 2.0 * tc).unwrap();
        assert!((rx - 0.625).abs() < 1e-12);
        assert!((ry - 15.0 / 18.0).abs() < 1e-12);
    }

    #[test]
    fn overlaps_fully_observed_square() {
        let (rx, ry) = asymptotic_overlaps(4.0, 4.0, 1.0, 1.0).unwrap();
        assert!((rx - 0.75).abs() < 1e-15 && (ry - 0.75).abs() < 1e-15);
    }

    #[test]
    fn equality_at_threshold_is_subcritical() {
        // α_x α_y ρ² θ⁴ = 1 exactly.
        let p = TheoryPrediction::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(!p.supercritical);
        assert_eq!((p.r2_x, p.r2_y), (0.0, 0.0));
        assert_eq!(asymptotic_overlaps(5.0, 20.0, 0.42, 0.3).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn boundary_with_joint_masking() {
        let (ax, ay) = (4.0, 4.0);
        for m in [0.0, 0.2, 0.5, 0.7] {
            let rho: f64 = (1.0 - m) * (1.0 - m);
            let b = phase_boundary(ax, ay, &[rho]).unwrap()[0].1;
            let expected = 1.0 / ((ax * ay).powf(0.25) * (1.0 - m));
            assert!((b - expected).abs() < 1e-12);
        }
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let b = phase_boundary(2.0, 3.0, &grid).unwrap();
        assert!(b.windows(2).all(|w| w[0].1 > w[1].1));
        assert!((b[9].1 - 1.0 / 6f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn objective_corners() {
        let (ax, ay, te) = (5.0, 20.0, 0.6);
        let v = variational_objective(0.0, 0.0, ax, ay, te).unwrap();
        assert!((v - (1.0 / 5f64.sqrt() + 1.0 / 20f64.sqrt())).abs() < 1e-15);
        assert_eq!(variational_objective(1.0, 1.0, ax, ay, te).unwrap(), te);
        assert!(variational_objective(1.1, 0.0, ax, ay, te).is_err());
    }

    #[test]
    fn stationarity_examples() {
        let tc = critical_threshold(5.0, 20.0, 0.42).unwrap();
        let theta = 2.0 * tc;
        let te = effective_spike(theta, 0.42).unwrap();
        let (rx, ry) = asymptotic_overlaps(5.0, 20.0, 0.42, theta).unwrap();
        let (a, b) = stationarity_residual(rx.sqrt(), ry.sqrt(), 5.0, 20.0, te).unwrap();
        assert!(a.abs() < 1e-8 && b.abs() < 1e-8);
        assert_eq!(stationarity_residual(0.0, 0.0, 5.0, 20.0, te).unwrap(), (0.0, 0.0));
        let (a, _) = stationarity_residual(rx.sqrt() + 0.05, ry.sqrt(), 5.0, 20.0, te).unwrap();
        assert!(a.abs() > 1e-3);
        assert!(stationarity_residual(1.0, 0.5, 5.0, 20.0, te).is_err());
    }

    #[test]
    fn susceptibility_examples() {
        assert_eq!(optimal_susceptibilities(1.0, 0.0, 3.0, 1.0).unwrap().0, 0.0);
        assert_eq!(optimal_susceptibilities(0.0, 0.0, 1.0, 1.0).unwrap().0, 1.0);
        let (chi, _) = optimal_susceptibilities(0.6, 0.0, 4.0, 1.0).unwrap();
        assert!((chi - 0.4).abs() < 1e-15);
    }

    #[test]
    fn subcritical_grid_optimum_is_origin() {
        let p = maximize_objective_on_grid(5.0, 20.0, 0.2, 400).unwrap();
        assert_eq!((p.r_u, p.r_v), (0.0, 0.0));
    }
}
