//! Deterministic Monte Carlo runner: sweeps over one or two parameter axes,
//! finite-size studies, aggregation and theory comparison.
//!
//! Every `(point, trial)` pair owns a distinct random key, results are
//! gathered by index, and aggregation happens after the join, so a sweep's
//! output does not depend on how many threads ran it.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::estimators::{estimate, split_half_stability, EstimatorKind};
use crate::rng::{Stream, TrialId, TrialKey};
use crate::synth::{generate_with_design, Design, ModelConfig};
use crate::theory::TheoryPrediction;

/// Version tag written into every emitted result.
pub const SCHEMA_VERSION: u32 = 1;

/// Below this fraction of successful trials a point is flagged invalid.
pub const MIN_SUCCESS_FRACTION: f64 = 0.5;

/// Multiple of the null scale `1/D_x` used by the boundary extractor.
pub const BOUNDARY_NULL_MULTIPLE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisParam {
    Theta,
    /// θ as a multiple of the point's own critical threshold.
    ThetaOverCrit,
    MX,
    MY,
    /// Sets `m_x = m_y`.
    MJoint,
    /// Sets `m_x = m_y = 1 − √ρ`.
    Rho,
    /// Rescales `D_x`, `D_y` with N so the aspect ratios stay fixed.
    NSamples,
    /// MAR strength on both masks.
    Gamma,
}

impl AxisParam {
    pub const ALL: [AxisParam; 8] = [
        AxisParam::Theta,
        AxisParam::ThetaOverCrit,
        AxisParam::MX,
        AxisParam::MY,
        AxisParam::MJoint,
        AxisParam::Rho,
        AxisParam::NSamples,
        AxisParam::Gamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AxisParam::Theta => "theta",
            AxisParam::ThetaOverCrit => "theta_over_crit",
            AxisParam::MX => "m_x",
            AxisParam::MY => "m_y",
            AxisParam::MJoint => "m_joint",
            AxisParam::Rho => "rho",
            AxisParam::NSamples => "n_samples",
            AxisParam::Gamma => "gamma",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
            let known: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
            invalid("axis", format!("unknown parameter `{name}`, expected one of {}", known.join(", ")))
        })
    }

    fn sets_theta(self) -> bool {
        matches!(self, AxisParam::Theta | AxisParam::ThetaOverCrit)
    }
}

impl fmt::Display for AxisParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: AxisParam,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(param: AxisParam, values: Vec<f64>) -> Self {
        Self { param, values }
    }

    /// `count` evenly spaced values from `lo` to `hi` inclusive.
    pub fn linspace(param: AxisParam, lo: f64, hi: f64, count: usize) -> Self {
        Self::new(param, linspace(lo, hi, count))
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(invalid(self.param.name(), "axis value list is empty"));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(self.param.name(), format!("axis value {v} is not finite")));
        }
        Ok(())
    }
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    #[serde(default)]
    pub split_half: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ModelConfig,
    pub axis1: Axis,
    pub axis2: Option<Axis>,
    pub trials: usize,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        self.axis1.validate()?;
        if let Some(a2) = &self.axis2 {
            a2.validate()?;
            if a2.param == self.axis1.param {
                return Err(invalid("axis2", "must differ from axis1"));
            }
            if a2.param.sets_theta() && self.axis1.param.sets_theta() {
                return Err(invalid("axis2", "only one axis may set theta"));
            }
        }
        self.estimator.validate()?;
        for p in 0..self.point_count() {
            self.resolve_point(p)?.validate()?;
        }
        Ok(())
    }

    pub fn point_count(&self) -> usize {
        self.axis1.values.len() * self.axis2.as_ref().map_or(1, |a| a.values.len())
    }

    /// Axis values of a flat point index; axis2 varies fastest.
    pub fn point_values(&self, point: usize) -> (f64, Option<f64>) {
        match &self.axis2 {
            None => (self.axis1.values[point], None),
            Some(a2) => {
                let n2 = a2.values.len();
                (self.axis1.values[point / n2], Some(a2.values[point % n2]))
            }
        }
    }

    /// The model configuration of one grid point. Non-θ axes are applied
    /// first so a θ-ratio axis uses the point's own retention.
    pub fn resolve_point(&self, point: usize) -> Result<ModelConfig> {
        let (v1, v2) = self.point_values(point);
        let mut settings = vec![(self.axis1.param, v1)];
        if let (Some(a2), Some(v2)) = (&self.axis2, v2) {
            settings.push((a2.param, v2));
        }
        settings.sort_by_key(|(p, _)| p.sets_theta());
        let mut cfg = self.base.clone();
        for (param, value) in settings {
            apply_axis(&mut cfg, param, value)?;
        }
        Ok(cfg)
    }
}

fn apply_axis(cfg: &mut ModelConfig, param: AxisParam, value: f64) -> Result<()> {
    match param {
        AxisParam::Theta => cfg.theta = value,
        AxisParam::ThetaOverCrit => {
            cfg.mask_x.validate()?;
            cfg.mask_y.validate()?;
            cfg.theta = value * cfg.theta_crit()?;
        }
        AxisParam::MX => cfg.mask_x.target_rate = value,
        AxisParam::MY => cfg.mask_y.target_rate = value,
        AxisParam::MJoint => {
            cfg.mask_x.target_rate = value;
            cfg.mask_y.target_rate = value;
        }
        AxisParam::Rho => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(invalid("rho", format!("must lie in (0, 1], got {value}")));
            }
            let m = 1.0 - value.sqrt();
            cfg.mask_x.target_rate = m;
            cfg.mask_y.target_rate = m;
        }
        AxisParam::NSamples => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(invalid("n_samples", format!("must be a positive integer, got {value}")));
            }
            let (ax, ay) = (cfg.alpha_x(), cfg.alpha_y());
            cfg.n_samples = value as usize;
            cfg.dx = ((value / ax).round() as usize).max(1);
            cfg.dy = ((value / ay).round() as usize).max(1);
        }
        AxisParam::Gamma => {
            cfg.mask_x.strength = value;
            cfg.mask_y.strength = value;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub r2_x: f64,
    pub r2_y: f64,
    pub stability: Option<f64>,
    pub runtime: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub id: TrialId,
    pub metrics: Option<TrialMetrics>,
    pub error: Option<String>,
}

/// One trial on a fresh Gaussian design.
pub fn run_trial(config: &ModelConfig, estimator: &EstimatorKind, diagnostics: Diagnostics, id: TrialId) -> TrialResult {
    run_trial_on(config, &Design::Gaussian, estimator, diagnostics, id)
}

pub fn run_trial_on(
    config: &ModelConfig,
    design: &Design,
    estimator: &EstimatorKind,
    diagnostics: Diagnostics,
    id: TrialId,
) -> TrialResult {
    let outcome = (|| -> Result<TrialMetrics> {
        let pair = generate_with_design(config, design, id)?;
        let est = estimate(&pair, estimator)?;
        let stability = if diagnostics.split_half {
            let mut rng = TrialKey::new(config.seed, id).stream(Stream::Split);
            Some(split_half_stability(&pair, &mut rng)?.stability)
        } else {
            None
        };
        Ok(TrialMetrics {
            r2_x: est.r2_x,
            r2_y: est.r2_y,
            stability,
            runtime: est.runtime,
            iterations: est.iterations,
            converged: est.converged,
        })
    })();
    match outcome {
        Ok(m) => TrialResult {
            id,
            metrics: Some(m),
            error: None,
        },
        Err(e) => TrialResult {
            id,
            metrics: None,
            error: Some(e.to_string()),
        },
    }
}

/// How trials are scheduled. Without the `parallel` feature both variants
/// run serially.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    /// `threads = None` uses every available core.
    #[default]
    Parallel,
    ParallelWith(usize),
}

impl Execution {
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Execution::Serial,
            Some(n) => Execution::ParallelWith(n),
            None => Execution::Parallel,
        }
    }
}

/// Runs `f` over `0..n` and returns the results in index order.
fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match exec {
            Execution::Serial => Ok((0..n).map(f).collect()),
            Execution::Parallel => Ok((0..n).into_par_iter().map(f).collect()),
            Execution::ParallelWith(threads) => {
                if threads == 0 {
                    return Err(invalid("threads", "must be at least 1"));
                }
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        if exec == Execution::ParallelWith(0) {
            return Err(invalid("threads", "must be at least 1"));
        }
        Ok((0..n).map(f).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: usize,
    pub axis1: f64,
    pub axis2: Option<f64>,
    pub theta: f64,
    pub rho: f64,
    pub theta_crit: f64,
    pub theory_r2x: f64,
    pub theory_r2y: f64,
    #[serde(with = "nan_as_null")]
    pub mean_r2x: f64,
    #[serde(with = "nan_as_null")]
    pub std_r2x: f64,
    #[serde(with = "nan_as_null")]
    pub mean_r2y: f64,
    #[serde(with = "nan_as_null")]
    pub std_r2y: f64,
    pub mean_stability: Option<f64>,
    pub std_stability: Option<f64>,
    pub trials: usize,
    pub trials_effective: usize,
    pub valid: bool,
    pub converged_fraction: f64,
    pub mean_runtime: f64,
    /// SHA-256 over the trial keys of this point.
    pub seeds_digest: String,
    pub errors: Vec<String>,
}

impl PointRecord {
    pub fn supercritical(&self) -> bool {
        self.theta > self.theta_crit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub axis1: AxisParam,
    pub axis2: Option<AxisParam>,
    pub estimator: EstimatorKind,
    pub seed: u64,
    pub dx: usize,
    pub points: Vec<PointRecord>,
    /// Pearson correlation of empirical and theoretical `R_x²` over all valid points.
    pub correlation: Option<f64>,
    /// Same, restricted to supercritical points.
    pub correlation_supercritical: Option<f64>,
    pub total_runtime: f64,
}

impl SweepResult {
    /// Hex SHA-256 over every reported statistic except timings.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut f = |x: f64| h.update(x.to_bits().to_le_bytes());
        for p in &self.points {
            f(p.axis1);
            f(p.axis2.unwrap_or(f64::NAN));
            for x in [
                p.theta,
                p.rho,
                p.theta_crit,
                p.theory_r2x,
                p.theory_r2y,
                p.mean_r2x,
                p.std_r2x,
                p.mean_r2y,
                p.std_r2y,
                p.mean_stability.unwrap_or(f64::NAN),
                p.std_stability.unwrap_or(f64::NAN),
                p.trials_effective as f64,
                p.converged_fraction,
            ] {
                f(x);
            }
        }
        f(self.correlation.unwrap_or(f64::NAN));
        let mut out = hex(&h.finalize());
        for p in &self.points {
            out.push_str(&p.seeds_digest[..8]);
        }
        hex(&Sha256::digest(out.as_bytes()))
    }
}

/// JSON has no NaN; an all-failed point's statistics round-trip as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Sample mean and `n − 1` standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Pearson correlation; errors when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("series of lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 points, got {}", a.len())));
    }
    let (ma, _) = mean_std(a);
    let (mb, _) = mean_std(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("correlation undefined for a constant series".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation of per-point mean empirical `R_x²` with theory over every
/// valid point.
pub fn correlation_with_theory(result: &SweepResult) -> Result<f64> {
    correlation_over(result.points.iter().filter(|p| p.valid))
}

pub fn correlation_over<'a>(points: impl Iterator<Item = &'a PointRecord>) -> Result<f64> {
    let (emp, th): (Vec<f64>, Vec<f64>) = points
        .filter(|p| p.mean_r2x.is_finite() && p.theory_r2x.is_finite())
        .map(|p| (p.mean_r2x, p.theory_r2x))
        .unzip();
    pearson(&emp, &th)
}

fn seeds_digest(seed: u64, point: usize, trials: usize) -> String {
    let mut h = Sha256::new();
    for t in 0..trials {
        h.update(TrialKey::new(seed, TrialId::new(point as u64, t as u64)).key_bytes());
    }
    hex(&h.finalize())
}

fn aggregate(point: usize, v1: f64, v2: Option<f64>, cfg: &ModelConfig, trials: &[TrialResult]) -> Result<PointRecord> {
    let ok: Vec<&TrialMetrics> = trials.iter().filter_map(|t| t.metrics.as_ref()).collect();
    let col = |f: fn(&TrialMetrics) -> f64| -> Vec<f64> { ok.iter().map(|m| f(m)).collect() };
    let (mean_r2x, std_r2x) = mean_std(&col(|m| m.r2_x));
    let (mean_r2y, std_r2y) = mean_std(&col(|m| m.r2_y));
    let stab: Vec<f64> = ok.iter().filter_map(|m| m.stability).collect();
    let (mean_stability, std_stability) = if stab.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&stab);
        (Some(m), Some(s))
    };
    let th = TheoryPrediction::new(cfg.alpha_x(), cfg.alpha_y(), cfg.rho(), cfg.theta)?;
    let mut errors: Vec<String> = Vec::new();
    for e in trials.iter().filter_map(|t| t.error.as_ref()) {
        if !errors.contains(e) {
            errors.push(e.clone());
        }
    }
    let n_ok = ok.len();
    Ok(PointRecord {
        index: point,
        axis1: v1,
        axis2: v2,
        theta: cfg.theta,
        rho: cfg.rho(),
        theta_crit: th.theta_crit,
        theory_r2x: th.r2_x,
        theory_r2y: th.r2_y,
        mean_r2x,
        std_r2x,
        mean_r2y,
        std_r2y,
        mean_stability,
        std_stability,
        trials: trials.len(),
        trials_effective: n_ok,
        valid: n_ok as f64 >= MIN_SUCCESS_FRACTION * trials.len() as f64 && n_ok > 0,
        converged_fraction: if n_ok == 0 {
            0.0
        } else {
            ok.iter().filter(|m| m.converged).count() as f64 / n_ok as f64
        },
        mean_runtime: if n_ok == 0 { 0.0 } else { col(|m| m.runtime).iter().sum::<f64>() / n_ok as f64 },
        seeds_digest: seeds_digest(cfg.seed, point, trials.len()),
        errors,
    })
}

pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> Result<SweepResult> {
    run_sweep_on(spec, &Design::Gaussian, exec)
}

/// Runs every `(point, trial)` of `spec` on the given design.
pub fn run_sweep_on(spec: &SweepSpec, design: &Design, exec: Execution) -> Result<SweepResult> {
    let start = Instant::now();
    spec.validate()?;
    let configs: Vec<ModelConfig> = (0..spec.point_count()).map(|p| spec.resolve_point(p)).collect::<Result<_>>()?;
    let trials = spec.trials;
    let results = map_indexed(configs.len() * trials, exec, |k| {
        let (p, t) = (k / trials, k % trials);
        run_trial_on(&configs[p], design, &spec.estimator, spec.diagnostics, TrialId::new(p as u64, t as u64))
    })?;
    let points = configs
        .iter()
        .enumerate()
        .map(|(p, cfg)| {
            let (v1, v2) = spec.point_values(p);
            aggregate(p, v1, v2, cfg, &results[p * trials..(p + 1) * trials])
        })
        .collect::<Result<Vec<_>>>()?;
    let correlation = correlation_over(points.iter().filter(|p| p.valid)).ok();
    let correlation_supercritical = correlation_over(points.iter().filter(|p| p.valid && p.supercritical())).ok();
    Ok(SweepResult {
        schema_version: SCHEMA_VERSION,
        axis1: spec.axis1.param,
        axis2: spec.axis2.as_ref().map(|a| a.param),
        estimator: spec.estimator,
        seed: spec.base.seed,
        dx: spec.base.dx,
        points,
        correlation,
        correlation_supercritical,
        total_runtime: start.elapsed().as_secs_f64(),
    })
}

/// First θ at which `curve` (sorted by θ) reaches `level`, linearly
/// interpolated from the preceding point.
pub fn first_crossing(curve: &[(f64, f64)], level: f64) -> Option<f64> {
    let k = curve.iter().position(|&(_, y)| y >= level)?;
    if k == 0 {
        return Some(curve[0].0);
    }
    let (x0, y0) = curve[k - 1];
    let (x1, y1) = curve[k];
    Some(x0 + (level - y0) / (y1 - y0) * (x1 - x0))
}

/// Empirical phase boundary of a 2-D grid with one θ axis: for each value of
/// the other axis, the interpolated θ where mean `R_x²` first exceeds
/// `3/D_x`. `None` when the grid never crosses.
pub fn empirical_boundary(result: &SweepResult) -> Result<Vec<(f64, Option<f64>)>> {
    let a2 = result
        .axis2
        .ok_or_else(|| invalid("axis2", "boundary extraction needs a two-axis grid"))?;
    let theta_first = result.axis1.sets_theta();
    if theta_first == a2.sets_theta() {
        return Err(invalid("axis", "exactly one axis must set theta"));
    }
    let level = BOUNDARY_NULL_MULTIPLE / result.dx as f64;
    let other = |p: &PointRecord| if theta_first { p.axis2.unwrap_or(f64::NAN) } else { p.axis1 };
    let mut keys: Vec<f64> = Vec::new();
    for p in &result.points {
        if !keys.contains(&other(p)) {
            keys.push(other(p));
        }
    }
    Ok(keys
        .into_iter()
        .map(|k| {
            let mut curve: Vec<(f64, f64)> = result
                .points
                .iter()
                .filter(|p| other(p) == k && p.valid)
                .map(|p| (p.theta, p.mean_r2x))
                .collect();
            curve.sort_by(|a, b| a.0.total_cmp(&b.0));
            (k, first_crossing(&curve, level))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSizeSpec {
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub m_x: f64,
    pub m_y: f64,
    pub n_list: Vec<usize>,
    /// θ/θ_crit window; must contain 1.
    pub window: (f64, f64),
    pub points: usize,
    pub trials: usize,
    pub estimator: EstimatorKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSizeRecord {
    pub n_samples: usize,
    pub dx: usize,
    pub dy: usize,
    /// θ between the 25% and 75% crossings of the window maximum, in units
    /// of θ_crit.
    pub transition_width: Option<f64>,
    pub sweep: SweepResult,
}

/// `theta_over_crit` sweeps across sample sizes at fixed aspect ratios.
pub fn finite_size_study(spec: &FiniteSizeSpec, exec: Execution) -> Result<Vec<FiniteSizeRecord>> {
    let (lo, hi) = spec.window;
    if !(lo < 1.0 && hi > 1.0) {
        return Err(invalid("window", format!("[{lo}, {hi}] must contain the threshold ratio 1")));
    }
    if spec.n_list.is_empty() {
        return Err(invalid("n_list", "is empty"));
    }
    spec.n_list
        .iter()
        .map(|&n| {
            let dx = ((n as f64 / spec.alpha_x).round() as usize).max(1);
            let dy = ((n as f64 / spec.alpha_y).round() as usize).max(1);
            let sweep_spec = SweepSpec {
                base: ModelConfig::mcar(n, dx, dy, 0.0, spec.m_x, spec.m_y, spec.seed),
                axis1: Axis::linspace(AxisParam::ThetaOverCrit, lo, hi, spec.points),
                axis2: None,
                trials: spec.trials,
                estimator: spec.estimator,
                diagnostics: Diagnostics::default(),
            };
            let sweep = run_sweep(&sweep_spec, exec)?;
            Ok(FiniteSizeRecord {
                n_samples: n,
                dx,
                dy,
                transition_width: transition_width(&sweep),
                sweep,
            })
        })
        .collect()
}

/// Width between the 25% and 75% crossings of the curve's maximum, in the
/// units of axis1.
pub fn transition_width(result: &SweepResult) -> Option<f64> {
    let curve: Vec<(f64, f64)> = result.points.iter().filter(|p| p.valid).map(|p| (p.axis1, p.mean_r2x)).collect();
    let max = curve.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return None;
    }
    Some(first_crossing(&curve, 0.75 * max)? - first_crossing(&curve, 0.25 * max)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        SweepSpec {
            base: ModelConfig::mcar(120, 20, 15, 0.0, 0.2, 0.2, 11),
            axis1: Axis::new(AxisParam::ThetaOverCrit, vec![0.5, 1.5, 2.5]),
            axis2: Some(Axis::new(AxisParam::Rho, vec![0.5, 0.9])),
            trials: 3,
            estimator: EstimatorKind::PlsSvdZero,
            diagnostics: Diagnostics { split_half: true },
        }
    }

    #[test]
    fn theta_ratio_uses_the_point_rho() {
        let spec = small_spec();
        for p in 0..spec.point_count() {
            let cfg = spec.resolve_point(p).unwrap();
            let (v1, v2) = spec.point_values(p);
            assert!((cfg.rho() - v2.unwrap()).abs() < 1e-12);
            assert!((cfg.theta - v1 * cfg.theta_crit().unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_axis_name() {
        assert!(AxisParam::parse("temperature").is_err());
        assert_eq!(AxisParam::parse("m_joint").unwrap(), AxisParam::MJoint);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small_spec();
        s.trials = 0;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.axis1.values.clear();
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.axis2 = Some(Axis::new(AxisParam::Theta, vec![1.0]));
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.axis1.values[0] = f64::NAN;
        assert!(s.validate().is_err());
    }

    #[test]
    fn record_count_and_stds() {
        let r = run_sweep(&small_spec(), Execution::Serial).unwrap();
        assert_eq!(r.points.len(), 6);
        for p in &r.points {
            assert!(p.std_r2x >= 0.0 && p.std_r2y >= 0.0);
            assert!(p.mean_stability.is_some());
            assert_eq!(p.trials_effective, 3);
        }
    }

    #[test]
    fn one_point_one_trial_matches_run_trial() {
        let mut spec = small_spec();
        spec.axis1 = Axis::new(AxisParam::Theta, vec![1.0]);
        spec.axis2 = None;
        spec.trials = 1;
        spec.diagnostics = Diagnostics::default();
        let r = run_sweep(&spec, Execution::Serial).unwrap();
        let t = run_trial(&spec.resolve_point(0).unwrap(), &spec.estimator, spec.diagnostics, TrialId::new(0, 0));
        let m = t.metrics.unwrap();
        assert_eq!(r.points[0].mean_r2x, m.r2_x);
        assert_eq!(r.points[0].mean_r2y, m.r2_y);
        assert_eq!(r.points[0].std_r2x, 0.0);
    }

    #[test]
    fn failed_trials_are_tagged() {
        let mut spec = small_spec();
        spec.axis2 = None;
        spec.estimator = EstimatorKind::PlsSvdZero;
        spec.base.mask_y.target_rate = 0.999_999;
        let r = run_sweep(&spec, Execution::Serial).unwrap();
        let bad = r.points.iter().filter(|p| !p.valid).count();
        assert!(bad > 0);
        assert!(r.points.iter().filter(|p| !p.valid).all(|p| !p.errors.is_empty()));
    }

    #[test]
    fn pearson_examples() {
        let a = [0.1, 0.4, 0.2, 0.9];
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let b: Vec<f64> = a.iter().map(|x| 3.0 * x - 2.0).collect();
        assert!((pearson(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(pearson(&a, &[1.0; 4]).is_err());
        assert!(pearson(&a[..2], &a[..2]).is_err());
    }

    #[test]
    fn crossing_interpolates() {
        let c = [(0.0, 0.0), (1.0, 0.2), (2.0, 0.6)];
        assert!((first_crossing(&c, 0.4).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(first_crossing(&c, 0.0), Some(0.0));
        assert_eq!(first_crossing(&c, 0.7), None);
    }

    #[test]
    fn window_must_contain_threshold() {
        let spec = FiniteSizeSpec {
            alpha_x: 2.5,
            alpha_y: 2.5,
            m_x: 0.2,
            m_y: 0.2,
            n_list: vec![100],
            window: (1.05, 1.2),
            points: 3,
            trials: 1,
            estimator: EstimatorKind::PlsSvdZero,
            seed: 0,
        };
        assert!(finite_size_study(&spec, Execution::Serial).is_err());
    }
}
