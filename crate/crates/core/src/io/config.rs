//! Experiment plans, presets and the TOML configuration surface.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::harness::{linspace, Axis, AxisParam, Diagnostics, FiniteSizeSpec, SweepSpec};
use crate::synth::{MaskSpec, Mechanism, ModelConfig, NoiseSpec};

pub const DEFAULT_SEED: u64 = 20240607;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Exp1Transition,
    Exp2PhaseDiagram,
    Exp3FiniteSize,
    Exp4MissingnessModes,
    Exp5SemiSynthetic,
    Exp6SplitHalf,
    B1Noise,
    B2Mar,
    B3Baselines,
}

impl Preset {
    pub const ALL: [Preset; 9] = [
        Preset::Exp1Transition,
        Preset::Exp2PhaseDiagram,
        Preset::Exp3FiniteSize,
        Preset::Exp4MissingnessModes,
        Preset::Exp5SemiSynthetic,
        Preset::Exp6SplitHalf,
        Preset::B1Noise,
        Preset::B2Mar,
        Preset::B3Baselines,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Exp1Transition => "exp1_transition",
            Preset::Exp2PhaseDiagram => "exp2_phase_diagram",
            Preset::Exp3FiniteSize => "exp3_finite_size",
            Preset::Exp4MissingnessModes => "exp4_missingness_modes",
            Preset::Exp5SemiSynthetic => "exp5_semi_synthetic",
            Preset::Exp6SplitHalf => "exp6_split_half",
            Preset::B1Noise => "b1_noise",
            Preset::B2Mar => "b2_mar",
            Preset::B3Baselines => "b3_baselines",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
            Error::Config(format!("unknown preset `{s}`, expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Paper,
    /// Grids capped at 15×15, 20 trials and 15 θ-points unless an
    /// acceptance criterion fixes a larger count.
    #[default]
    Desk,
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        })
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            _ => Err(Error::Config(format!("unknown scale `{s}`, expected paper or desk"))),
        }
    }
}

/// Real views for the semi-synthetic protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub x_path: Option<PathBuf>,
    pub y_path: Option<PathBuf>,
    pub target_dims: usize,
}

/// One labelled unit of work: a sweep or a finite-size study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run {
    pub label: String,
    pub sweep: Option<SweepSpec>,
    pub finite_size: Option<FiniteSizeSpec>,
    /// With real data: draw fresh random planted directions instead of the
    /// extracted ones.
    #[serde(default)]
    pub random_directions: bool,
}

impl Run {
    fn sweep(label: impl Into<String>, spec: SweepSpec) -> Self {
        Self {
            label: label.into(),
            sweep: Some(spec),
            finite_size: None,
            random_directions: false,
        }
    }
}

/// A fully resolved experiment: every default is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub preset: Option<Preset>,
    pub scale: Option<Scale>,
    pub data: Option<DataSpec>,
    pub runs: Vec<Run>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.runs.is_empty() {
            return Err(Error::Config("plan has no runs".into()));
        }
        for (i, run) in self.runs.iter().enumerate() {
            if self.runs[..i].iter().any(|r| r.label == run.label) {
                return Err(Error::Config(format!("duplicate run label `{}`", run.label)));
            }
            let ctx = |e: Error| Error::Config(format!("run `{}`: {e}", run.label));
            match (&run.sweep, &run.finite_size) {
                (Some(s), None) => s.validate().map_err(ctx)?,
                (None, Some(f)) => validate_finite_size(f).map_err(ctx)?,
                _ => {
                    return Err(Error::Config(format!(
                        "run `{}` must have exactly one of `sweep` or `finite_size`",
                        run.label
                    )))
                }
            }
        }
        if self.preset == Some(Preset::Exp5SemiSynthetic) {
            let ok = self.data.as_ref().is_some_and(|d| d.x_path.is_some() && d.y_path.is_some());
            if !ok {
                return Err(Error::Config(
                    "exp5_semi_synthetic needs data.x_path and data.y_path (matrix files of the two real views)".into(),
                ));
            }
        }
        Ok(())
    }

    /// TOML echo of the resolved plan.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot render configuration: {e}")))
    }

    pub fn total_trials(&self) -> usize {
        self.runs
            .iter()
            .map(|r| match (&r.sweep, &r.finite_size) {
                (Some(s), _) => s.point_count() * s.trials,
                (_, Some(f)) => f.n_list.len() * f.points * f.trials,
                _ => 0,
            })
            .sum()
    }
}

fn validate_finite_size(f: &FiniteSizeSpec) -> Result<()> {
    use crate::error::invalid;
    if f.n_list.is_empty() {
        return Err(invalid("n_list", "is empty"));
    }
    if !(f.window.0 < 1.0 && f.window.1 > 1.0) {
        return Err(invalid("window", "must contain the threshold ratio 1"));
    }
    if f.points < 2 || f.trials == 0 {
        return Err(invalid("points/trials", "need at least 2 points and 1 trial"));
    }
    if !(f.alpha_x >= 1.0 && f.alpha_y > 0.0) {
        return Err(invalid("alpha_x", "whitening needs alpha_x >= 1"));
    }
    for m in [f.m_x, f.m_y] {
        MaskSpec::mcar(m).validate()?;
    }
    f.estimator.validate()
}

struct Sizes {
    trials: usize,
    theta_points: usize,
    grid: usize,
}

fn sizes(scale: Scale, paper: Sizes, desk: Sizes) -> Sizes {
    match scale {
        Scale::Paper => paper,
        Scale::Desk => desk,
    }
}

fn sweep(base: ModelConfig, axis1: Axis, axis2: Option<Axis>, trials: usize, estimator: EstimatorKind) -> SweepSpec {
    SweepSpec {
        base,
        axis1,
        axis2,
        trials,
        estimator,
        diagnostics: Diagnostics::default(),
    }
}

/// The resolved plan of a preset before overrides.
pub fn preset_plan(preset: Preset, scale: Scale, seed: u64) -> ExperimentPlan {
    let pls = EstimatorKind::PlsSvdZero;
    let ratio = |lo, hi, n| Axis::linspace(AxisParam::ThetaOverCrit, lo, hi, n);
    let mut data = None;
    let runs = match preset {
        Preset::Exp1Transition => {
            let s = sizes(
                scale,
                Sizes { trials: 100, theta_points: 25, grid: 0 },
                Sizes { trials: 30, theta_points: 15, grid: 0 },
            );
            let base = ModelConfig::mcar(1000, 200, 50, 0.0, 0.3, 0.4, seed);
            vec![Run::sweep("transition", sweep(base, ratio(0.5, 2.5, s.theta_points), None, s.trials, pls))]
        }
        Preset::Exp2PhaseDiagram => {
            let s = sizes(
                scale,
                Sizes { trials: 30, theta_points: 0, grid: 30 },
                Sizes { trials: 10, theta_points: 0, grid: 15 },
            );
            let base = ModelConfig::mcar(1000, 150, 120, 0.0, 0.0, 0.0, seed);
            vec![Run::sweep(
                "phase_diagram",
                sweep(
                    base,
                    Axis::linspace(AxisParam::Theta, 0.5, 2.0, s.grid),
                    Some(Axis::linspace(AxisParam::Rho, 0.1, 0.95, s.grid)),
                    s.trials,
                    pls,
                ),
            )]
        }
        Preset::Exp3FiniteSize => {
            let (n_list, points, trials) = match scale {
                Scale::Paper => (vec![100, 250, 500, 1000, 2000, 5000], 13, 30),
                Scale::Desk => (vec![100, 500, 2000], 9, 20),
            };
            vec![Run {
                label: "finite_size".into(),
                sweep: None,
                finite_size: Some(FiniteSizeSpec {
                    alpha_x: 2.5,
                    alpha_y: 2.5,
                    m_x: 0.2,
                    m_y: 0.2,
                    n_list,
                    window: (0.85, 1.15),
                    points,
                    trials,
                    estimator: pls,
                    seed,
                }),
                random_directions: false,
            }]
        }
        Preset::Exp4MissingnessModes => {
            let s = sizes(
                scale,
                Sizes { trials: 30, theta_points: 0, grid: 50 },
                Sizes { trials: 10, theta_points: 0, grid: 15 },
            );
            let base = ModelConfig::mcar(800, 200, 200, 0.0, 0.0, 0.0, seed);
            let theta = Axis::linspace(AxisParam::Theta, 0.3, 2.0, s.grid);
            vec![
                Run::sweep(
                    "single_view",
                    sweep(base.clone(), theta.clone(), Some(Axis::linspace(AxisParam::MX, 0.0, 0.9, s.grid)), s.trials, pls),
                ),
                Run::sweep(
                    "joint",
                    sweep(base, theta, Some(Axis::linspace(AxisParam::MJoint, 0.0, 0.9, s.grid)), s.trials, pls),
                ),
            ]
        }
        Preset::Exp5SemiSynthetic => {
            let s = sizes(
                scale,
                Sizes { trials: 500, theta_points: 20, grid: 0 },
                Sizes { trials: 20, theta_points: 15, grid: 0 },
            );
            data = Some(DataSpec {
                x_path: None,
                y_path: None,
                target_dims: 200,
            });
            // Dimensions are placeholders; the loaded design fixes them.
            let base = ModelConfig::mcar(1000, 200, 200, 0.0, 0.3, 0.3, seed);
            let mut degradation_base = base.clone();
            degradation_base.mask_x.target_rate = 0.0;
            degradation_base.mask_y.target_rate = 0.0;
            let mut random = Run::sweep("random_directions", sweep(base.clone(), ratio(0.5, 2.5, s.theta_points), None, s.trials, pls));
            random.random_directions = true;
            vec![
                Run::sweep("transition", sweep(base.clone(), ratio(0.5, 2.5, s.theta_points), None, s.trials, pls)),
                Run::sweep(
                    "degradation",
                    sweep(
                        degradation_base,
                        Axis::new(AxisParam::MJoint, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]),
                        Some(Axis::new(AxisParam::ThetaOverCrit, vec![1.5])),
                        s.trials,
                        pls,
                    ),
                ),
                random,
            ]
        }
        Preset::Exp6SplitHalf => {
            let s = sizes(
                scale,
                Sizes { trials: 25, theta_points: 60, grid: 0 },
                Sizes { trials: 15, theta_points: 20, grid: 0 },
            );
            // α = 7.5 at N = 2000 gives D = 266.67; D = 266 and α is recomputed.
            let base = ModelConfig::mcar(2000, 266, 266, 0.0, 0.1, 0.1, seed);
            let mut spec = sweep(base, ratio(0.5, 2.5, s.theta_points), None, s.trials, pls);
            spec.diagnostics.split_half = true;
            vec![Run::sweep("split_half", spec)]
        }
        Preset::B1Noise => {
            let s = sizes(
                scale,
                Sizes { trials: 100, theta_points: 15, grid: 0 },
                Sizes { trials: 50, theta_points: 15, grid: 0 },
            );
            let noises = [
                ("gaussian", NoiseSpec::Gaussian),
                ("student_t_5", NoiseSpec::StudentT { nu: 5.0 }),
                ("student_t_4_5", NoiseSpec::StudentT { nu: 4.5 }),
                ("student_t_3", NoiseSpec::StudentT { nu: 3.0 }),
                ("laplace", NoiseSpec::Laplace),
                ("heteroskedastic", NoiseSpec::Heteroskedastic { low: 0.5, high: 1.5 }),
            ];
            noises
                .into_iter()
                .map(|(label, noise)| {
                    let mut base = ModelConfig::mcar(1000, 200, 150, 0.0, 0.3, 0.3, seed);
                    base.noise = noise;
                    Run::sweep(label, sweep(base, ratio(0.5, 2.5, s.theta_points), None, s.trials, pls))
                })
                .collect()
        }
        Preset::B2Mar => {
            let s = sizes(
                scale,
                Sizes { trials: 100, theta_points: 25, grid: 11 },
                Sizes { trials: 20, theta_points: 15, grid: 6 },
            );
            [
                Mechanism::SignalDependent,
                Mechanism::MagnitudeDependent,
                Mechanism::Thresholded,
                Mechanism::Correlated,
            ]
            .into_iter()
            .map(|mech| {
                let mut base = ModelConfig::mcar(1000, 200, 150, 0.0, 0.3, 0.3, seed);
                base.mask_y = MaskSpec::mar(mech, 0.3, 0.0);
                if !mech.response_only() {
                    base.mask_x = MaskSpec::mar(mech, 0.3, 0.0);
                }
                Run::sweep(
                    mech.name(),
                    sweep(
                        base,
                        ratio(0.5, 2.5, s.theta_points),
                        Some(Axis::new(AxisParam::Gamma, linspace(0.0, 1.0, s.grid))),
                        s.trials,
                        pls,
                    ),
                )
            })
            .collect()
        }
        Preset::B3Baselines => {
            let points = match scale {
                Scale::Paper => 16,
                Scale::Desk => 7,
            };
            EstimatorKind::baseline_suite()
                .into_iter()
                .map(|est| {
                    let base = ModelConfig::mcar(1000, 200, 150, 0.0, 0.3, 0.3, seed);
                    Run::sweep(est.name(), sweep(base, ratio(0.5, 2.0, points), None, 50, est))
                })
                .collect()
        }
    };
    ExperimentPlan {
        name: preset.name().to_string(),
        preset: Some(preset),
        scale: Some(scale),
        data,
        runs,
    }
}

/// `key=value` from the command line; the value is read as a TOML literal
/// and falls back to a bare string.
pub fn parse_override(text: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{text}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

pub const OVERRIDE_KEYS: [&str; 16] = [
    "seed",
    "trials",
    "points",
    "n_samples",
    "dx",
    "dy",
    "theta",
    "m_x",
    "m_y",
    "gamma",
    "noise",
    "estimator",
    "split_half",
    "data.x_path",
    "data.y_path",
    "data.target_dims",
];

fn as_u64(key: &str, v: &toml::Value) -> Result<u64> {
    v.as_integer()
        .filter(|i| *i >= 0)
        .map(|i| i as u64)
        .ok_or_else(|| Error::Config(format!("override `{key}` needs a non-negative integer, got {v}")))
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    v.as_float()
        .or_else(|| v.as_integer().map(|i| i as f64))
        .ok_or_else(|| Error::Config(format!("override `{key}` needs a number, got {v}")))
}

/// Deserializes `value` and rejects any key that does not survive a
/// round trip. This catches extra keys on unit variants of tagged enums,
/// which serde's own unknown-field check lets through.
fn strict<T: serde::de::DeserializeOwned + Serialize>(what: &str, value: toml::Value) -> Result<T> {
    let parsed: T = value
        .clone()
        .try_into()
        .map_err(|e| Error::Config(format!("{what}: {e}")))?;
    let echo = toml::Value::try_from(&parsed).map_err(|e| Error::Config(format!("{what}: {e}")))?;
    if let Some(path) = unknown_key(&value, &echo, "") {
        return Err(Error::Config(format!("{what}: unknown key `{path}`")));
    }
    Ok(parsed)
}

fn unknown_key(input: &toml::Value, echo: &toml::Value, path: &str) -> Option<String> {
    match (input, echo) {
        (toml::Value::Table(a), toml::Value::Table(b)) => a.iter().find_map(|(k, v)| {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            match b.get(k) {
                None => Some(p),
                Some(e) => unknown_key(v, e, &p),
            }
        }),
        (toml::Value::Array(a), toml::Value::Array(b)) => a
            .iter()
            .zip(b)
            .enumerate()
            .find_map(|(i, (v, e))| unknown_key(v, e, &format!("{path}[{i}]"))),
        _ => None,
    }
}

/// A tagged enum given either as a bare kind name or as an inline table.
fn tagged<T: serde::de::DeserializeOwned + Serialize>(key: &str, v: &toml::Value) -> Result<T> {
    let table = match v {
        toml::Value::String(kind) => {
            let mut t = toml::Table::new();
            t.insert("kind".into(), toml::Value::String(kind.clone()));
            toml::Value::Table(t)
        }
        other => other.clone(),
    };
    strict(&format!("override `{key}`"), table)
}

fn relinspace(axis: &mut Axis, count: usize) {
    let lo = axis.values.first().copied().unwrap_or(0.0);
    let hi = axis.values.last().copied().unwrap_or(lo);
    axis.values = linspace(lo, hi, count);
}

/// Applies `key = value` to every run it concerns. A key that concerns no
/// run is an error.
pub fn apply_override(plan: &mut ExperimentPlan, key: &str, value: &toml::Value) -> Result<()> {
    if !OVERRIDE_KEYS.contains(&key) {
        return Err(Error::Config(format!(
            "unknown override key `{key}`, expected one of {}",
            OVERRIDE_KEYS.join(", ")
        )));
    }
    if let Some(field) = key.strip_prefix("data.") {
        let data = plan.data.get_or_insert(DataSpec {
            x_path: None,
            y_path: None,
            target_dims: 200,
        });
        let path = || {
            value
                .as_str()
                .map(PathBuf::from)
                .ok_or_else(|| Error::Config(format!("override `{key}` needs a path string")))
        };
        match field {
            "x_path" => data.x_path = Some(path()?),
            "y_path" => data.y_path = Some(path()?),
            _ => data.target_dims = as_u64(key, value)? as usize,
        }
        return Ok(());
    }
    let mut applied = false;
    for run in &mut plan.runs {
        if let Some(s) = &mut run.sweep {
            applied = true;
            let b = &mut s.base;
            match key {
                "seed" => b.seed = as_u64(key, value)?,
                "trials" => s.trials = as_u64(key, value)? as usize,
                "points" => relinspace(&mut s.axis1, as_u64(key, value)? as usize),
                "n_samples" => b.n_samples = as_u64(key, value)? as usize,
                "dx" => b.dx = as_u64(key, value)? as usize,
                "dy" => b.dy = as_u64(key, value)? as usize,
                "theta" => b.theta = as_f64(key, value)?,
                "m_x" => b.mask_x.target_rate = as_f64(key, value)?,
                "m_y" => b.mask_y.target_rate = as_f64(key, value)?,
                "gamma" => {
                    b.mask_x.strength = as_f64(key, value)?;
                    b.mask_y.strength = b.mask_x.strength;
                }
                "noise" => b.noise = tagged(key, value)?,
                "estimator" => s.estimator = tagged(key, value)?,
                "split_half" => {
                    s.diagnostics.split_half = value
                        .as_bool()
                        .ok_or_else(|| Error::Config(format!("override `{key}` needs true or false")))?
                }
                _ => unreachable!(),
            }
        }
        if let Some(f) = &mut run.finite_size {
            let hit = match key {
                "seed" => {
                    f.seed = as_u64(key, value)?;
                    true
                }
                "trials" => {
                    f.trials = as_u64(key, value)? as usize;
                    true
                }
                "points" => {
                    f.points = as_u64(key, value)? as usize;
                    true
                }
                "m_x" => {
                    f.m_x = as_f64(key, value)?;
                    true
                }
                "m_y" => {
                    f.m_y = as_f64(key, value)?;
                    true
                }
                "estimator" => {
                    f.estimator = tagged(key, value)?;
                    true
                }
                _ => false,
            };
            applied |= hit;
        }
    }
    if !applied {
        return Err(Error::Config(format!("override `{key}` does not apply to any run of `{}`", plan.name)));
    }
    Ok(())
}

/// Resolves a preset with overrides applied in order, then validates.
pub fn resolve_preset(preset: Preset, scale: Scale, overrides: &[(String, toml::Value)]) -> Result<ExperimentPlan> {
    let mut plan = preset_plan(preset, scale, DEFAULT_SEED);
    for (k, v) in overrides {
        apply_override(&mut plan, k, v)?;
    }
    plan.validate()?;
    Ok(plan)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetRequest {
    preset: Preset,
    #[serde(default)]
    scale: Scale,
    #[serde(default)]
    overrides: toml::Table,
}

/// A configuration file is either a preset reference
/// (`preset`, `scale`, `[overrides]`) or a full plan with `runs`, such as the
/// echo printed by the CLI.
pub fn parse_config(text: &str) -> Result<ExperimentPlan> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("invalid TOML: {e}")))?;
    if table.contains_key("runs") {
        let plan: ExperimentPlan = strict("invalid plan", toml::Value::Table(table))?;
        plan.validate()?;
        return Ok(plan);
    }
    let req: PresetRequest = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
    let overrides: Vec<(String, toml::Value)> = flatten_overrides(&req.overrides, "");
    resolve_preset(req.preset, req.scale, &overrides)
}

/// `[overrides.data] x_path = ..` becomes `data.x_path`.
fn flatten_overrides(table: &toml::Table, prefix: &str) -> Vec<(String, toml::Value)> {
    let mut out = Vec::new();
    for (k, v) in table {
        let key = format!("{prefix}{k}");
        match v {
            toml::Value::Table(t) if key == "data" => out.extend(flatten_overrides(t, "data.")),
            _ => out.push((key, v.clone())),
        }
    }
    out
}
