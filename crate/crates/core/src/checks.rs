//! Pass/fail thresholds for the preset experiments, used by `run --check`.

use std::collections::BTreeMap;

use crate::harness::{empirical_boundary, FiniteSizeRecord, PointRecord, SweepResult};
use crate::io::Preset;

/// Output of one run of a plan.
#[derive(Debug, Clone)]
pub enum RunOutcome {
    Sweep(SweepResult),
    FiniteSize(Vec<FiniteSizeRecord>),
}

impl RunOutcome {
    pub fn sweep(&self) -> Option<&SweepResult> {
        match self {
            RunOutcome::Sweep(s) => Some(s),
            RunOutcome::FiniteSize(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed,
        detail,
    }
}

fn ratio(p: &PointRecord) -> f64 {
    p.theta / p.theta_crit
}

/// Standard error of a point's mean `R_x²`.
pub fn standard_error(p: &PointRecord) -> f64 {
    p.std_r2x / (p.trials_effective.max(1) as f64).sqrt()
}

/// Checks for `preset` given its outcomes keyed by run label. Presets
/// without thresholds return an empty list.
pub fn evaluate(preset: Preset, outcomes: &BTreeMap<String, RunOutcome>) -> Vec<CheckOutcome> {
    let sweep = |label: &str| outcomes.get(label).and_then(RunOutcome::sweep);
    let missing = |label: &str| vec![outcome(label, false, format!("run `{label}` missing"))];
    match preset {
        Preset::Exp1Transition => {
            let Some(r) = sweep("transition") else { return missing("transition") };
            let mut worst_super: f64 = 0.0;
            let mut worst_sub: f64 = 0.0;
            for p in &r.points {
                if ratio(p) > 1.1 {
                    worst_super = worst_super
                        .max((p.mean_r2x - p.theory_r2x).abs())
                        .max((p.mean_r2y - p.theory_r2y).abs());
                } else if ratio(p) < 0.9 {
                    worst_sub = worst_sub.max(p.mean_r2x).max(p.mean_r2y);
                }
            }
            let corr = r.correlation.unwrap_or(f64::NAN);
            vec![
                outcome("supercritical deviation < 0.05", worst_super < 0.05, format!("max {worst_super:.4}")),
                outcome("subcritical mean < 0.05", worst_sub < 0.05, format!("max {worst_sub:.4}")),
                outcome("correlation > 0.99", corr > 0.99, format!("r = {corr:.5}")),
            ]
        }
        Preset::Exp2PhaseDiagram => {
            let Some(r) = sweep("phase_diagram") else { return missing("phase_diagram") };
            let corr = r.correlation.unwrap_or(f64::NAN);
            vec![outcome("correlation > 0.97", corr > 0.97, format!("r = {corr:.5}"))]
        }
        Preset::Exp3FiniteSize => {
            let Some(RunOutcome::FiniteSize(recs)) = outcomes.get("finite_size") else {
                return missing("finite_size");
            };
            let widths: Vec<Option<f64>> = recs.iter().map(|r| r.transition_width).collect();
            let decreasing = widths.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a));
            vec![outcome("transition width strictly decreases", decreasing, format!("{widths:?}"))]
        }
        Preset::Exp4MissingnessModes => {
            let (Some(single), Some(joint)) = (sweep("single_view"), sweep("joint")) else {
                return missing("single_view/joint");
            };
            let (Ok(bs), Ok(bj)) = (empirical_boundary(single), empirical_boundary(joint)) else {
                return vec![outcome("boundary", false, "boundary extraction failed".into())];
            };
            let mut ok = true;
            let mut detail = Vec::new();
            for ((m, s), (_, j)) in bs.iter().zip(&bj) {
                if (0.2..=0.7).contains(m) {
                    let above = matches!((s, j), (Some(s), Some(j)) if j > s);
                    ok &= above;
                    detail.push(format!("m={m:.3}: {s:?} vs {j:?}"));
                }
            }
            vec![outcome("joint boundary above single-view", ok, detail.join("; "))]
        }
        Preset::Exp6SplitHalf => {
            let Some(r) = sweep("split_half") else { return missing("split_half") };
            let stab = |p: &PointRecord| p.mean_stability.unwrap_or(f64::NAN);
            let sub = r.points.iter().filter(|p| ratio(p) < 1.0).all(|p| stab(p) < 0.3);
            let middle = r
                .points
                .iter()
                .any(|p| ratio(p) > 1.0 && ratio(p) < 2f64.sqrt() && p.mean_r2x > 0.2 && stab(p) < 0.6);
            let deep = r.points.iter().filter(|p| ratio(p) > 2.0).all(|p| stab(p) > 0.8);
            vec![
                outcome("stability < 0.3 below threshold", sub, String::new()),
                outcome("recovered but unstable regime exists", middle, String::new()),
                outcome("stability > 0.8 above 2x threshold", deep, String::new()),
            ]
        }
        Preset::B1Noise => ["gaussian", "laplace", "student_t_5"]
            .iter()
            .map(|label| match sweep(label) {
                None => outcome(label, false, "missing".into()),
                Some(r) => {
                    let devs: Vec<f64> = r
                        .points
                        .iter()
                        .filter(|p| ratio(p) > 1.1)
                        .map(|p| (p.mean_r2x - p.theory_r2x).abs())
                        .collect();
                    let mad = devs.iter().sum::<f64>() / devs.len().max(1) as f64;
                    outcome(&format!("{label} mean deviation < 0.05"), mad < 0.05, format!("{mad:.4}"))
                }
            })
            .collect(),
        Preset::B3Baselines => {
            let at = |label: &str| -> Option<PointRecord> {
                sweep(label)?
                    .points
                    .iter()
                    .min_by(|a, b| (ratio(a) - 1.5).abs().total_cmp(&(ratio(b) - 1.5).abs()))
                    .cloned()
            };
            let Some(pls) = at("pls_svd_zero") else { return missing("pls_svd_zero") };
            let Some(oracle) = at("oracle") else { return missing("oracle") };
            let mut out = Vec::new();
            for label in ["mean_impute", "em_pls", "iterative_svd"] {
                let Some(p) = at(label) else {
                    out.push(outcome(label, false, "missing".into()));
                    continue;
                };
                let se = standard_error(&p).hypot(standard_error(&pls));
                let gain = p.mean_r2x - pls.mean_r2x;
                out.push(outcome(&format!("{label} not above pls_svd_zero"), gain <= 2.0 * se, format!("{gain:.4} vs 2se {:.4}", 2.0 * se)));
                let se_o = standard_error(&p).hypot(standard_error(&oracle));
                let gap = oracle.mean_r2x - p.mean_r2x;
                out.push(outcome(&format!("oracle above {label}"), gap > 2.0 * se_o, format!("{gap:.4} vs 2se {:.4}", 2.0 * se_o)));
            }
            let se_o = standard_error(&pls).hypot(standard_error(&oracle));
            let gap = oracle.mean_r2x - pls.mean_r2x;
            out.push(outcome("oracle above pls_svd_zero", gap > 2.0 * se_o, format!("{gap:.4} vs 2se {:.4}", 2.0 * se_o)));
            out
        }
        Preset::Exp5SemiSynthetic | Preset::B2Mar => Vec::new(),
    }
}
