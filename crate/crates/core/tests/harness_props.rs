mod common;

use std::collections::HashSet;

use maskpls::estimators::EstimatorKind;
use maskpls::harness::{
    correlation_with_theory, run_sweep, run_trial, Axis, AxisParam, Diagnostics, Execution, SweepSpec,
};
use maskpls::rng::{TrialId, TrialKey};
use maskpls::synth::ModelConfig;

fn grid_spec(seed: u64) -> SweepSpec {
    SweepSpec {
        base: ModelConfig::mcar(150, 30, 20, 0.0, 0.1, 0.1, seed),
        axis1: Axis::linspace(AxisParam::ThetaOverCrit, 0.5, 2.5, 4),
        axis2: Some(Axis::new(AxisParam::Rho, vec![0.4, 0.7, 1.0])),
        trials: 4,
        estimator: EstimatorKind::PlsSvdZero,
        diagnostics: Diagnostics { split_half: true },
    }
}

#[test]
fn serial_and_parallel_digests_agree() {
    let spec = grid_spec(7);
    let serial = run_sweep(&spec, Execution::Serial).unwrap();
    let parallel = run_sweep(&spec, Execution::ParallelWith(4)).unwrap();
    let default = run_sweep(&spec, Execution::Parallel).unwrap();
    assert_eq!(serial.digest(), parallel.digest());
    assert_eq!(serial.digest(), default.digest());
    let strip = |r: &maskpls::harness::SweepResult| {
        r.points
            .iter()
            .map(|p| (p.mean_r2x.to_bits(), p.std_r2y.to_bits(), p.mean_stability.map(f64::to_bits)))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&serial), strip(&parallel));
    assert_ne!(serial.digest(), run_sweep(&grid_spec(8), Execution::Serial).unwrap().digest());
}

#[test]
fn trial_keys_never_collide_over_a_grid() {
    let mut seen = HashSet::new();
    for seed in [0u64, 1, u64::MAX] {
        for point in 0..30u64 {
            for trial in 0..30u64 {
                assert!(seen.insert(TrialKey::new(seed, TrialId::new(point, trial)).key_bytes()));
            }
        }
    }
    let r = run_sweep(&grid_spec(3), Execution::Serial).unwrap();
    let digests: HashSet<_> = r.points.iter().map(|p| p.seeds_digest.clone()).collect();
    assert_eq!(digests.len(), r.points.len());
}

#[test]
fn aggregation_matches_reference() {
    let spec = grid_spec(11);
    let r = run_sweep(&spec, Execution::Serial).unwrap();
    assert_eq!(r.points.len(), 12);
    for (p, rec) in r.points.iter().enumerate() {
        let cfg = spec.resolve_point(p).unwrap();
        let trials: Vec<_> = (0..spec.trials)
            .map(|t| run_trial(&cfg, &spec.estimator, spec.diagnostics, TrialId::new(p as u64, t as u64)).metrics.unwrap())
            .collect();
        let (mx, sx) = common::mean_sd(&trials.iter().map(|m| m.r2_x).collect::<Vec<_>>());
        let (my, sy) = common::mean_sd(&trials.iter().map(|m| m.r2_y).collect::<Vec<_>>());
        let (ms, ss) = common::mean_sd(&trials.iter().map(|m| m.stability.unwrap()).collect::<Vec<_>>());
        for (a, b) in [(rec.mean_r2x, mx), (rec.std_r2x, sx), (rec.mean_r2y, my), (rec.std_r2y, sy)] {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        assert!((rec.mean_stability.unwrap() - ms).abs() <= 1e-12);
        assert!((rec.std_stability.unwrap() - ss).abs() <= 1e-12);

        let (tx, ty) = common::overlaps(cfg.alpha_x(), cfg.alpha_y(), cfg.rho(), cfg.theta);
        assert!((rec.theory_r2x - tx).abs() < 1e-12 && (rec.theory_r2y - ty).abs() < 1e-12);
        let (v1, v2) = spec.point_values(p);
        assert!((cfg.rho() - v2.unwrap()).abs() < 1e-12);
        let crit = common::threshold(cfg.alpha_x(), cfg.alpha_y(), v2.unwrap());
        assert!((cfg.theta - v1 * crit).abs() < 1e-12);
    }
    let c = correlation_with_theory(&r).unwrap();
    assert!((-1.0..=1.0).contains(&c));
}

#[test]
fn complete_data_oracle_and_zero_fill_coincide() {
    let cfg = ModelConfig::mcar(200, 25, 15, 1.3, 0.0, 0.0, 4);
    for t in 0..3 {
        let a = run_trial(&cfg, &EstimatorKind::Oracle, Diagnostics::default(), TrialId::new(0, t));
        let b = run_trial(&cfg, &EstimatorKind::PlsSvdZero, Diagnostics::default(), TrialId::new(0, t));
        assert_eq!(a.metrics.unwrap().r2_x, b.metrics.unwrap().r2_x);
    }
}

#[test]
fn null_signal_sits_at_the_null_scale() {
    let spec = SweepSpec {
        base: ModelConfig::mcar(600, 120, 80, 0.0, 0.2, 0.2, 2),
        axis1: Axis::new(AxisParam::Theta, vec![0.0]),
        axis2: None,
        trials: 20,
        estimator: EstimatorKind::PlsSvdZero,
        diagnostics: Diagnostics::default(),
    };
    let r = run_sweep(&spec, Execution::Serial).unwrap();
    assert!(r.points[0].mean_r2x < 5.0 / 120.0, "{}", r.points[0].mean_r2x);
}

#[test]
fn masking_x_lowers_the_left_overlap_at_fixed_retention() {
    // Same ρ = 0.49 either way. Masking the design turns part of the planted
    // term into a rank-one perturbation of the left factor, so R_x falls
    // below the closed form while masking only the response leaves it there.
    let run = |m_x: f64, m_y: f64| {
        let spec = SweepSpec {
            base: ModelConfig::mcar(1000, 200, 50, 0.0, m_x, m_y, 31),
            axis1: Axis::new(AxisParam::ThetaOverCrit, vec![2.5]),
            axis2: None,
            trials: 30,
            estimator: EstimatorKind::PlsSvdZero,
            diagnostics: Diagnostics::default(),
        };
        let p = run_sweep(&spec, Execution::Parallel).unwrap().points.remove(0);
        let cfg = spec.resolve_point(0).unwrap();
        let (tx, ty) = common::overlaps(cfg.alpha_x(), cfg.alpha_y(), cfg.rho(), cfg.theta);
        (p.mean_r2x - tx, p.mean_r2y - ty)
    };
    let (dx, dy) = run(0.0, 0.51);
    assert!(dx.abs() < 0.02 && dy.abs() < 0.02, "response only: {dx} {dy}");
    let (dx, dy) = run(0.51, 0.0);
    assert!(dx < -0.05 && dy.abs() < 0.02, "design only: {dx} {dy}");
}
