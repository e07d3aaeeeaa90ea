mod common;

use maskpls::rng::TrialId;
use maskpls::synth::mask::missing_rate;
use maskpls::synth::{generate_pair, sample_noise, MaskSpec, Mechanism, ModelConfig, NoiseSpec};
use proptest::prelude::*;

fn moments(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let k = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n / (v * v) - 3.0;
    (m, v, k)
}

#[test]
fn mar_mechanisms_hit_the_target_rate() {
    for mech in [
        Mechanism::SignalDependent,
        Mechanism::MagnitudeDependent,
        Mechanism::Thresholded,
        Mechanism::Correlated,
    ] {
        for gamma in [0.25, 0.5, 1.0] {
            let mut cfg = ModelConfig::mcar(1000, 200, 150, 0.6, 0.3, 0.3, 5);
            cfg.mask_y = MaskSpec::mar(mech, 0.3, gamma);
            if !mech.response_only() {
                cfg.mask_x = MaskSpec::mar(mech, 0.3, gamma);
            }
            let pair = generate_pair(&cfg, None, TrialId::new(0, 1)).unwrap();
            let ry = missing_rate(&pair.mask_y);
            let rx = missing_rate(&pair.mask_x);
            assert!((ry - 0.3).abs() <= 0.01, "{mech} γ={gamma}: Y rate {ry}");
            assert!((rx - 0.3).abs() <= 0.01, "{mech} γ={gamma}: X rate {rx}");
        }
    }
}

#[test]
fn signal_dependent_mask_prefers_high_signal_rows() {
    let mut cfg = ModelConfig::mcar(1000, 200, 150, 1.0, 0.0, 0.3, 8);
    cfg.mask_y = MaskSpec::mar(Mechanism::SignalDependent, 0.3, 1.0);
    let pair = generate_pair(&cfg, None, TrialId::default()).unwrap();
    let latent = pair.latent.as_ref().unwrap();
    let signal = latent.x.matvec(&pair.u0);
    let row_missing: Vec<f64> = (0..1000).map(|i| pair.mask_y.row(i).iter().filter(|&&v| v == 0.0).count() as f64).collect();
    let abs_sig: Vec<f64> = signal.iter().map(|s| s.abs()).collect();
    assert!(maskpls::linalg::vector_correlation(
        &abs_sig.iter().map(|v| v - abs_sig.iter().sum::<f64>() / 1000.0).collect::<Vec<_>>(),
        &row_missing.iter().map(|v| v - row_missing.iter().sum::<f64>() / 1000.0).collect::<Vec<_>>(),
    )
    .unwrap()
        > 0.5);
}

#[test]
fn response_only_mechanisms_are_rejected_on_x() {
    let mut cfg = ModelConfig::mcar(100, 10, 10, 1.0, 0.3, 0.3, 1);
    cfg.mask_x = MaskSpec::mar(Mechanism::Correlated, 0.3, 0.5);
    assert!(generate_pair(&cfg, None, TrialId::default()).is_err());
}

#[test]
fn noise_moments() {
    let cases = [
        (NoiseSpec::Gaussian, 0.0, 0.1),
        (NoiseSpec::Laplace, 3.0, 0.2),
        (NoiseSpec::StudentT { nu: 5.0 }, 6.0, 2.5),
        (NoiseSpec::StudentT { nu: 9.0 }, 1.2, 0.4),
    ];
    for (spec, kurt, tol) in cases {
        let z = sample_noise(&spec, 1000, 1000, 99).unwrap();
        let (m, v, k) = moments(z.as_slice());
        assert!(m.abs() < 5e-3, "{spec}: mean {m}");
        assert!((v - 1.0).abs() < 1.5e-2, "{spec}: variance {v}");
        assert!((k - kurt).abs() < tol, "{spec}: kurtosis {k}");
        assert_eq!(spec.excess_kurtosis().map(|e| (e - kurt).abs() < 1e-12), Some(true));
    }
}

#[test]
fn heteroskedastic_columns() {
    let z = sample_noise(&NoiseSpec::Heteroskedastic { low: 0.5, high: 1.5 }, 20_000, 40, 4).unwrap();
    let vars: Vec<f64> = (0..40).map(|j| moments(&z.column(j)).1).collect();
    assert!(vars.iter().all(|v| (0.45..=1.55).contains(v)), "{vars:?}");
    let (mean_var, sd_var) = common::mean_sd(&vars);
    assert!((mean_var - 1.0).abs() < 0.15);
    // Uniform[0.5, 1.5] has sd 1/√12 ≈ 0.289.
    assert!(sd_var > 0.15, "{sd_var}");
}

#[test]
fn cross_covariance_mean_is_attenuated_spike() {
    // E[u₀ᵀ C v₀] = √ρ θ, checked on a small model.
    let cfg = ModelConfig::mcar(300, 30, 20, 1.2, 0.3, 0.2, 21);
    let vals: Vec<f64> = (0..200)
        .map(|t| {
            let pair = generate_pair(&cfg, None, TrialId::new(0, t)).unwrap();
            let c = maskpls::estimators::rescaled_cross_covariance(&pair).unwrap();
            common::dot(&pair.u0, &c.matvec(&pair.v0))
        })
        .collect();
    let (m, sd) = common::mean_sd(&vals);
    let target = (0.7f64 * 0.8).sqrt() * 1.2;
    assert!((m - target).abs() < 4.0 * sd / (200f64).sqrt() + 1e-3, "{m} vs {target}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generation_is_deterministic_and_trials_differ(seed in any::<u64>(), point in 0u64..1000, trial in 0u64..1000) {
        let cfg = ModelConfig::mcar(40, 8, 6, 1.0, 0.2, 0.1, seed);
        let a = generate_pair(&cfg, None, TrialId::new(point, trial)).unwrap();
        let b = generate_pair(&cfg, None, TrialId::new(point, trial)).unwrap();
        prop_assert_eq!(&a, &b);
        let c = generate_pair(&cfg, None, TrialId::new(point, trial + 1)).unwrap();
        prop_assert_ne!(a.x_obs.as_slice(), c.x_obs.as_slice());
    }

    #[test]
    fn observed_entries_equal_latent_where_retained(seed in any::<u64>(), m in 0.0f64..0.9) {
        let cfg = ModelConfig::mcar(30, 5, 4, 0.7, m, m, seed);
        let p = generate_pair(&cfg, None, TrialId::default()).unwrap();
        let lat = p.latent.as_ref().unwrap();
        for (k, &s) in p.mask_y.as_slice().iter().enumerate() {
            prop_assert!(s == 0.0 || s == 1.0);
            prop_assert_eq!(p.y_obs.as_slice()[k], s * lat.y.as_slice()[k]);
        }
        prop_assert!((maskpls::linalg::norm(&p.u0) - 1.0).abs() < 1e-12);
    }
}
