use std::process::{Command, Output};

fn maskpls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskpls")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn digest_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| l.split("digest = ").nth(1).map(str::to_string))
        .collect()
}

#[test]
fn theory_threshold() {
    let o = maskpls(&["theory", "--alpha-x", "5", "--alpha-y", "20", "--rho", "0.42"]);
    assert!(o.status.success());
    let line = stdout(&o).lines().find(|l| l.starts_with("theta_crit")).unwrap().to_string();
    let v: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!((0.483..=0.493).contains(&v), "{v}");

    let o = maskpls(&["theory", "--alpha-x", "1", "--alpha-y", "1", "--m-x", "0", "--m-y", "0", "--theta", "2"]);
    let text = stdout(&o);
    assert!(text.contains("r2_x = 0.750000"), "{text}");
}

#[test]
fn null_scale() {
    let o = maskpls(&["null-scale", "--dim", "200", "50"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("1/D = 0.005000") && text.contains("1/D = 0.020000"), "{text}");
}

#[test]
fn configuration_errors_exit_1() {
    for args in [
        vec!["run", "--preset", "exp9"],
        vec!["run", "--preset", "exp1_transition", "--override", "bogus=1"],
        vec!["run", "--preset", "exp1_transition", "--override", "m_x=1.5"],
        vec!["run", "--preset", "exp1_transition", "--scale", "huge"],
        vec!["run", "--preset", "exp5_semi_synthetic"],
        vec!["theory", "--alpha-x", "5", "--alpha-y", "20", "--rho", "0"],
    ] {
        let o = maskpls(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn ingest_check() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&good, "2,2\n1,2\n3,4\n").unwrap();
    std::fs::write(&bad, "2,2\n1,2\n").unwrap();
    let o = maskpls(&["ingest-check", good.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("ok, 2 x 2"));
    let o = maskpls(&["ingest-check", good.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("expects 4 values, found 2"));
}

#[test]
fn run_echoes_configuration_and_refeeding_it_reproduces_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp1.csv");
    let args = [
        "run",
        "--preset",
        "exp1_transition",
        "--override",
        "trials=2",
        "--override",
        "points=3",
        "--override",
        "n_samples=300",
        "--override",
        "dx=60",
        "--override",
        "dy=15",
        "--seed",
        "17",
        "--out",
        out.to_str().unwrap(),
    ];
    let o = maskpls(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("# resolved configuration"));
    assert!(text.contains("seed = 17") && text.contains("trials = 2") && text.contains("strength = 0.0"));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let echo: String = text
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with("# ") || l.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    let cfg = dir.path().join("resolved.toml");
    std::fs::write(&cfg, echo).unwrap();
    let again = maskpls(&["run", "--config", cfg.to_str().unwrap(), "--threads", "1"]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(digest_lines(&text), digest_lines(&stdout(&again)));
    assert_eq!(digest_lines(&text).len(), 1);
}

#[test]
fn failed_check_exits_3() {
    // The complete-data oracle recovers below the masked threshold, so the
    // subcritical check cannot hold.
    let o = maskpls(&[
        "run",
        "--preset",
        "exp1_transition",
        "--override",
        "estimator=oracle",
        "--override",
        "trials=2",
        "--override",
        "points=5",
        "--check",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("check FAIL"));
}

#[test]
fn json_output_for_multi_run_presets_goes_to_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b3");
    let o = maskpls(&[
        "run",
        "--preset",
        "b3_baselines",
        "--override",
        "trials=2",
        "--override",
        "points=2",
        "--override",
        "n_samples=200",
        "--override",
        "dx=40",
        "--override",
        "dy=30",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for label in ["pls_svd_zero", "mean_impute", "em_pls", "iterative_svd", "oracle"] {
        let text = std::fs::read_to_string(out.join(format!("{label}.json"))).unwrap();
        let doc = maskpls::io::read_results_json(&text).unwrap();
        assert_eq!(doc.metadata.label, label);
        assert_eq!(doc.result.points.len(), 2);
    }
}
