use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use maskpls::checks::{self, RunOutcome};
use maskpls::harness::{finite_size_study, run_sweep_on, Execution, SweepResult};
use maskpls::io::{
    self, emit_results, ingest_matrix, parse_config, parse_override, resolve_preset, ExperimentPlan, Format, Preset,
    RunMetadata, Scale,
};
use maskpls::synth::{prepare_semi_synthetic, Design};
use maskpls::theory::{self, TheoryPrediction};
use maskpls::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "maskpls", version, about = "PLS-SVD phase transitions under two-view missingness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the critical threshold and asymptotic overlaps.
    Theory(TheoryArgs),
    /// Run a preset or a configuration file.
    Run(RunArgs),
    /// Validate matrix files and print their shapes.
    IngestCheck {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Print the null alignment scale 1/D.
    NullScale {
        #[arg(long, required = true, num_args = 1..)]
        dim: Vec<usize>,
    },
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long)]
    alpha_x: f64,
    #[arg(long)]
    alpha_y: f64,
    /// Joint retention; alternatively give --m-x and --m-y.
    #[arg(long, conflicts_with_all = ["m_x", "m_y"])]
    rho: Option<f64>,
    #[arg(long)]
    m_x: Option<f64>,
    #[arg(long)]
    m_y: Option<f64>,
    /// Signal strength; adds the overlap predictions.
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    #[arg(long, default_value = "desk")]
    scale: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Result file, or a directory when the plan has several runs.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs serially.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Evaluate the preset's acceptance thresholds; exit 3 on failure.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Theory(a) => theory_cmd(&a),
        Command::Run(a) => run_cmd(&a),
        Command::IngestCheck { files } => ingest_cmd(&files),
        Command::NullScale { dim } => null_scale_cmd(&dim),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err((code, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<u8, (u8, Error)>;

fn config_err(e: Error) -> (u8, Error) {
    (EXIT_CONFIG, e)
}

fn runtime_err(e: Error) -> (u8, Error) {
    (EXIT_RUNTIME, e)
}

fn theory_cmd(a: &TheoryArgs) -> CmdResult {
    let rho = match (a.rho, a.m_x, a.m_y) {
        (Some(r), _, _) => r,
        (None, mx, my) => (1.0 - mx.unwrap_or(0.0)) * (1.0 - my.unwrap_or(0.0)),
    };
    let crit = theory::critical_threshold(a.alpha_x, a.alpha_y, rho).map_err(config_err)?;
    println!("alpha_x = {}", a.alpha_x);
    println!("alpha_y = {}", a.alpha_y);
    println!("rho = {rho}");
    println!("theta_crit = {crit:.6}");
    if let Some(theta) = a.theta {
        let p = TheoryPrediction::new(a.alpha_x, a.alpha_y, rho, theta).map_err(config_err)?;
        println!("theta = {theta}");
        println!("theta_over_crit = {:.6}", theta / crit);
        println!("theta_eff = {:.6}", p.theta_eff);
        println!("r2_x = {:.6}", p.r2_x);
        println!("r2_y = {:.6}", p.r2_y);
    }
    Ok(0)
}

fn null_scale_cmd(dims: &[usize]) -> CmdResult {
    for &d in dims {
        if d == 0 {
            return Err(config_err(Error::Config("dimension must be positive".into())));
        }
        println!("D = {d}: 1/D = {:.6}, 3/D = {:.6}, 5/D = {:.6}", 1.0 / d as f64, 3.0 / d as f64, 5.0 / d as f64);
    }
    Ok(0)
}

fn ingest_cmd(files: &[PathBuf]) -> CmdResult {
    let mut failed = false;
    for f in files {
        match ingest_matrix(f) {
            Ok(m) => println!("{}: ok, {} x {}", f.display(), m.rows(), m.cols()),
            Err(e) => {
                println!("{}: {e}", f.display());
                failed = true;
            }
        }
    }
    Ok(if failed { EXIT_RUNTIME } else { 0 })
}

fn resolve_plan(a: &RunArgs) -> Result<ExperimentPlan, Error> {
    let mut overrides = Vec::new();
    if let Some(seed) = a.seed {
        overrides.push(("seed".to_string(), toml::Value::Integer(seed as i64)));
    }
    for o in &a.overrides {
        overrides.push(parse_override(o)?);
    }
    match (&a.preset, &a.config) {
        (Some(p), _) => resolve_preset(p.parse::<Preset>()?, a.scale.parse::<Scale>()?, &overrides),
        (None, Some(path)) => {
            let mut plan = parse_config(&std::fs::read_to_string(path)?)?;
            for (k, v) in &overrides {
                io::apply_override(&mut plan, k, v)?;
            }
            plan.validate()?;
            Ok(plan)
        }
        (None, None) => Err(Error::Config("give --preset or --config".into())),
    }
}

fn output_path(out: &Path, plan: &ExperimentPlan, label: &str, format: Format) -> Result<PathBuf, Error> {
    if plan.runs.len() == 1 && out.extension().is_some() {
        return Ok(out.to_path_buf());
    }
    std::fs::create_dir_all(out)?;
    Ok(out.join(format!("{label}.{}", format.extension())))
}

fn summarize(label: &str, r: &SweepResult) {
    let invalid = r.points.iter().filter(|p| !p.valid).count();
    let corr = r.correlation.map_or("n/a".to_string(), |c| format!("{c:.5}"));
    println!(
        "[{label}] points = {}, correlation = {corr}, invalid points = {invalid}, runtime = {:.1}s, digest = {}",
        r.points.len(),
        r.total_runtime,
        &r.digest()[..16]
    );
    for p in r.points.iter().filter(|p| !p.errors.is_empty()).take(3) {
        eprintln!("[{label}] point {}: {}", p.index, p.errors.join("; "));
    }
}

fn run_cmd(a: &RunArgs) -> CmdResult {
    let plan = resolve_plan(a).map_err(config_err)?;
    let format: Format = a.format.parse().map_err(config_err)?;
    let exec = Execution::from_threads(a.threads);
    if a.threads == Some(0) {
        return Err(config_err(Error::Config("--threads must be at least 1".into())));
    }
    println!("# resolved configuration");
    println!("{}", plan.to_toml().map_err(config_err)?);
    println!("# {} trials", plan.total_trials());

    let design = match &plan.data {
        Some(d) => match (&d.x_path, &d.y_path) {
            (Some(x), Some(y)) => {
                let xm = ingest_matrix(x).map_err(runtime_err)?;
                let ym = ingest_matrix(y).map_err(runtime_err)?;
                Some(Arc::new(prepare_semi_synthetic(&xm, &ym, d.target_dims).map_err(runtime_err)?))
            }
            _ => None,
        },
        None => None,
    };

    let start = Instant::now();
    let mut outcomes = BTreeMap::new();
    for run in &plan.runs {
        let outcome = if let Some(spec) = &run.sweep {
            let mut spec = spec.clone();
            let design = match &design {
                Some(d) => {
                    spec.base.n_samples = d.n_samples();
                    spec.base.dx = d.dx();
                    spec.base.dy = d.dy();
                    Design::Prepared {
                        design: Arc::clone(d),
                        random_directions: run.random_directions,
                    }
                }
                None => Design::Gaussian,
            };
            let r = run_sweep_on(&spec, &design, exec).map_err(runtime_err)?;
            summarize(&run.label, &r);
            RunOutcome::Sweep(r)
        } else if let Some(fs) = &run.finite_size {
            let recs = finite_size_study(fs, exec).map_err(runtime_err)?;
            for rec in &recs {
                summarize(&format!("{} N={}", run.label, rec.n_samples), &rec.sweep);
                println!("[{} N={}] transition width = {:?}", run.label, rec.n_samples, rec.transition_width);
            }
            RunOutcome::FiniteSize(recs)
        } else {
            unreachable!("validated plan");
        };
        if let Some(out) = &a.out {
            let write = |label: &str, r: &SweepResult| -> Result<(), Error> {
                let path = output_path(out, &plan, label, format)?;
                let meta = RunMetadata {
                    experiment: plan.name.clone(),
                    preset: plan.preset.map(|p| p.name().to_string()),
                    scale: plan.scale.map(|s| s.to_string()),
                    label: label.to_string(),
                    seed: r.seed,
                    version: env!("CARGO_PKG_VERSION").to_string(),
                };
                emit_results(r, format, &path, &meta)
            };
            match &outcome {
                RunOutcome::Sweep(r) => write(&run.label, r).map_err(runtime_err)?,
                RunOutcome::FiniteSize(recs) => {
                    for rec in recs {
                        write(&format!("{}_n{}", run.label, rec.n_samples), &rec.sweep).map_err(runtime_err)?;
                    }
                }
            }
        }
        outcomes.insert(run.label.clone(), outcome);
    }
    println!("# total runtime {:.1}s", start.elapsed().as_secs_f64());

    if a.check {
        let Some(preset) = plan.preset else {
            return Err(config_err(Error::Config("--check needs a preset plan".into())));
        };
        let results = checks::evaluate(preset, &outcomes);
        if results.is_empty() {
            println!("check: no thresholds defined for {preset}");
        }
        let mut all = true;
        for c in &results {
            println!("check {}: {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            all &= c.passed;
        }
        if !all {
            return Ok(EXIT_CHECK);
        }
    }
    Ok(0)
}
