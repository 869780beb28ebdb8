//! Argument parsing and command handlers for the `subid` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use subid_core::algorithms::{self, Method};
use subid_core::conditioning;
use subid_core::hankel::{self, HankelConfig, HankelSet};
use subid_core::linalg::Vector;
use subid_core::lti::{self, DiagonalModelSpec, StateSpaceModel};
use subid_core::perturbation::{self, SweepConfig, TrialReport};
use subid_core::pipeline::{Tolerances, Weight, WeightingScheme};

/// Salt separating the excitation stream from the model stream under one seed.
const EXCITATION_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Parser)]
#[command(name = "subid", version, about = "Deterministic subspace identification toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalOpts {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Relative rank tolerance; non-positive selects the default.
    #[arg(long, global = true, default_value_t = subid_core::linalg::DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    /// Relative singular-value threshold for order detection.
    #[arg(long, global = true, default_value_t = subid_core::pipeline::DEFAULT_ORDER_TOL)]
    pub order_tol: f64,
    /// Report format for `identify` diagnostics and `perturb` reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    State,
    Shift,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::State => Method::State,
            MethodArg::Shift => Method::Shift,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random diagonal-pole model and simulate it under Gaussian input.
    Simulate(SimulateArgs),
    /// Identify a state-space model from a trajectory CSV.
    Identify(IdentifyArgs),
    /// Inject perturbations and compare measured errors with the bounds.
    Perturb(PerturbArgs),
    /// Sample cond(Γ_n) for random single-output systems.
    Conditioning(ConditioningArgs),
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// State dimension.
    #[arg(long, value_parser = positive)]
    pub n: usize,
    /// Output count.
    #[arg(long, value_parser = positive)]
    pub m: usize,
    /// Input count.
    #[arg(long, value_parser = positive)]
    pub p: usize,
    /// Number of samples.
    #[arg(long, value_parser = positive)]
    pub length: usize,
    /// Trajectory CSV to write.
    #[arg(long)]
    pub out_trajectory: PathBuf,
    /// Model JSON to write.
    #[arg(long)]
    pub out_model: PathBuf,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Trajectory CSV with header k,u1..,y1..
    #[arg(long)]
    pub input: PathBuf,
    /// Block rows per past/future half.
    #[arg(long, value_parser = positive)]
    pub i: usize,
    /// Hankel columns; defaults to using every sample.
    #[arg(long, value_parser = positive)]
    pub j: Option<usize>,
    /// Solve for the system matrices from states or by shift invariance.
    #[arg(long, value_enum, default_value_t = MethodArg::State)]
    pub algorithm: MethodArg,
    /// Force the model order instead of detecting it.
    #[arg(long, value_parser = positive)]
    pub order: Option<usize>,
    /// Left weight W1 as a dense CSV matrix.
    #[arg(long, requires = "w2")]
    pub w1: Option<PathBuf>,
    /// Right weight W2 as a dense CSV matrix.
    #[arg(long, requires = "w1")]
    pub w2: Option<PathBuf>,
    /// Model JSON to write.
    #[arg(long)]
    pub out_model: PathBuf,
    /// Diagnostics file to write.
    #[arg(long)]
    pub out_diag: PathBuf,
    /// Model JSON to compare against up to similarity.
    #[arg(long)]
    pub reference_model: Option<PathBuf>,
    /// Proceed even if the input is not persistently exciting.
    #[arg(long)]
    pub allow_weak_excitation: bool,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// State dimension.
    #[arg(long, value_parser = positive)]
    pub n: usize,
    /// Output count.
    #[arg(long, value_parser = positive)]
    pub m: usize,
    /// Input count.
    #[arg(long, value_parser = positive)]
    pub p: usize,
    /// Perturbation spectral norms, comma separated or repeated.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = perturbation::DEFAULT_SCALES)]
    pub scale: Vec<f64>,
    /// Random models, each run at every scale.
    #[arg(long, value_parser = positive, default_value_t = 50)]
    pub trials: usize,
    /// Identification method whose bounds are checked.
    #[arg(long, value_enum, default_value_t = MethodArg::State)]
    pub method: MethodArg,
    /// Report file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConditioningArgs {
    /// Smallest model order.
    #[arg(long, value_parser = positive, default_value_t = 2)]
    pub n_min: usize,
    /// Largest model order.
    #[arg(long, value_parser = positive, default_value_t = 12)]
    pub n_max: usize,
    /// Samples per order.
    #[arg(long, value_parser = positive, default_value_t = 1000, conflicts_with = "full")]
    pub trials: usize,
    /// Run 10^4 trials per order.
    #[arg(long)]
    pub full: bool,
    /// Per-sample CSV to write.
    #[arg(long)]
    pub out_samples: PathBuf,
    /// Per-order summary CSV to write.
    #[arg(long)]
    pub out_summary: PathBuf,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inconsistent arguments; exit 2.
    Usage(String),
    /// Runtime or assumption failure; exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<subid_core::Error> for CliError {
    fn from(e: subid_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn tolerances(g: &GlobalOpts, forced_order: Option<usize>) -> Tolerances {
    Tolerances {
        rank_tol: g.rank_tol,
        order_tol: g.order_tol,
        forced_order,
    }
}

/// Runs a parsed command; stdout lines are returned so tests can inspect them.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&cli.global, a),
        Command::Identify(a) => cmd_identify(&cli.global, a),
        Command::Perturb(a) => cmd_perturb(&cli.global, a),
        Command::Conditioning(a) => cmd_conditioning(&cli.global, a),
    }
}

pub fn cmd_simulate(g: &GlobalOpts, a: &SimulateArgs) -> Result<Vec<String>, CliError> {
    let model = lti::random_diagonal_model(&DiagonalModelSpec::new(a.n, a.m, a.p, g.seed))?;
    let u = lti::random_excitation(a.p, a.length, g.seed ^ EXCITATION_SALT);
    let traj = lti::simulate(&model, &Vector::zeros(a.n), &u)?;
    write_file(&a.out_trajectory, &hankel::write_trajectory_csv(&traj))?;
    write_file(&a.out_model, &model.to_json())?;
    Ok(vec![format!(
        "simulated n={} m={} p={} for {} samples",
        a.n, a.m, a.p, a.length
    )])
}

fn load_weight(path: &Path) -> Result<Weight, CliError> {
    Ok(Weight::Matrix(hankel::load_matrix_csv(path)?))
}

pub fn cmd_identify(g: &GlobalOpts, a: &IdentifyArgs) -> Result<Vec<String>, CliError> {
    let traj = hankel::load_trajectory_csv(&a.input)?;
    let cfg = match a.j {
        Some(j) => HankelConfig::new(a.i, j)?,
        None => HankelConfig::use_all_samples(a.i, traj.len())?,
    };
    let mut lines = Vec::new();
    let exciting = hankel::is_persistently_exciting(&traj, cfg, g.rank_tol)?;
    if !exciting {
        let msg = format!(
            "persistency of excitation: rank 2ip = {} not met by the input Hankel matrix",
            2 * cfg.i * traj.p()
        );
        if !a.allow_weak_excitation {
            return Err(CliError::Runtime(msg));
        }
        lines.push(format!("warning: {msg}"));
    }
    let h = HankelSet::build(&traj, cfg)?;
    let weights = match (&a.w1, &a.w2) {
        (Some(w1), Some(w2)) => WeightingScheme {
            w1: load_weight(w1)?,
            w2: load_weight(w2)?,
        },
        _ => WeightingScheme::identity(),
    };
    let tols = tolerances(g, a.order);
    let res = algorithms::identify(&h, &weights, &tols, a.algorithm.into())?;
    write_file(&a.out_model, &res.model.to_json())?;

    let mut diag = serde_json::Map::new();
    diag.insert("method".into(), json!(res.method));
    diag.insert("order".into(), json!(res.order));
    diag.insert("i".into(), json!(cfg.i));
    diag.insert("j".into(), json!(cfg.j));
    diag.insert("persistently_exciting".into(), json!(exciting));
    diag.insert("singular_values".into(), json!(res.core.singular_values));
    diag.insert("quantities".into(), json!(res.diagnostics));
    diag.insert("flags".into(), json!(res.flags));
    if let Some(path) = &a.reference_model {
        let reference = StateSpaceModel::load(path)?;
        let cmp = algorithms::compare_up_to_similarity(&reference, &res.model, 2 * cfg.i)?;
        diag.insert("reference".into(), json!(cmp));
        lines.push(format!(
            "pole_hausdorff={:e} markov_rel_error={:e}",
            cmp.pole_hausdorff, cmp.markov_rel_error
        ));
    }
    let diag = Value::Object(diag);
    let text = match g.format {
        Format::Json => pretty(&diag),
        Format::Csv => diagnostics_csv(&diag),
    };
    write_file(&a.out_diag, &text)?;
    lines.push(format!("identified order {} with the {} approach", res.order, res.method));
    Ok(lines)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialise");
    s.push('\n');
    s
}

/// Flattens scalar and array diagnostics into `key,value` rows.
fn diagnostics_csv(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            Value::Array(items) => {
                for (idx, child) in items.iter().enumerate() {
                    walk(&format!("{prefix}.{idx}"), child, out);
                }
            }
            Value::String(s) => {
                let _ = writeln!(out, "{prefix},\"{}\"", s.replace('"', "\"\""));
            }
            other => {
                let _ = writeln!(out, "{prefix},{other}");
            }
        }
    }
    let mut out = String::from("key,value\n");
    walk("", v, &mut out);
    out
}

pub fn cmd_perturb(g: &GlobalOpts, a: &PerturbArgs) -> Result<Vec<String>, CliError> {
    if let Some(bad) = a.scale.iter().find(|s| **s < 0.0 || !s.is_finite()) {
        return Err(CliError::Usage(format!("--scale must be finite and ≥ 0, got {bad}")));
    }
    let cfg = SweepConfig {
        n: a.n,
        m: a.m,
        p: a.p,
        method: a.method.into(),
        scales: a.scale.clone(),
        trials: a.trials,
        seed: g.seed,
    };
    let reports = perturbation::run_perturbation_sweep(&cfg)?;
    let violations = perturbation::collect_violations(&reports);
    let valid = reports.iter().filter(|r| r.valid).count();

    let text = match g.format {
        Format::Json => pretty(&json!({
            "method": cfg.method,
            "n": a.n,
            "m": a.m,
            "p": a.p,
            "seed": g.seed,
            "trials": a.trials,
            "scales": a.scale,
            "reports": reports,
            "violations": violations,
            "valid_trials": valid,
            "invalid_trials": reports.len() - valid,
        })),
        Format::Csv => perturb_csv(&reports),
    };
    write_file(&a.out, &text)?;
    let mut lines = vec![format!(
        "{} trials ({valid} valid), {} bound violations",
        reports.len(),
        violations.len()
    )];
    if !violations.is_empty() {
        for v in &violations {
            lines.push(format!(
                "violation: seed={} scale={:e} {} measured={:e} bound={:e}",
                v.seed, v.scale, v.bound_name, v.measured, v.bound
            ));
        }
        return Err(CliError::Runtime(lines.join("\n")));
    }
    Ok(lines)
}

/// One row per (trial, bound): `seed,scale,method,valid,bound,measured,value`.
fn perturb_csv(reports: &[TrialReport]) -> String {
    let mut out = String::from("seed,scale,method,valid,bound,measured,value\n");
    for r in reports {
        for (name, value) in &r.bounds {
            let measured = perturbation::measured_key(name)
                .and_then(|k| r.measured.get(k))
                .copied()
                .unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.seed, r.scale, r.method, r.valid, name, measured, value
            );
        }
    }
    out
}

pub fn cmd_conditioning(g: &GlobalOpts, a: &ConditioningArgs) -> Result<Vec<String>, CliError> {
    if a.n_min > a.n_max {
        return Err(CliError::Usage(format!(
            "--n-min {} exceeds --n-max {}",
            a.n_min, a.n_max
        )));
    }
    let trials = if a.full { 10_000 } else { a.trials };
    let reports = conditioning::run_conditioning_sweep(a.n_min, a.n_max, trials, g.seed)?;
    conditioning::save_samples_csv(&a.out_samples, &reports).map_err(|e| io_err(&a.out_samples, e))?;
    conditioning::save_summary_csv(&a.out_summary, &reports).map_err(|e| io_err(&a.out_summary, e))?;
    Ok(reports
        .iter()
        .map(|r| {
            format!(
                "n={} fraction_above_bound={:.6} fraction_sigma_bound={:.6} fraction_krylov_bound={:.6} median_cond={:e} lower_bound={:e} censored={}",
                r.n,
                r.fraction_above_bound(),
                r.fraction_sigma_bound(),
                r.fraction_krylov_bound(),
                r.median(),
                r.theoretical_lower_bound,
                r.censored_count()
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;

    /// Parses and runs `args`, mapping clap rejections to usage errors.
    fn exec(args: &[&str]) -> Result<Vec<String>, CliError> {
        let cli = Cli::try_parse_from(std::iter::once("subid").chain(args.iter().copied()))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        run(&cli)
    }

    fn path(dir: &Path, name: &str) -> String {
        dir.join(name).to_str().unwrap().to_owned()
    }

    fn read_json(path: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    fn simulate(dir: &Path, dims: [&str; 3], length: &str, seed: &str) -> (String, String) {
        let traj = path(dir, "traj.csv");
        let model = path(dir, "model.json");
        let [n, m, p] = dims;
        exec(&[
            "simulate", "--n", n, "--m", m, "--p", p, "--length", length, "--seed", seed,
            "--out-trajectory", &traj, "--out-model", &model,
        ])
        .unwrap();
        (traj, model)
    }

    #[test]
    fn positive_rejects_zero_and_garbage() {
        assert_eq!(positive("3"), Ok(3));
        assert!(positive("0").is_err());
        assert!(positive("-1").is_err());
    }

    #[test]
    fn diagnostics_flatten_nested_values() {
        let v = json!({"order": 2, "sv": [1.5, 0.5], "ref": {"method": "a\"b"}});
        let text = diagnostics_csv(&v);
        assert_eq!(text, "key,value\norder,2\nref.method,\"a\"\"b\"\nsv.0,1.5\nsv.1,0.5\n");
    }

    #[test]
    fn usage_and_runtime_exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Runtime("x".into()).exit_code(), 1);
    }

    #[test]
    fn simulate_writes_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let (traj, model) = simulate(dir.path(), ["3", "2", "1"], "200", "5");
        let text = std::fs::read_to_string(traj).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,u1,y1,y2");
        assert_eq!(lines.count(), 200);
        let m = StateSpaceModel::load(model).unwrap();
        assert_eq!((m.n(), m.m(), m.p()), (3, 2, 1));
    }

    #[test]
    fn zero_state_dimension_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = exec(&[
            "simulate", "--n", "0", "--m", "1", "--p", "1", "--length", "10",
            "--out-trajectory", &path(dir.path(), "t.csv"), "--out-model", &path(dir.path(), "m.json"),
        ])
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn identify_round_trip_for_both_algorithms() {
        let dir = tempfile::tempdir().unwrap();
        let (traj, model) = simulate(dir.path(), ["2", "1", "1"], "200", "9");
        let mut poles = Vec::new();
        for alg in ["state", "shift"] {
            let out_model = path(dir.path(), &format!("{alg}.json"));
            let out_diag = path(dir.path(), &format!("{alg}-diag.json"));
            exec(&[
                "identify", "--input", &traj, "--i", "4", "--algorithm", alg,
                "--out-model", &out_model, "--out-diag", &out_diag, "--reference-model", &model,
            ])
            .unwrap();
            let diag = read_json(&out_diag);
            assert_eq!(diag["order"], 2);
            assert!(diag["reference"]["pole_hausdorff"].as_f64().unwrap() <= 1e-6);
            assert!(diag["singular_values"].as_array().unwrap().len() >= 2);
            poles.push(StateSpaceModel::load(&out_model).unwrap().poles().unwrap());
        }
        assert!(subid_core::spectral::hausdorff_distance(&poles[0], &poles[1]).unwrap() <= 1e-6);
    }

    #[test]
    fn forced_order_and_csv_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let (traj, _) = simulate(dir.path(), ["3", "1", "1"], "200", "3");
        let diag = path(dir.path(), "diag.csv");
        exec(&[
            "identify", "--input", &traj, "--i", "5", "--order", "2", "--format", "csv",
            "--out-model", &path(dir.path(), "m.json"), "--out-diag", &diag,
        ])
        .unwrap();
        let text = std::fs::read_to_string(diag).unwrap();
        assert!(text.starts_with("key,value\n"));
        assert!(text.lines().any(|l| l == "order,2"));
    }

    #[test]
    fn weak_excitation_fails_unless_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let traj = path(dir.path(), "flat.csv");
        let mut text = String::from("k,u1,y1\n");
        for k in 0..60 {
            text.push_str(&format!("{k},1,{}\n", 0.5 * k as f64));
        }
        std::fs::write(&traj, text).unwrap();
        let model = path(dir.path(), "m.json");
        let diag = path(dir.path(), "d.json");
        let base = ["identify", "--input", &traj, "--i", "3", "--order", "1", "--out-model", &model, "--out-diag", &diag];
        let err = exec(&base).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.message().contains("persistency of excitation"));
        let mut relaxed = base.to_vec();
        relaxed.push("--allow-weak-excitation");
        let lines = exec(&relaxed).unwrap();
        assert!(lines[0].starts_with("warning: persistency"));
    }

    #[test]
    fn perturb_zero_scale_has_zero_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = path(dir.path(), "p.json");
        exec(&["perturb", "--n", "2", "--m", "1", "--p", "1", "--scale", "0", "--trials", "2", "--out", &out]).unwrap();
        let v = read_json(&out);
        for key in ["reports", "violations", "valid_trials", "method", "scales"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        for r in v["reports"].as_array().unwrap() {
            assert_eq!(r["measured"]["theta"].as_f64().unwrap(), 0.0);
        }
    }

    #[test]
    fn perturb_default_sweep_is_clean() {
        let dir = tempfile::tempdir().unwrap();
        let out = path(dir.path(), "p.json");
        exec(&["perturb", "--n", "3", "--m", "2", "--p", "2", "--method", "shift", "--trials", "3", "--out", &out]).unwrap();
        let v = read_json(&out);
        assert_eq!(v["reports"].as_array().unwrap().len(), 12);
        assert!(v["violations"].as_array().unwrap().is_empty());
    }

    #[test]
    fn perturb_rejects_negative_scale() {
        let err = exec(&["perturb", "--n", "2", "--m", "1", "--p", "1", "--scale=-1", "--out", "x.json"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn conditioning_summary_has_one_row_per_order() {
        let dir = tempfile::tempdir().unwrap();
        let summary = path(dir.path(), "summary.csv");
        let lines = exec(&[
            "conditioning", "--trials", "40", "--out-samples", &path(dir.path(), "s.csv"), "--out-summary", &summary,
        ])
        .unwrap();
        assert_eq!(std::fs::read_to_string(summary).unwrap().lines().count(), 1 + 11);
        assert_eq!(lines.len(), 11);
    }

    #[test]
    fn inverted_order_range_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = exec(&[
            "conditioning", "--n-min", "5", "--n-max", "3",
            "--out-samples", &path(dir.path(), "s.csv"), "--out-summary", &path(dir.path(), "u.csv"),
        ])
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
