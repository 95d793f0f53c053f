//! Command-line front end: single-instance allocation, experiment sweeps
//! with CSV/JSON output, and the randomized solver validation suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bcc_alloc::allocator::{allocate, AllocationResult, SolverConfig};
use bcc_alloc::channel::{partition, GainBounds, Partition};
use bcc_alloc::oracle::{kkt_residuals, validation_suite, ValidationSummary};
use bcc_alloc::rates::Weights;
use bcc_alloc::sim::{compare_baselines, csit_sweep, region_sweep, ExperimentConfig, ExperimentResult};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "bcc",
    about = "Power allocation and secrecy rate region tools for parallel broadcast channels",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file (experiment config, keys mirror the config fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path stem; writes <out>.csv and <out>.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override (applied after --set).
    #[arg(long)]
    seed: Option<u64>,
    /// Config override as key=value (value parsed as JSON; repeatable,
    /// last occurrence wins).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance from explicit gain-bound matrices.
    Allocate {
        /// JSON instance file: alpha_minus, alpha_plus, weights, p.
        #[arg(long)]
        config: PathBuf,
        /// Write the result JSON here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the weight grid and average boundary rates per weight point.
    Region(CommonArgs),
    /// Compare optimal, uniform and fixed-split schemes over an SNR sweep.
    Compare(CommonArgs),
    /// Sweep the outage threshold under noisy channel knowledge.
    Csit(CommonArgs),
    /// Validate the solver against the brute-force oracle and residual
    /// checks on random instances.
    Validate {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long = "max-l", default_value_t = 2)]
        max_l: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    kind: &'a str,
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let rec = ErrorRecord {
        error: message,
        kind,
    };
    eprintln!("{}", serde_json::to_string(&rec).unwrap());
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => fail(e.kind, &e.message),
    }
}

struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl From<bcc_alloc::Error> for CliError {
    fn from(e: bcc_alloc::Error) -> Self {
        CliError::new("solver", e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new("config", e.to_string())
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Allocate { config, out } => run_allocate(&config, out.as_deref()),
        Command::Region(args) => run_experiment(args, "region", |cfg, solver| {
            region_sweep(cfg, solver).map_err(Into::into)
        }),
        Command::Compare(args) => run_experiment(args, "compare", |cfg, solver| {
            compare_baselines(cfg, solver).map_err(Into::into)
        }),
        Command::Csit(args) => run_experiment(args, "csit", |cfg, solver| {
            csit_sweep(cfg, solver).map_err(Into::into)
        }),
        Command::Validate {
            instances,
            max_l,
            seed,
            out,
            threads,
        } => run_validate(instances, max_l, seed, out.as_deref(), threads),
    }
}

/// Instance file for the `allocate` subcommand.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocateInput {
    alpha_minus: [Vec<f64>; 2],
    alpha_plus: [Vec<f64>; 2],
    weights: Weights,
    p: f64,
    #[serde(default)]
    solver: Option<SolverConfig>,
}

#[derive(Debug, Serialize)]
struct AllocateOutput<'a> {
    partition: &'a Partition,
    #[serde(flatten)]
    result: &'a AllocationResult,
    kkt_max_violation: f64,
}

fn run_allocate(config: &Path, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let raw = std::fs::read_to_string(config)?;
    let input: AllocateInput = serde_json::from_str(&raw)?;
    Weights::new(input.weights.w0, input.weights.w1, input.weights.w2)?;
    let bounds = GainBounds::new(input.alpha_minus, input.alpha_plus)?;
    let part = partition(&bounds);
    let solver = input.solver.unwrap_or_default();
    let result = allocate(&bounds, &part, &input.weights, input.p, &solver)?;
    let report = kkt_residuals(&bounds, &part, &input.weights, &result.allocation, &result.diagnostics)?;
    let output = AllocateOutput {
        partition: &part,
        result: &result,
        kkt_max_violation: report.max_violation,
    };
    let text = serde_json::to_string_pretty(&output)?;
    println!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new("config", e.to_string()))?;
    }
    Ok(())
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut value = match &args.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path)?;
            serde_json::from_str::<serde_json::Value>(&raw)?
        }
        None => serde_json::json!({}),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::new("config", "config file must hold a JSON object"))?;
    for pair in &args.set {
        let (key, raw_value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::new("config", format!("--set expects key=value, got `{pair}`")))?;
        let parsed = serde_json::from_str::<serde_json::Value>(raw_value)
            .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));
        obj.insert(key.to_string(), parsed);
    }
    if let Some(seed) = args.seed {
        obj.insert("seed".into(), serde_json::json!(seed));
    }
    let cfg: ExperimentConfig = serde_json::from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

fn output_stem(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn run_experiment<F>(args: CommonArgs, name: &str, driver: F) -> Result<ExitCode, CliError>
where
    F: Fn(&ExperimentConfig, &SolverConfig) -> Result<ExperimentResult, CliError>,
{
    configure_threads(args.threads)?;
    let cfg = load_config(&args)?;
    let solver = SolverConfig::default();
    let result = driver(&cfg, &solver)?;
    let stem = output_stem(args.out.as_deref().unwrap_or(Path::new(name)));
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    std::fs::write(&csv_path, result.to_csv())?;
    std::fs::write(&json_path, result.to_json())?;
    println!(
        "{name}: {} rows over {} trials (seed {}) -> {}, {}",
        result.rows.len(),
        cfg.trials,
        cfg.seed,
        csv_path.display(),
        json_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn print_validation(summary: &ValidationSummary) {
    for o in &summary.outcomes {
        if o.objective_gap > summary.objective_tol || o.kkt_violation > summary.kkt_tol {
            println!(
                "instance {:>3} (L={}, {}): FAIL gap={:.3e} kkt={:.3e} step{}",
                o.instance,
                o.l,
                if o.imperfect { "imperfect" } else { "perfect" },
                o.objective_gap,
                o.kkt_violation,
                o.step.as_u8(),
            );
        }
    }
    println!(
        "validate: {} instances, max objective gap {:.3e} (tol {:.1e}), max KKT violation {:.3e} (tol {:.1e}) -> {}",
        summary.outcomes.len(),
        summary.max_objective_gap,
        summary.objective_tol,
        summary.max_kkt_violation,
        summary.kkt_tol,
        if summary.pass() { "PASS" } else { "FAIL" }
    );
}

fn run_validate(
    instances: usize,
    max_l: usize,
    seed: u64,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<ExitCode, CliError> {
    configure_threads(threads)?;
    let summary = validation_suite(instances, max_l, seed, &SolverConfig::default())?;
    print_validation(&summary);
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    }
    if summary.pass() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CliError::new("validation", "oracle or residual checks failed"))
    }
}
