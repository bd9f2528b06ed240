//! `gseq` — simulate two-session sequential experiments and estimate
//! treatment-path contrasts via G-computation.
//!
//! Exit codes: 0 success, 2 config/flag error, 3 I/O error,
//! 4 estimation infeasible (empty required stratum).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gseq_core::baselines::naive_effect;
use gseq_core::bench::{render_report, run_benchmark, BenchConfig, EstimatorSpec, ReportFormat};
use gseq_core::dataset::{load_dataset_path, save_dataset_path, Support, TreatmentPath};
use gseq_core::dgp::{simulate, true_effect, DgpConfig};
use gseq_core::diagnostics::{check_positivity, gnull_sweep, ModelSpec};
use gseq_core::gformula::{default_k, estimate_effect, GMethod, McMode};
use gseq_core::{EstimandSpec, Error};

#[derive(Parser)]
#[command(name = "gseq", version, about = "G-formula estimation for two-session sequential experiments")]
struct Cli {
    /// Cap the worker thread count; never affects outputs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a DGP config and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate a treatment-path contrast from a dataset CSV.
    Estimate(EstimateArgs),
    /// Run a replication benchmark across scenarios and estimators.
    Bench(BenchArgs),
    /// Check empirical positivity of the assignment mechanism.
    Diagnose(DiagnoseArgs),
    /// Run the g-null misspecification sweep.
    Sensitivity(SensitivityArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// DGP config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Dataset CSV path.
    #[arg(long)]
    data: PathBuf,
    /// Optional JSON config; flags win over config values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Treatment path under treatment, as "a0,a1".
    #[arg(long)]
    a: Option<TreatmentPath>,
    /// Comparator treatment path, as "a0,a1".
    #[arg(long)]
    a_prime: Option<TreatmentPath>,
    /// gformula-plugin | gformula-mc | baseline-ignore | baseline-condition-l | baseline-final-arm
    #[arg(long)]
    method: Option<String>,
    /// Monte Carlo draws per path.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Declared support of L1: "categorical:<levels>" or "continuous".
    #[arg(long)]
    l_support: Option<Support>,
    /// Declared support of Y.
    #[arg(long)]
    y_support: Option<Support>,
}

/// File-backed defaults for `estimate`; any flag overrides its key.
/// Paths and supports use the same string forms as the flags.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateFileConfig {
    a: Option<String>,
    a_prime: Option<String>,
    method: Option<String>,
    k: Option<usize>,
    seed: Option<u64>,
    l_support: Option<String>,
    y_support: Option<String>,
}

impl EstimateFileConfig {
    fn path(field: &Option<String>) -> Result<Option<TreatmentPath>, Error> {
        field.as_deref().map(str::parse).transpose()
    }

    fn support(field: &Option<String>) -> Result<Option<Support>, Error> {
        field.as_deref().map(str::parse).transpose()
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark config (JSON): scenarios, estimators, replications, master_seed.
    #[arg(long)]
    config: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long)]
    l_support: Option<Support>,
    #[arg(long)]
    y_support: Option<Support>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Args)]
struct SensitivityArgs {
    /// Sweep config (JSON): scenario, n_grid, replications, specs, seed.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SensitivityConfig {
    scenario: DgpConfig,
    n_grid: Vec<usize>,
    replications: usize,
    #[serde(default = "default_specs")]
    specs: Vec<ModelSpec>,
    seed: u64,
}

fn default_specs() -> Vec<ModelSpec> {
    vec![ModelSpec::FlexibleTLearner, ModelSpec::MisspecifiedParsimonious]
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::Json(_) => 2,
        Error::Io(_) | Error::MalformedRow { .. } | Error::EmptyDataset => 3,
        Error::Positivity { .. } => 4,
    }
}

fn read_config(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(Error::Io)
}

// stdout may be a pipe that closes early (e.g. `gseq ... | head`)
fn print_stdout(content: &str) -> Result<(), Error> {
    use std::io::Write;
    match std::io::stdout().write_all(content.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(Error::Io),
    }
}

fn write_out(out: Option<&Path>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(Error::Io),
        None => print_stdout(content),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().is_err() {
            eprintln!("error: could not configure thread pool");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Sensitivity(args) => cmd_sensitivity(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut cfg = DgpConfig::from_json(&read_config(&args.config)?)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let data = simulate(&cfg)?;
    save_dataset_path(&data, &args.out)?;
    let tau = true_effect(&cfg, &EstimandSpec::full_contrast())?;
    eprintln!("n = {}", data.len());
    eprintln!("true_effect[(1,1) vs (0,0)] = {tau}");
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Error> {
    let file: EstimateFileConfig = match &args.config {
        Some(path) => serde_json::from_str(&read_config(path)?)?,
        None => EstimateFileConfig::default(),
    };
    let full = EstimandSpec::full_contrast();
    let estimand = EstimandSpec::new(
        args.a.or(EstimateFileConfig::path(&file.a)?).unwrap_or(full.path_a),
        args.a_prime
            .or(EstimateFileConfig::path(&file.a_prime)?)
            .unwrap_or(full.path_a_prime),
    );
    let method = args
        .method
        .or(file.method)
        .unwrap_or_else(|| "gformula-mc".into());
    let k = args.k.or(file.k).unwrap_or_else(default_k);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let l_support = args
        .l_support
        .or(EstimateFileConfig::support(&file.l_support)?)
        .unwrap_or(Support::Categorical { levels: 2 });
    let y_support = args
        .y_support
        .or(EstimateFileConfig::support(&file.y_support)?)
        .unwrap_or(Support::Continuous);

    let data = load_dataset_path(&args.data, l_support, y_support)?;
    let estimate = match EstimatorSpec::from_method_str(&method, k)? {
        EstimatorSpec::GformulaPlugin => {
            estimate_effect(&data, &estimand, GMethod::Plugin, seed)?
        }
        EstimatorSpec::GformulaMc { k } => estimate_effect(
            &data,
            &estimand,
            GMethod::MonteCarlo { k, mode: McMode::Mean },
            seed,
        )?,
        EstimatorSpec::Baseline { baseline } => naive_effect(&data, baseline, &estimand)?,
    };
    print_stdout(&(estimate.to_json()? + "\n"))
}

fn cmd_bench(args: BenchArgs) -> Result<(), Error> {
    let mut cfg = BenchConfig::from_json(&read_config(&args.config)?)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    let report = run_benchmark(&cfg)?;
    write_out(args.out.as_deref(), &render_report(&report, args.format)?)
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<(), Error> {
    let l_support = args.l_support.unwrap_or(Support::Categorical { levels: 2 });
    let y_support = args.y_support.unwrap_or(Support::Continuous);
    let data = load_dataset_path(&args.data, l_support, y_support)?;
    let report = check_positivity(&data, args.epsilon)?;
    let rendered = match args.format {
        ReportFormat::Json => report.to_json()? + "\n",
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Table => {
            return Err(Error::InvalidConfig(
                "diagnose supports formats json and csv".into(),
            ))
        }
    };
    write_out(args.out.as_deref(), &rendered)
}

fn cmd_sensitivity(args: SensitivityArgs) -> Result<(), Error> {
    let cfg: SensitivityConfig = serde_json::from_str(&read_config(&args.config)?)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let report = gnull_sweep(&cfg.scenario, &cfg.n_grid, cfg.replications, &cfg.specs, seed)?;
    let rendered = match args.format {
        ReportFormat::Json => report.to_json()? + "\n",
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Table => {
            return Err(Error::InvalidConfig(
                "sensitivity supports formats json and csv".into(),
            ))
        }
    };
    write_out(args.out.as_deref(), &rendered)
}
