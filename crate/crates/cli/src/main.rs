// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use energy_cpd::{
    detect_long, load_signal, permutation_test, run_asymptotic, run_grid, write_report, Error,
    ExperimentGrid, KernelConfig, Method, SimConfig, TestReport, DEFAULT_KERNEL_CAP,
};
use energy_cpd::eigen::EigenSolver;

#[derive(Parser)]
#[command(name = "energy-cpd", version, about = "Energy-divergence change-point detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a CSV signal for a single change-point.
    Detect(DetectArgs),
    /// Run a simulation grid and write one CSV row per cell.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Asymptotic,
    Permutation,
    Long,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Asymptotic => Method::Asymptotic,
            MethodArg::Permutation => Method::Permutation,
            MethodArg::Long => Method::Long,
        }
    }
}

#[derive(clap::Args)]
struct DetectArgs {
    /// CSV file, one observation per row.
    #[arg(long)]
    input: PathBuf,
    /// The first row is a header.
    #[arg(long)]
    header: bool,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "asymptotic")]
    method: MethodArg,
    /// Number of eigenvalues kept for the limit process.
    #[arg(long, default_value_t = 50)]
    eigen: usize,
    /// Simulated suprema or permutations.
    #[arg(long, default_value_t = 499)]
    replicates: usize,
    /// Brownian-bridge grid points.
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the estimated eigenvalues as CSV (asymptotic method only).
    #[arg(long)]
    dump_spectrum: Option<PathBuf>,
    /// Write the simulated suprema as CSV (asymptotic method only).
    #[arg(long)]
    dump_sups: Option<PathBuf>,
    /// Largest signal length for which the full kernel matrix is built.
    #[arg(long, default_value_t = DEFAULT_KERNEL_CAP)]
    max_n: usize,
    /// Sub-signal length in long mode.
    #[arg(long, default_value_t = 2000)]
    target_length: usize,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Grid description (JSON).
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Master seed; overrides the grid file's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(args) => detect(args),
        Command::Bench(args) => bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn detect(args: DetectArgs) -> Result<(), Error> {
    let method = Method::from(args.method);
    if method != Method::Asymptotic && (args.dump_spectrum.is_some() || args.dump_sups.is_some()) {
        return Err(Error::InvalidConfig(
            "--dump-spectrum and --dump-sups require --method asymptotic".into(),
        ));
    }
    let signal = load_signal(&args.input, args.header)?;
    let kernel = KernelConfig::new(args.beta)?.with_max_n(args.max_n);

    let report = match method {
        Method::Asymptotic => {
            let sim = SimConfig::new(args.grid, args.replicates, args.seed)?;
            let outcome = run_asymptotic(&signal, &kernel, args.eigen, &sim, args.alpha, &EigenSolver::default())?;
            if let Some(path) = &args.dump_spectrum {
                write_column(path, "eigenvalue", outcome.spectrum.eigenvalues())?;
            }
            if let Some(path) = &args.dump_sups {
                write_column(path, "supremum", outcome.sample.sup_values())?;
            }
            outcome.report
        }
        Method::Permutation => permutation_test(&signal, &kernel, args.replicates, args.alpha, args.seed)?,
        Method::Long => {
            let sim = SimConfig::new(args.grid, args.replicates, args.seed)?;
            detect_long(&signal, &kernel, args.eigen, &sim, args.alpha, args.target_length)?.report
        }
    };

    eprintln!(
        "{}: n = {}, k* = {}, t* = {:.6}, p = {:.4}, {}",
        report.method.as_str(),
        report.n,
        report.k_star,
        report.t_star,
        report.p_value,
        if report.reject { "change-point detected" } else { "no change-point" }
    );
    match &args.output {
        Some(path) => write_report(&report, path),
        None => print_report(&report),
    }
}

fn print_report(report: &TestReport) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(report)?;
    println!("{text}");
    Ok(())
}

fn write_column(path: &Path, name: &str, values: &[f64]) -> Result<(), Error> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "index,{name}").map_err(io)?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{},{v:?}", i + 1).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn bench(args: BenchArgs) -> Result<(), Error> {
    let mut grid = ExperimentGrid::from_json_file(&args.grid)?;
    if let Some(seed) = args.seed {
        grid.seed = seed;
    }
    let rows = run_grid(&grid, &args.output)?;
    eprintln!("wrote {} rows to {}", rows.len(), args.output.display());
    Ok(())
}
