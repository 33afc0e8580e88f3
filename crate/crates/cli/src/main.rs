use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssio::bench::{emit_report, run_comparison, table1_specs, Format, Method};
use ssio::io::{parse_suite, solve, SolveConfig, SolveMethod};
use ssio::{AnnealSchedule, Criterion, SsioError};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  invalid arguments or configuration
  3  malformed input file (the message names the file and line)
  4  infeasible problem (bad r, unmeetable budget, no full-rank selection)
  5  singular information matrix or numerical failure
  6  I/O failure
  7  instance too large for exhaustive search";

/// Joint experiment selection and missing-data imputation.
#[derive(Parser)]
#[command(name = "ssio", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select rows of a design matrix and impute its missing cells.
    #[command(after_help = EXIT_CODES)]
    Solve(SolveArgs),
    /// Run the method comparison on a benchmark suite.
    #[command(after_help = EXIT_CODES)]
    Bench(BenchArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Design matrix CSV; missing cells are written NA.
    #[arg(long)]
    input: PathBuf,
    /// Sidecar bounds file with rows i,j,lo,hi (0-based indices).
    #[arg(long)]
    bounds: Option<PathBuf>,
    /// Number of rows to select.
    #[arg(long = "select", value_name = "R")]
    r: usize,
    /// Design criterion: a (trace) or d (determinant).
    #[arg(long, default_value = "a")]
    criterion: String,
    /// ssio, fedorov, uniform, direct or brute.
    #[arg(long, default_value = "ssio")]
    method: String,
    #[arg(long)]
    t_init: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    /// Inner-loop convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for the randomized methods.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Budget file: per-row cost CSV with a '#kappa k1 ... kp' directive.
    #[arg(long)]
    budget: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv.
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct BenchArgs {
    /// `table1` or a CSV with header id,n,p,missing_fraction,r,lo,hi.
    #[arg(long, default_value = "table1")]
    suite: String,
    /// Number of seeds per instance (seeds 0..k).
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Output directory for report.csv / report.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Write only this format (both when omitted).
    #[arg(long)]
    format: Option<String>,
    /// Record wall-clock times (makes reports non-reproducible).
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    t_init: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

fn exit_code(e: &SsioError) -> u8 {
    match e {
        SsioError::Input(_) => 2,
        SsioError::Parse { .. } => 3,
        SsioError::Infeasible(_) => 4,
        SsioError::Singular(_) | SsioError::Numerical(_) => 5,
        SsioError::Io { .. } => 6,
        SsioError::TooLarge(_) => 7,
    }
}

fn schedule(
    t_init: Option<f64>,
    alpha: Option<f64>,
    t_min: Option<f64>,
    tol: Option<f64>,
) -> AnnealSchedule {
    let mut s = AnnealSchedule {
        t_init,
        t_min,
        ..AnnealSchedule::default()
    };
    if let Some(a) = alpha {
        s.alpha = a;
    }
    if let Some(t) = tol {
        s.inner_tol = t;
    }
    s
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), SsioError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| SsioError::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_solve(a: SolveArgs) -> Result<(), SsioError> {
    let config = SolveConfig {
        input: a.input,
        bounds: a.bounds,
        r: a.r,
        criterion: a.criterion.parse::<Criterion>()?,
        schedule: schedule(a.t_init, a.alpha, a.t_min, a.tol),
        method: a.method.parse::<SolveMethod>()?,
        budget: a.budget,
        seed: a.seed,
        out: a.out,
        format: a.format.parse::<Format>()?,
    };
    let result = solve(&config)?;
    write_out(config.out.as_deref(), &result.render(config.format))
}

fn run_bench(a: BenchArgs) -> Result<(), SsioError> {
    let specs = if a.suite == "table1" {
        table1_specs()
    } else {
        parse_suite(Path::new(&a.suite))?
    };
    if a.seeds == 0 {
        return Err(SsioError::Input("--seeds must be at least 1".into()));
    }
    let formats = match a.format.as_deref() {
        Some(f) => vec![f.parse::<Format>()?],
        None => vec![Format::Csv, Format::Json],
    };
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let sched = schedule(a.t_init, a.alpha, a.t_min, a.tol);
    let report = run_comparison(&specs, &seeds, &Method::ALL, &sched, a.timings)?;
    fs::create_dir_all(&a.out).map_err(|e| SsioError::Io {
        path: a.out.clone(),
        source: e,
    })?;
    for f in formats {
        let name = match f {
            Format::Csv => "report.csv",
            Format::Json => "report.json",
        };
        emit_report(&report, f, &a.out.join(name))?;
    }
    println!("{}", report.summary_line());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Bench(a) => run_bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
