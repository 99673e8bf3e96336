use cavmhd::harness::config::{CaseConfig, ConfigError};
use cavmhd::harness::{
    run_case, run_grid_study, run_mms, run_sweep, run_validation, write_grid_study_csv,
    write_mms_csv, write_sweep_csv, HarnessError, SweepSpec,
};
use cavmhd::solver::SolverError;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Steady finite-element solver for MHD double-diffusive mixed convection in
/// a lid-driven cavity with a trapezoidal obstacle and two semicircular wall
/// heaters.
#[derive(Parser)]
#[command(name = "cavmhd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory (overrides the case file's [output] dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress progress output
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single case from a config file
    Solve {
        case_file: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a parameter sweep over Ri / Ha / Br lists
    Sweep {
        case_file: PathBuf,
        /// Comma-separated Richardson numbers (defaults to the case value)
        #[arg(long, value_delimiter = ',')]
        ri: Vec<f64>,
        /// Comma-separated Hartmann numbers
        #[arg(long, value_delimiter = ',')]
        ha: Vec<f64>,
        /// Comma-separated buoyancy ratios
        #[arg(long, value_delimiter = ',')]
        br: Vec<f64>,
        /// Concurrent series workers
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Grid-independence study on a graded mesh sequence
    Gridstudy {
        case_file: PathBuf,
        #[arg(long, default_value_t = 6)]
        levels: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Validation suite: triangular-cavity comparison, lid-driven benchmark,
    /// manufactured-solution order check
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Manufactured-solution convergence study
    Mms {
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                HarnessError::Config(_) | HarnessError::Invalid(_) | HarnessError::Geometry(_) => {
                    ExitCode::from(2)
                }
                HarnessError::Solver(SolverError::NotConverged { .. }) => ExitCode::from(1),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_case(path: &PathBuf, common: &CommonArgs) -> Result<CaseConfig, ConfigError> {
    let mut cfg = CaseConfig::from_file(path)?;
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Solve { case_file, common } => {
            let cfg = load_case(&case_file, &common)?;
            let result = run_case(&cfg, common.quiet)?;
            if !common.quiet {
                println!("artifacts written to {}", cfg.output.dir.display());
            }
            Ok(if result.solution.converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Sweep {
            case_file,
            ri,
            ha,
            br,
            workers,
            common,
        } => {
            let cfg = load_case(&case_file, &common)?;
            let spec = SweepSpec {
                ri: if ri.is_empty() { vec![cfg.physics.ri] } else { ri },
                ha: if ha.is_empty() { vec![cfg.physics.ha] } else { ha },
                br: if br.is_empty() { vec![cfg.physics.br] } else { br },
            };
            let rows = run_sweep(&cfg, &spec, workers, common.quiet)?;
            let path = cfg.output.dir.join("sweep.csv");
            write_sweep_csv(&path, &rows)?;
            let failures = rows.iter().filter(|r| !r.converged).count();
            if !common.quiet {
                println!(
                    "{} rows ({} not converged) written to {}",
                    rows.len(),
                    failures,
                    path.display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gridstudy {
            case_file,
            levels,
            common,
        } => {
            let cfg = load_case(&case_file, &common)?;
            let result = run_grid_study(&cfg, levels, common.quiet)?;
            let path = cfg.output.dir.join("grid_study.csv");
            write_grid_study_csv(&path, &result)?;
            if !common.quiet {
                println!(
                    "relative change between the two finest levels: left {:.3}%, right {:.3}%",
                    100.0 * result.rel_change_left,
                    100.0 * result.rel_change_right
                );
                println!("written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { common } => {
            let report = run_validation(common.quiet)?;
            report.print();
            if report.all_pass() {
                println!("all validation checks passed");
            } else {
                let failed = report.entries.iter().filter(|e| !e.pass).count();
                println!("{failed} validation check(s) outside tolerance");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Mms { levels, common } => {
            let report = run_mms(levels, common.quiet)?;
            if let Some(out) = &common.out {
                let path = out.join("mms.csv");
                write_mms_csv(&path, &report)?;
                if !common.quiet {
                    println!("written to {}", path.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
