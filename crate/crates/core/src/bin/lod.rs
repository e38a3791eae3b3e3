use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lod::experiments::{run, ExperimentConfig, Problem};
use lod::lod::RhsMode;
use lod::LodError;

#[derive(Parser)]
#[command(name = "lod", about = "Localized orthogonal decomposition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study for the Poisson problem.
    Poisson(Common),
    /// Boundary value problem with Dirichlet and Neumann data.
    Bvp(Common),
    /// Linear eigenvalue study.
    Evp(Common),
    /// Eigenvalues with a Kronig–Penney type potential.
    Kronig(Common),
    /// Gross–Pitaevskii ground state.
    Gpe(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; its fields override the study defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    rhs: Option<RhsMode>,
    /// Use patches covering the whole domain.
    #[arg(long)]
    full_patches: bool,
}

fn config(problem: Problem, args: &Common) -> Result<ExperimentConfig, LodError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json(problem, &std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::preset(problem),
    };
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if let Some(rhs) = args.rhs {
        cfg.rhs = rhs;
    }
    if args.full_patches {
        cfg.full_patches = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (problem, args) = match &cli.command {
        Command::Poisson(a) => (Problem::Poisson, a),
        Command::Bvp(a) => (Problem::Bvp, a),
        Command::Evp(a) => (Problem::Evp, a),
        Command::Kronig(a) => (Problem::KronigPenney, a),
        Command::Gpe(a) => (Problem::Gpe, a),
    };
    let cfg = match config(problem, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let table = match run(&cfg) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let written = match &cfg.output {
        Some(path) => std::fs::File::create(path)
            .map_err(LodError::from)
            .and_then(|f| table.write_csv(f)),
        None => table.write_csv(std::io::stdout().lock()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
