//! Command-line front end: `run`, `list-problems`, `compare`.
//!
//! Exit codes: 0 when every run finished (converged, stagnated or hit the
//! iteration cap), 2 when a run broke down, 3 on config errors, 1 on i/o
//! errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use krylov_gap::{
    compare_runs, list_problems_text, parse_config_text, resolve_batch, run_experiments,
    HarnessError, RawConfig, SolveStatus,
};

#[derive(Parser)]
#[command(name = "krylov-gap", version, about = "Krylov residual-gap experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, or a batch when the config file holds an array.
    Run(RunArgs),
    /// Print the registry of built-in test problems.
    ListProblems,
    /// Summarize finished runs on the same problem side by side.
    Compare {
        /// Run directories containing history.csv and config.json.
        dirs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem id, TP1..TP5.
    #[arg(long)]
    problem: Option<String>,
    /// cg | pcg | bicgstab | pbicgstab (default pbicgstab).
    #[arg(long)]
    solver: Option<String>,
    /// none | icc0 (default per problem).
    #[arg(long)]
    precond: Option<String>,
    /// Replacement policy: none | auto | auto:<tau> | periodic:<P>.
    #[arg(long)]
    rr: Option<String>,
    /// Relative residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Grid override, x direction.
    #[arg(long)]
    nx: Option<usize>,
    /// Grid override, y direction.
    #[arg(long)]
    ny: Option<usize>,
    /// Grid override, z direction (3D problems only).
    #[arg(long)]
    nz: Option<usize>,
    /// Stencil perturbation override.
    #[arg(long)]
    eps: Option<f64>,
    /// Output directory (default runs/<label>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit the three SVG panels next to history.csv.
    #[arg(long)]
    plots: bool,
    /// Name used in summaries and the default output path.
    #[arg(long)]
    label: Option<String>,
}

impl RunArgs {
    fn overlay(&self) -> RawConfig {
        RawConfig {
            problem: self.problem.clone(),
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            eps: self.eps,
            solver: self.solver.clone(),
            precond: self.precond.clone(),
            rr: self.rr.clone(),
            tol: self.tol,
            max_iters: self.max_iters,
            breakdown_eps: None,
            out: self.out.clone(),
            plots: self.plots.then_some(true),
            label: self.label.clone(),
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Config(_) => 3,
        HarnessError::Io(_) => 1,
    }
}

fn dispatch(cli: Cli) -> krylov_gap::Result<ExitCode> {
    match cli.command {
        Command::ListProblems => {
            print!("{}", list_problems_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { dirs } => {
            print!("{}", compare_runs(&dirs)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => run_command(args),
    }
}

fn run_command(args: RunArgs) -> krylov_gap::Result<ExitCode> {
    let overlay = args.overlay();
    let raws: Vec<RawConfig> = match &args.config {
        Some(path) => parse_config_text(&fs::read_to_string(path)?)?
            .into_iter()
            .map(|entry| overlay.clone().over(entry))
            .collect(),
        None => vec![overlay],
    };
    let cfgs = resolve_batch(&raws)?;
    let outcomes = run_experiments(&cfgs);

    let mut saw_breakdown = false;
    let mut worst_error: Option<u8> = None;
    for (cfg, outcome) in cfgs.iter().zip(&outcomes) {
        match outcome {
            Ok(run) => {
                println!(
                    "{}: {} after {} iterations, {} replacements -> {}",
                    run.label,
                    run.status(),
                    run.iterations(),
                    run.replacements(),
                    run.out_dir.display()
                );
                if run.status() == SolveStatus::Breakdown {
                    saw_breakdown = true;
                }
            }
            Err(e) => {
                eprintln!("error ({}): {e}", cfg.label);
                let code = exit_code_for(e);
                worst_error = Some(worst_error.map_or(code, |w| w.max(code)));
            }
        }
    }
    Ok(match (worst_error, saw_breakdown) {
        (Some(code), _) => ExitCode::from(code),
        (None, true) => ExitCode::from(2),
        (None, false) => ExitCode::SUCCESS,
    })
}
