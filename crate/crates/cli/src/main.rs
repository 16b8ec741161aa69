use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sparsecombine::combine::{Method, DEFAULT_NODE_BUDGET};
use sparsecombine::verify::DEFAULT_SEED;
use sparsecombine_cli::{
    cmd_plan, cmd_solve, cmd_study, cmd_verify, exit, parse_budget, parse_exact, EvalPoint, Format,
    Parallelism, PlanKind, StudyConfig, VerifyConfig,
};

/// Sparse-grid combination technique studies for the d-dimensional Poisson
/// problem with right-hand side d*pi^2*prod sin(pi x_i).
///
/// Exit codes: 0 ok, 1 verification failure, 2 node budget exceeded,
/// 3 bad configuration.
#[derive(Parser)]
#[command(name = "sparsecombine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study: value at the evaluation point and surplus per level.
    Study {
        /// FG, HOFG, SG, HOSG or SPLIT2D.
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        n_min: u32,
        #[arg(long)]
        n_max: u32,
        /// Comma-separated coordinates, or `auto` for (0.25, 0.5, 0.25, ...).
        #[arg(long, default_value = "auto")]
        point: EvalPoint,
        /// Offset added to every Smolyak level of SG and HOSG (0 or 1).
        #[arg(long, default_value_t = 1)]
        level_shift: u32,
        /// Cap on the unique nodes of any level's plan.
        #[arg(long, env = "SPARSECOMBINE_BUDGET", value_parser = parse_budget, default_value_t = DEFAULT_NODE_BUDGET)]
        budget: u128,
        /// Worker threads, or `auto`; 1 runs the sequential path.
        #[arg(long, default_value = "auto")]
        parallel: Parallelism,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output file; standard output if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Take the surplus as a max over this many extra random points.
        #[arg(long, default_value_t = 0)]
        surplus_points: usize,
    },
    /// Exact checks of the extrapolation weight identities for d = 1..=D_MAX.
    Verify {
        #[arg(default_value_t = 10)]
        d_max: usize,
        /// Random coefficient tables per dimension.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, hide = true, value_parser = parse_exact)]
        perturb_alpha1: Option<sparsecombine::rational::Rational>,
    },
    /// Print a combination plan as JSON with exact coefficients.
    Plan {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        n: u32,
        #[arg(long, value_enum, default_value_t = PlanKind::Standard)]
        kind: PlanKind,
        #[arg(long, default_value_t = 0)]
        level_shift: u32,
    },
    /// Solve on a single grid and report the value at a point.
    Solve {
        /// Comma-separated levels, e.g. 3,5.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<u32>,
        #[arg(long, default_value = "auto")]
        point: EvalPoint,
        #[arg(long, env = "SPARSECOMBINE_BUDGET", value_parser = parse_budget, default_value_t = DEFAULT_NODE_BUDGET)]
        budget: u128,
        /// Write the grid in the binary cache format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: sparsecombine::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::BAD_CONFIG as u8 } else { 0 });
        }
    };
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let code = match cli.command {
        Command::Study {
            method,
            dim,
            n_min,
            n_max,
            point,
            level_shift,
            budget,
            parallel,
            format,
            out: path,
            seed,
            surplus_points,
        } => {
            let cfg = StudyConfig {
                method,
                dim,
                n_min,
                n_max,
                eval_point: point,
                level_shift,
                node_budget: budget,
                parallelism: parallel,
                format,
                out: path,
                seed,
                surplus_points,
            };
            cmd_study(&cfg, &mut out, &mut err)
        }
        Command::Verify {
            d_max,
            trials,
            seed,
            perturb_alpha1,
        } => {
            let cfg = VerifyConfig {
                d_max,
                trials,
                seed,
                perturb_alpha1,
            };
            cmd_verify(&cfg, &mut out, &mut err)
        }
        Command::Plan {
            dim,
            n,
            kind,
            level_shift,
        } => cmd_plan(dim, n, kind, level_shift, &mut out, &mut err),
        Command::Solve {
            levels,
            point,
            budget,
            out: path,
        } => cmd_solve(&levels, &point, budget, path.as_ref(), &mut out, &mut err),
    };
    let _ = out.flush();
    ExitCode::from(code as u8)
}
