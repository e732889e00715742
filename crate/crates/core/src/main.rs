use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use amfem::assembly::{Spaces, ThetaMode};
use amfem::driver::{self, RunConfig, REFERENCE_TABLES};
use amfem::estimator::to_csv;
use amfem::kellogg::{max_abs, kellogg_residual, solve_kellogg_with, SolveOptions, TABLES};

#[derive(Parser)]
#[command(name = "amfem", version, about = "Augmented mixed FEM for Stokes interface problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Kellogg interface system for one exponent.
    KelloggSolve {
        #[arg(long)]
        alpha: f64,
        /// Ignore tabulated seeds and use random starts only.
        #[arg(long)]
        no_seed: bool,
        #[arg(long, default_value_t = 20240607)]
        seed: u64,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Adaptive SOLVE, ESTIMATE, MARK, REFINE loop.
    RunAdaptive {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Convergence study on uniform meshes.
    RunUniform {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Reproduce the coefficient and adaptive tables and diff against references.
    RegressTables {
        /// Only the tables with these numbers (1 to 9).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    data: Option<usize>,
    #[arg(long, value_parser = parse_spaces)]
    spaces: Option<Spaces>,
    #[arg(long, value_parser = parse_theta)]
    theta: Option<ThetaMode>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    rel_err: Option<f64>,
    #[arg(long)]
    max_loops: Option<usize>,
    #[arg(long)]
    initial_n: Option<usize>,
}

fn parse_spaces(s: &str) -> Result<Spaces, String> {
    match s.to_ascii_lowercase().as_str() {
        "rt" | "rt0p1" => Ok(Spaces::Rt0P1),
        "bdm" | "bdm1p2" => Ok(Spaces::Bdm1P2),
        _ => Err(format!("expected rt or bdm, got {s}")),
    }
}

fn parse_theta(s: &str) -> Result<ThetaMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "one" | "constant1" => Ok(ThetaMode::Constant1),
        "h2" | "meshsquared" => Ok(ThetaMode::MeshSquared),
        _ => Err(format!("expected 1 or h2, got {s}")),
    }
}

impl RunArgs {
    fn config(&self) -> amfem::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = self.data {
            cfg.problem = driver::ProblemSource::Kellogg { data: Some(d), alpha: None };
        }
        if let Some(s) = self.spaces {
            cfg.spaces = s;
        }
        if let Some(t) = self.theta {
            cfg.theta = t;
        }
        if let Some(f) = self.fraction {
            cfg.fraction = f;
        }
        if let Some(r) = self.rel_err {
            cfg.stopping.rel_err = Some(r);
        }
        if let Some(m) = self.max_loops {
            cfg.stopping.max_loops = Some(m);
        }
        if let Some(n) = self.initial_n {
            cfg.initial_n = n;
        }
        if self.out.is_some() {
            cfg.output_dir = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> amfem::Result<bool> {
    match cli.command {
        Command::KelloggSolve { alpha, no_seed, seed, json } => {
            let opts = SolveOptions { seed, ..SolveOptions::default() };
            let init = if no_seed { None } else { TABLES.iter().find(|t| (t.alpha - alpha).abs() < 1e-12) };
            let sol = solve_kellogg_with(alpha, init, &opts)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&sol)?);
            } else {
                print!("{}", sol.format_table());
                println!("max residual {:.3e}", max_abs(&kellogg_residual(&sol)));
            }
            Ok(true)
        }
        Command::RunAdaptive { run } => {
            let cfg = run.config()?;
            let result = driver::run_adaptive(&cfg)?;
            print!("{}", to_csv(&result.reports));
            Ok(true)
        }
        Command::RunUniform { run } => {
            let cfg = run.config()?;
            print!("{}", driver::run_uniform(&cfg)?.to_text());
            Ok(true)
        }
        Command::RegressTables { only } => {
            let want = |n: usize| only.is_empty() || only.contains(&n);
            let mut ok = true;
            if (1..=3).any(want) {
                let (text, worst) = driver::regress_kellogg()?;
                print!("{text}");
                let pass = worst <= 5e-4;
                println!("coefficient tables: max deviation {worst:.2e} {}\n", if pass { "PASS" } else { "FAIL" });
                ok &= pass;
            }
            for t in REFERENCE_TABLES.iter().filter(|t| want(t.number)) {
                let rows = driver::regress_table(t)?;
                print!("{}", driver::format_comparison(t, &rows));
                let tol = if t.efficiency { 0.10 } else { 0.05 };
                let pass = rows.iter().all(|r| (r.value(t.efficiency) - r.reference.value).abs() <= tol);
                println!("tolerance {tol}: {}\n", if pass { "PASS" } else { "FAIL" });
                ok &= pass;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
