//! `incompat`: build lattices, minimize discrete energies, sweep ε, tabulate
//! QW estimates, run the property suites and sample curvature.
//!
//! Exit codes: 0 success; 1 configuration, input or I/O error; 2 the command
//! ran but flagged its results (solver warnings, validation failures, QW
//! sandwich violations).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Output, ValidateArgs};
use config::{ConfigError, Overrides};

#[derive(Parser, Debug)]
#[command(name = "incompat", version, about = "Discrete incompatible elasticity on hexagonal lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Problem configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Report directory; defaults to `outputs.dir` of the config, then `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Comma-separated ε values, replacing `epsilon`/`eps_list` of the config.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    eps: Option<Vec<f64>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the lattice at one ε and write mesh, measures and a summary.
    Mesh,
    /// Minimize the discrete energy at one ε.
    Minimize,
    /// Minimize over a decreasing list of ε, warm-starting each level.
    Sweep,
    /// Tabulate W, the QW upper estimate and dist² on sampled fibers.
    Qw,
    /// Run the property suites.
    Validate {
        /// `all`, a group, suite names or aliases i-v, comma-separated.
        #[arg(default_value = "all")]
        suite: String,
        /// Random trials per appendix suite.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, hide = true)]
        mutate: Option<String>,
    },
    /// Sample the Gauss curvature of the metric on a grid.
    Curvature,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError::field("--threads", "must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Run(e.to_string()))?;
    }
    let default_out = |dir: Option<PathBuf>| cli.out.clone().or(dir).unwrap_or_else(|| PathBuf::from("out"));

    if let Command::Validate { suite, trials, mutate } = &cli.command {
        let args = ValidateArgs { selector: suite.clone(), trials: *trials, seed: cli.seed, mutate: mutate.clone() };
        return commands::validate(&args, &Output::new(default_out(None)));
    }

    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::field("--config", "this command needs a configuration file"))?;
    let overrides = Overrides { seed: cli.seed, eps: cli.eps.clone() };
    let cfg = config::load(path, &overrides)?;
    let dir = cfg.config.outputs.dir.as_ref().map(|d| cfg.base_dir.join(d));
    let out = Output::new(default_out(dir));
    match cli.command {
        Command::Mesh => commands::mesh(&cfg, &out),
        Command::Minimize => commands::minimize(&cfg, &out),
        Command::Sweep => commands::sweep(&cfg, &out),
        Command::Qw => commands::qw(&cfg, &out),
        Command::Curvature => commands::curvature(&cfg, &out),
        Command::Validate { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
