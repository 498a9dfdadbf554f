//! `swirl`: config-driven runner for the swirl-core experiments.
//!
//! Settings come from an optional TOML file, then `--set section.key=value`
//! overrides, then subcommand flags. Every output file starts with `#` lines
//! holding the resolved configuration.

mod config;
mod error;
mod run;

use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

use config::{ConfigBuilder, RunConfig};
use error::{CliError, EXIT_USAGE};
use run::{CheckKind, NormMode};

const THREADS_ENV: &str = "SWIRL_THREADS";

#[derive(Parser)]
#[command(
    name = "swirl",
    version,
    about = "Swirling stream-tube and De Giorgi truncation experiments"
)]
struct Cli {
    /// TOML config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set profile.alpha=2.4` (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides `output_dir`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for quadrature (overrides SWIRL_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Swirl profile and tube field
    #[command(subcommand)]
    Field(FieldCmd),
    /// Truncation energies and inequality checks
    #[command(subcommand)]
    Degiorgi(DegiorgiCmd),
    /// Recurrence threshold and exponent feasibility
    #[command(subcommand)]
    Analysis(AnalysisCmd),
}

#[derive(Subcommand)]
enum FieldCmd {
    /// Write the profile and its condition report
    Build,
    /// Truncated L^2 norms or annulus partial sums
    Norms {
        #[arg(long, value_enum)]
        mode: NormMode,
    },
    /// Streamline growth of F against an exponential rate cap
    Growth {
        /// Level below which |F| is ignored
        #[arg(long = "L")]
        level: Option<f64>,
        #[arg(long)]
        cap: Option<f64>,
    },
}

#[derive(Subcommand)]
enum DegiorgiCmd {
    /// Energy sequence U_k and the recurrence fit
    Energy,
    /// One of the inequality checks for k up to ledger.k_max
    Check {
        #[arg(long, value_enum)]
        which: CheckKind,
    },
}

#[derive(Subcommand)]
enum AnalysisCmd {
    /// Admissibility and exponent search for one alpha
    Feasibility {
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Closed-form threshold against bisection
    Recurrence {
        #[arg(long = "B")]
        b: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
}

fn flag_overrides(cmd: &Command) -> Vec<(&'static str, f64)> {
    let mut v = Vec::new();
    let mut push = |k: &'static str, x: Option<f64>| {
        if let Some(x) = x {
            v.push((k, x));
        }
    };
    match cmd {
        Command::Field(FieldCmd::Growth { level, cap }) => {
            push("growth.level", *level);
            push("growth.cap", *cap);
        }
        Command::Analysis(AnalysisCmd::Feasibility { alpha }) => push("analysis.alpha", *alpha),
        Command::Analysis(AnalysisCmd::Recurrence { b, beta }) => {
            push("analysis.b", *b);
            push("analysis.beta", *beta);
        }
        _ => {}
    }
    v
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut b = ConfigBuilder::from_file(cli.config.as_deref())?;
    for s in &cli.sets {
        b.set(s)?;
    }
    for (k, x) in flag_overrides(&cli.command) {
        b.set_value(k, toml::Value::Float(x))?;
    }
    if let Some(out) = &cli.out {
        b.set_value("output_dir", toml::Value::String(out.display().to_string()))?;
    }
    b.build()
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} = '{v}' is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<String, CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Field(FieldCmd::Build) => run::field_build(&cfg),
        Command::Field(FieldCmd::Norms { mode }) => run::field_norms(&cfg, mode),
        Command::Field(FieldCmd::Growth { .. }) => run::field_growth(&cfg),
        Command::Degiorgi(DegiorgiCmd::Energy) => run::degiorgi_energy(cfg),
        Command::Degiorgi(DegiorgiCmd::Check { which }) => run::degiorgi_check(cfg, which),
        Command::Analysis(AnalysisCmd::Feasibility { .. }) => run::analysis_feasibility(&cfg),
        Command::Analysis(AnalysisCmd::Recurrence { .. }) => run::analysis_recurrence(&cfg),
    }
}

fn run_cli<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("swirl: {e}");
            e.exit_code()
        }
    }
}

fn main() {
    std::process::exit(run_cli(std::env::args_os()));
}
