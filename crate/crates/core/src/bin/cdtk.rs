use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cdtk::cli::{self, RunConfig, SpaceSpec, CHECKS};
use cdtk::{Error, Result};

/// Numerical checks of curvature-dimension conditions.
#[derive(Parser)]
#[command(name = "cdtk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one check and print a JSON report.
    Run(Flags),
    /// Bisect K (largest passing) or N (smallest passing) over a range.
    Sweep(Flags),
    /// List every check.
    ListChecks,
    /// Write the resolved space as a JSON description.
    ExportSpace(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// TOML configuration; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    check: Option<String>,
    /// `model:K=2,N=3`, `lebesgue:lo=0,hi=1`, `twopoint:q=1`, `file:PATH`.
    #[arg(long)]
    space: Option<String>,
    /// `cos:K=1,N=1`, `log:N=2`, `sinh:K=-1,N=1`, `cosh:K=-1,N=1`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "K", allow_negative_numbers = true)]
    k: Option<f64>,
    #[arg(long = "N")]
    n_dim: Option<f64>,
    /// Grid intervals.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "K-range", allow_hyphen_values = true)]
    k_range: Option<String>,
    #[arg(long = "N-range")]
    n_range: Option<String>,
    #[arg(long = "K-prime", allow_negative_numbers = true)]
    k_prime: Option<f64>,
    #[arg(long = "N-prime")]
    n_prime: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    y0: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Comma-separated times.
    #[arg(long)]
    t: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    hi: Option<f64>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// CSV of densities, header row = grid nodes.
    #[arg(long)]
    densities: Option<PathBuf>,
    /// JSON output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-case CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn merge(flags: Flags) -> Result<RunConfig> {
    let mut c = match &flags.config {
        Some(p) => RunConfig::from_toml(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    macro_rules! over {
        ($($f:ident => $g:ident),*) => { $(if flags.$f.is_some() { c.$g = flags.$f; })* };
    }
    over!(check => check, model => model, k => k, n_dim => n_dim, n => n, k_prime => k_prime,
          n_prime => n_prime, x0 => x0, y0 => y0, dt => dt, t_end => t_end, lo => lo, hi => hi,
          pairs => pairs, samples => samples, seed => seed, tol => tol, densities => densities,
          out => output, csv => csv);
    if let Some(s) = flags.space {
        c.space = Some(SpaceSpec::Short(s));
    }
    if let Some(r) = flags.k_range {
        c.k_range = Some(cli::parse_range(&r)?);
    }
    if let Some(r) = flags.n_range {
        c.n_range = Some(cli::parse_range(&r)?);
    }
    if let Some(t) = flags.t {
        c.t = Some(cli::parse_list(&t)?);
    }
    Ok(c)
}

fn emit(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => writeln!(io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::ListChecks => {
            let mut out = io::stdout().lock();
            for (name, about) in CHECKS {
                writeln!(out, "{name:<22}{about}")?;
            }
            Ok(true)
        }
        Command::Run(flags) => {
            let cfg = merge(flags)?;
            let report = cli::run(&cfg)?;
            if let Some(p) = &cfg.csv {
                report.write_csv(&mut io::BufWriter::new(fs::File::create(p)?))?;
            }
            emit(&report, cfg.output.as_deref())?;
            Ok(report.passed)
        }
        Command::Sweep(flags) => {
            let cfg = merge(flags)?;
            let report = cli::sweep(&cfg)?;
            emit(&report, cfg.output.as_deref())?;
            Ok(report.found())
        }
        Command::ExportSpace(flags) => {
            let cfg = merge(flags)?;
            emit(&cli::export_space(&cfg)?, cfg.output.as_deref())?;
            Ok(true)
        }
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("CDTK_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Invalid(format!("CDTK_THREADS must be a count, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Invalid(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| execute(cli.command)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("cdtk: {e}");
            ExitCode::from(2)
        }
    }
}
