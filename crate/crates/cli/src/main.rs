use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use superburst::{Error, RunConfig};

mod commands;

/// Superradiant-burst simulator for waveguide-coupled atomic ensembles.
#[derive(Debug, Parser)]
#[command(name = "superburst", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed of the disorder realizations; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SUPERBURST_THREADS")]
    threads: Option<usize>,
    /// Reuse a non-empty output directory.
    #[arg(long, global = true)]
    overwrite: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One disorder-averaged run at the configured parameters.
    Simulate,
    /// Scan the atom number.
    ScanN {
        /// Atom numbers, comma separated; overrides `scan.n_list`.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
    },
    /// Scan the pulse area.
    ScanArea {
        /// Areas in units of π, comma separated; overrides `scan.areas_pi`.
        #[arg(long, value_delimiter = ',')]
        areas: Option<Vec<f64>>,
    },
    /// Fit the coupling distribution to the target traces in `[fit]`.
    FitDisorder,
    /// Compare the cascade with the exact master equation (N <= 8).
    OracleCompare,
    /// Heterodyne correlation surfaces and, optionally, simulated clicks.
    Heterodyne,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } => 4,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn load_config(common: &Common) -> superburst::Result<(RunConfig, PathBuf)> {
    let (mut cfg, base) = match &common.config {
        Some(path) => {
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            (RunConfig::load(path)?, base)
        }
        None => (RunConfig::default(), PathBuf::new()),
    };
    if let Some(seed) = common.seed {
        cfg.disorder.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.output.overwrite |= common.overwrite;
    cfg.validate()?;
    Ok((cfg, base))
}

fn run(cli: Cli) -> superburst::Result<()> {
    let (cfg, base) = load_config(&cli.common)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    log::info!("using {} worker threads", pool.current_num_threads());
    pool.install(|| match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::ScanN { n } => commands::scan_n(&cfg, n),
        Command::ScanArea { areas } => commands::scan_area(&cfg, areas),
        Command::FitDisorder => commands::fit_disorder(&cfg, &base),
        Command::OracleCompare => commands::oracle_compare(&cfg),
        Command::Heterodyne => commands::heterodyne(&cfg),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
