mod cache;
mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};
use commands::Run;
use config::RunConfig;
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "gluing", version, about = "Delaunay towers, reduced systems and residual decay for the fractional Yamabe problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides [output] dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Kernel cache directory; overrides [output] cache.
    #[arg(long, global = true, value_name = "DIR")]
    cache: Option<PathBuf>,

    /// Worker threads for the numerical stages.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Seed for randomized sample grids.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Normalization and interaction constants with oracle deltas.
    Constants,
    /// Build or load the cylindrical kernel table.
    Kernel,
    /// Solve the periodic profiles over the L sweep.
    Delaunay,
    /// Interaction constants and the tabulated F, F'.
    Interactions,
    /// Solve the balancing conditions for the configured points.
    Balance,
    /// Solve the reduced ladder system at the configured L.
    Reduce,
    /// Residual scan and decay fit of the assembled field.
    Assemble,
    /// Run the acceptance criteria.
    Accept,
    /// Every stage in order.
    Pipeline,
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let cfg = RunConfig::load(path)?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let run = Run {
        out: commands::resolve_dir(cli.out.as_deref(), &cfg.output.dir),
        cache: commands::resolve_dir(cli.cache.as_deref(), &cfg.output.cache),
        seed: cli.seed,
        cfg,
    };
    match cli.command {
        Command::Constants => commands::constants(&run).map(|_| ()),
        Command::Kernel => commands::kernel(&run).map(|_| ()),
        Command::Delaunay => {
            let table = commands::kernel(&run)?;
            commands::delaunay(&run, &table).map(|_| ())
        }
        Command::Interactions => commands::interactions(&run).map(|_| ()),
        Command::Balance => {
            let c = commands::constants(&run)?;
            commands::balance(&run, &c).map(|_| ())
        }
        Command::Reduce => {
            let c = commands::constants(&run)?;
            commands::reduce(&run, &c)
        }
        Command::Assemble => {
            let table = commands::kernel(&run)?;
            let c = commands::constants(&run)?;
            commands::assemble(&run, &table, &c)
        }
        Command::Accept => commands::accept(&run),
        Command::Pipeline => commands::pipeline(&run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
