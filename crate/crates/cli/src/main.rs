mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Device-free tracking from multi-channel RSS traces.
#[derive(Debug, Parser)]
#[command(name = "dfl", version)]
struct Cli {
    /// Master seed; defaults to the seed stored in the config or manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "dfl-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize an RSS trace and its ground truth.
    Simulate {
        /// Config or manifest JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the tracker over a recorded trace.
    Track {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the spectral rate-of-change measurement.
        #[arg(long, value_enum)]
        use_freq: Option<Switch>,
        /// Write the particle set every this many tracking steps; 0 disables.
        #[arg(long, default_value_t = 0)]
        particle_stride: usize,
    },
    /// Monte Carlo sweep over a grid of scenario and tracker settings.
    Sweep {
        /// Sweep spec JSON (base config plus grid).
        #[arg(long)]
        grid: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Score estimates (and optionally particle snapshots) against truth.
    Eval {
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        particles: Option<PathBuf>,
        /// Config supplying the person ellipse.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config } => commands::simulate(config.as_deref(), &cli.out, cli.seed),
        Command::Track {
            trace,
            config,
            use_freq,
            particle_stride,
        } => commands::track(
            &trace,
            config.as_deref(),
            use_freq.map(|s| s == Switch::On),
            particle_stride,
            &cli.out,
            cli.seed,
        ),
        Command::Sweep { grid, jobs } => commands::sweep(&grid, jobs, &cli.out, cli.seed),
        Command::Eval {
            estimates,
            truth,
            particles,
            config,
        } => commands::eval(&estimates, &truth, particles.as_deref(), config.as_deref(), &cli.out, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
