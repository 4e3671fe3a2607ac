use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lagflow_cli::{commands, parse_config, parse_rational, CliError};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "lagflow", version, about = "Lagrangian particle flows with congestion or diffusion")]
struct Cli {
    /// Worker threads for cell construction (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a flow from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the grid spacing, e.g. `1/20`.
        #[arg(long, value_parser = parse_rational)]
        h: Option<f64>,
        /// Store cell geometry in every snapshot.
        #[arg(long)]
        export_cells: bool,
    },
    /// Solve the transport problem once at the initial positions.
    Project {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_parser = parse_rational)]
        h: Option<f64>,
    },
    /// Error table of the radial crowd benchmark against the exact solution.
    ValidateRadial {
        /// Grid spacings, e.g. `--h 1/20 --h 1/30`.
        #[arg(long = "h", value_parser = parse_rational, required = true)]
        h: Vec<f64>,
        #[arg(long = "T", default_value_t = 1.0)]
        t_final: f64,
        #[arg(long, default_value = "out/radial")]
        output: PathBuf,
    },
    /// Check the one-dimensional pressure bounds on random configurations.
    #[command(name = "bounds-1d")]
    Bounds1d {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Variance growth of a diffusing lattice disk.
    Heat {
        #[arg(long, value_parser = parse_rational, default_value = "1/30")]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Half side of the square box.
        #[arg(long, default_value_t = 4.0)]
        half_width: f64,
        #[arg(long = "T", default_value_t = 0.2)]
        t_final: f64,
        #[arg(long, default_value = "out/heat")]
        output: PathBuf,
    },
}

fn print<T: Serialize>(value: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load(config: &std::path::Path, h: Option<f64>, export_cells: bool) -> Result<lagflow_cli::RunConfig, CliError> {
    let mut cfg = parse_config(config)?;
    if let Some(h) = h {
        if !(h > 0.0) {
            return Err(CliError::Config(format!("grid spacing must be positive, got {h}")));
        }
        cfg.h = Some(lagflow_cli::config::Spacing(h));
    }
    cfg.export_cells |= export_cells;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate { config, output, h, export_cells } => {
            let cfg = load(&config, h, export_cells)?;
            print(&commands::simulate(&cfg, output.as_deref())?)?;
        }
        Command::Project { config, output, h } => {
            let cfg = load(&config, h, true)?;
            print(&commands::project(&cfg, output.as_deref())?)?;
        }
        Command::ValidateRadial { h, t_final, output } => {
            print(&commands::validate_radial(&h, t_final, &output)?)?;
        }
        Command::Bounds1d { seed } => {
            let rep = commands::bounds_1d(seed)?;
            print(&rep)?;
            return Ok(rep.pass());
        }
        Command::Heat { h, radius, half_width, t_final, output } => {
            print(&commands::heat(h, radius, half_width, t_final, &output)?)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        // a bound that does not hold is a numerical failure
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
