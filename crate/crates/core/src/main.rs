use std::path::PathBuf;
use std::process::ExitCode;

use bnvar::app::{self, ProfileOptions, RunConfig};
use clap::{Parser, Subcommand};

/// Nehari-manifold solver for critical-exponent problems with
/// inhomogeneous boundary data.
#[derive(Parser)]
#[command(name = "bnvar", version, after_help = "Set BNVAR_THREADS to size the worker pool.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the parameter sweep described by a config file.
    Run { config: PathBuf },
    /// Summarize a finished run directory and write its CSV tables.
    Report { dir: PathBuf },
    /// Tabulate t, T, T', T'' along the ray through a field dump.
    FiberingProfile {
        config: PathBuf,
        #[arg(long)]
        ray: PathBuf,
        /// Absolute lambda; defaults to the first sweep value.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        t_max: Option<f64>,
        /// Output CSV; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Re-verify a solution record against its field dump.
    Certify { record: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> bnvar::Result<ExitCode> {
    app::init_thread_pool()?;
    match cmd {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let m = app::run(&cfg)?;
            println!("wrote {} cells to {}", m.cells.len(), cfg.output_dir.display());
            print!("{}", app::report(&cfg.output_dir)?);
        }
        Command::Report { dir } => print!("{}", app::report(&dir)?),
        Command::FiberingProfile {
            config,
            ray,
            lambda,
            mu,
            samples,
            t_max,
            output,
        } => {
            let opts = ProfileOptions {
                lambda,
                mu,
                samples,
                t_max,
            };
            let csv = app::fibering_profile(&config, &ray, &opts)?;
            match output {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Certify { record } => {
            let cert = app::certify(&record)?;
            print!("{}", cert.to_table());
            if !cert.overall {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
