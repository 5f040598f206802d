use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rrp_core::cli::{self, config::RunMode, parse_config, RunConfig};
use rrp_core::Error;

#[derive(Parser)]
#[command(name = "rrp", version, about = "Bubbly lubricant film simulator and stability analyzer")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (flat TOML). Reference values when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent sweep points; overrides `workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Time integration from R = R0.
    Transient,
    /// Newton solve of the stationary problem.
    Stationary,
    /// Spectra of the linearizations and the Routh-Hurwitz report.
    Stability,
    /// Transient or stationary solves over a list of ecc or omega values.
    Sweep,
}

fn load(args: &Args) -> Result<RunConfig, Error> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    cfg.mode = match args.command {
        Command::Transient => RunMode::Transient,
        Command::Stationary => RunMode::Stationary,
        Command::Stability => RunMode::Stability,
        Command::Sweep => RunMode::Sweep,
    };
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let outcome = load(&args).and_then(|cfg| cli::run(&cfg));
    match outcome {
        Ok(o) => {
            println!("{}", o.message);
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
