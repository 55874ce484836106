//! `zcd` — inspect the scale-attention detector from the command line.
//!
//! Every subcommand builds the model from one resolved configuration and is
//! deterministic given that configuration; only `bench` wall-clock times
//! vary between runs. Exit status: 0 on success, 1 when a requested check
//! fails, 2 for configuration or environment errors.

mod bench;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{FileConfig, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "zcd",
    version,
    about = "Parameter, cost, gradient and latency reports for a scale-attention detection network"
)]
struct Cli {
    /// Flat JSON configuration file; flags override its keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Write a machine-readable JSON report to this path.
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count parameters by component (trunk, pyramid, heads).
    Params,
    /// Count multiply-accumulates for one forward pass at the configured
    /// image size.
    Flops,
    /// Compare analytic gradients against finite differences for every
    /// kernel and for composed pyramid and head graphs.
    Gradcheck,
    /// Run the full self-check matrix: counts, cost parity, gradients,
    /// attention properties and structural rules.
    Verify {
        /// Restrict to one family (params, flops, gradcheck, attention,
        /// structure) or to checks whose id starts with the given prefix.
        #[arg(long, value_name = "FILTER")]
        only: Option<String>,
    },
    /// Run one forward pass on a seeded random image and summarise each
    /// pyramid level.
    Forward {
        /// Also print every attention weight as (level branch channel
        /// weight) rows.
        #[arg(long)]
        dump_attention: bool,
    },
    /// Time forward passes of the configured head wiring against a baseline
    /// wiring with identical weights.
    Bench {
        /// Head wiring to compare against.
        #[arg(long, value_name = "NAME", default_value = "parallel")]
        baseline_scheme: String,
    },
}

fn main() -> ExitCode {
    // Restore the default SIGPIPE disposition so `zcd ... | head` ends the
    // process quietly instead of panicking on a closed stdout.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<bool, String> {
    let file = match &cli.config {
        Some(path) => config::load_file(path)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::resolve(&file, &cli.overrides)?;
    let json_path = cli.json.as_deref();

    match &cli.command {
        Command::Params => commands::cmd_params(&cfg, json_path),
        Command::Flops => commands::cmd_flops(&cfg, json_path),
        Command::Gradcheck => commands::cmd_gradcheck(&cfg, json_path),
        Command::Verify { only } => commands::cmd_verify(&cfg, only.as_deref(), json_path),
        Command::Forward { dump_attention } => {
            commands::cmd_forward(&cfg, *dump_attention, json_path)
        }
        Command::Bench { baseline_scheme } => {
            commands::cmd_bench(&cfg, baseline_scheme, json_path)
        }
    }
}
