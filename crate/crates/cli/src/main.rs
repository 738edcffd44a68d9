use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dressed_cli::{list_presets, power_command, run, CliError, RunOptions};

#[derive(Parser)]
#[command(
    name = "simulate",
    version,
    about = "Driven electron-nuclear spin simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a preset and write its CSV files.
    Run {
        /// Path to a TOML config, or a preset name.
        config: String,
        /// Output directory; overrides the config's `out_dir`.
        #[arg(long, env = "SIMULATE_OUT_DIR")]
        out: Option<PathBuf>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        /// Master seed; overrides the config's `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Apply the config's `[smoke]` overrides.
        #[arg(long)]
        smoke: bool,
    },
    /// List the shipped presets.
    Presets,
    /// Power ratios of one protocol, e.g. `simulate power PM omega1=1 omega2=1`.
    Power {
        protocol: String,
        /// Parameters in MHz as key=value.
        params: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
            smoke,
        } => run(
            &config,
            &RunOptions {
                out_dir: out,
                threads,
                seed,
                smoke,
            },
        )
        .map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
        }),
        Command::Presets => {
            for line in list_presets() {
                println!("{line}");
            }
            Ok(())
        }
        Command::Power { protocol, params } => {
            power_command(&protocol, &params).map(|s| print!("{s}"))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
