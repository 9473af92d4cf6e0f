use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fovea_cli::{cmd_gen, cmd_render, cmd_run, parse_resolution, CliError, RenderArgs};
use fovea_core::Resolution;

/// Event-driven visual attention for DVS event streams.
#[derive(Parser)]
#[command(name = "fovea", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the attention pipeline described by a config file.
    Run { config: PathBuf },
    /// Generate a synthetic stimulus stream.
    Gen {
        spec: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Render a time-surface image, optionally with a trajectory overlay.
    Render {
        events: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Reference time in microseconds; defaults to the last event.
        #[arg(long)]
        t_ref: Option<u64>,
        #[arg(long, default_value_t = 50_000)]
        tau_vis: u64,
        #[arg(long)]
        invert: bool,
        #[arg(long, default_value = "240x180", value_parser = parse_resolution)]
        resolution: Resolution,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Run { config } => cmd_run(&config).map(|out| {
            eprintln!(
                "{} events in, {} out, {} switches",
                out.stats.events_in, out.stats.events_out, out.stats.winner_switches
            );
        }),
        Command::Gen { spec, out } => cmd_gen(&spec, out.as_deref()).map(|_| ()),
        Command::Render { events, out, trajectory, t_ref, tau_vis, invert, resolution } => {
            cmd_render(&RenderArgs { events, trajectory, out, t_ref, tau_vis, invert, resolution })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fovea: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
