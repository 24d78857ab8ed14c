use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ocd_cli::{run_file, Command, Format, RunOptions};

#[derive(Parser)]
#[command(
    name = "ocd",
    version,
    about = "Object-centric token merging and sampling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write latent dumps and frame images here.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Merge-and-restore error on synthetic scenes.
    MergeBench(Common),
    /// Standard versus object-centric sampling with an exact denoiser.
    SampleDemo(Common),
    /// Attention-map storage and sampling cost.
    CostReport(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::MergeBench(a) => (Command::MergeBench, a),
        Sub::SampleDemo(a) => (Command::SampleDemo, a),
        Sub::CostReport(a) => (Command::CostReport, a),
    };
    let opts = RunOptions {
        seed: args.seed,
        dump_dir: args.dump_dir,
        ..RunOptions::default()
    };
    let outcome = match run_file(command, &args.config, args.format, opts) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let written = match &args.out {
        Some(path) => std::fs::write(path, &outcome.text).map_err(|e| format!("writing {}: {e}", path.display())),
        None => std::io::stdout()
            .write_all(outcome.text.as_bytes())
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        for f in &outcome.failures {
            eprintln!("check failed: {f}");
        }
        ExitCode::from(1)
    }
}
