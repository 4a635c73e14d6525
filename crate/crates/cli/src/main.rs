mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "archflow", version, about = "Turn a requirements specification into architecture artifacts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the four-agent pipeline on an SRS and write a run bundle.
    Run {
        srs: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Disable retrieval even if the config enables it.
        #[arg(long)]
        no_knowledge: bool,
        /// Output directory; defaults to `<output_dir>/run-<timestamp>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chunk, tag and embed text files into a knowledge store.
    Ingest {
        #[arg(required = false)]
        sources: Vec<PathBuf>,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 1200)]
        chunk: usize,
        #[arg(long, default_value_t = 200)]
        overlap: usize,
        /// JSON list of `{"pattern", "tag"}` theme rules.
        #[arg(long)]
        themes: Option<PathBuf>,
        /// Run config whose `embedder` section selects the embedder.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check PlantUML files (or directories of `.puml` files).
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Diagram kind; inferred from each file name when omitted.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Recompute a run's mismatch rate and cross-check the stored metrics.
    Metrics { run_dir: PathBuf },
    /// Summarize structural differences between two runs.
    Compare { run_a: PathBuf, run_b: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { srs, config, no_knowledge, out } => commands::run(&srs, &config, no_knowledge, out.as_deref()),
        Command::Ingest { sources, store, chunk, overlap, themes, config } => {
            commands::ingest(&sources, &store, chunk, overlap, themes.as_deref(), config.as_deref())
        }
        Command::Validate { paths, kind } => commands::validate(&paths, kind.as_deref()),
        Command::Metrics { run_dir } => commands::metrics(&run_dir),
        Command::Compare { run_a, run_b } => commands::compare(&run_a, &run_b),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
