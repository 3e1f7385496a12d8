//! `protoforge`: translate protocol descriptions into CPSA definitions,
//! check and format definitions, build fine-tuning corpora and run
//! evaluations.
//!
//! Exit codes: 0 clean, 1 findings under `--strict`, 2 operational failure.

mod commands;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "protoforge", version, about = "Protocol specification to CPSA definition toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML file of settings (`key = value`)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Backend: live, live:<model>, replay:<path> or builtin:<name>
    #[arg(long, global = true, value_name = "ID")]
    pub backend: Option<String>,
    /// Instruction template id
    #[arg(long, global = true, value_name = "ID")]
    pub template: Option<String>,
    /// Exit with status 1 when findings are reported
    #[arg(long, global = true)]
    pub strict: bool,
    /// Generation attempts per translation (1 disables the repair loop)
    #[arg(long, global = true, value_name = "N")]
    pub attempts: Option<u32>,
    /// Log progress to stderr
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a natural-language description into a CPSA definition
    Translate {
        /// Query file; reads stdin when absent or `-`
        query: Option<PathBuf>,
        /// Write the definition here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Parse, lower, validate and lint a definition file
    Validate {
        /// Definition file, or `-` for stdin
        file: PathBuf,
    },
    /// Print a definition in canonical layout
    Fmt {
        file: PathBuf,
        /// Only report whether the file is already canonical
        #[arg(long, conflicts_with = "write")]
        check: bool,
        /// Rewrite the file in place
        #[arg(long)]
        write: bool,
    },
    /// Build and export fine-tuning corpora
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Score backends against an evaluation suite
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Show available backends
    #[command(subcommand)]
    Backends(BackendsCommand),
    /// Print the diagnostic code registry as markdown
    Diagnostics,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Ask the backend to describe each seed definition
    Synth {
        /// Corpus directory to write
        #[arg(long)]
        out: PathBuf,
        /// Directory of seed `.scm` files; the shipped seeds when absent
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long, default_value_t = protoforge_core::dataset::DEFAULT_PER_SEED)]
        per_seed: usize,
    },
    /// Add paraphrased and renamed variants of every pair
    Augment {
        #[arg(long)]
        corpus: PathBuf,
        /// Where to write; defaults to the input directory
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = protoforge_core::dataset::DEFAULT_VARIANTS)]
        variants: usize,
        /// Use identifier renaming only and make no backend calls
        #[arg(long)]
        rename_only: bool,
    },
    /// Stamp a group-wise train/test split on a corpus
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = protoforge_core::dataset::DEFAULT_TRAIN_FRACTION)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write chat-format JSON Lines and report token estimates
    Export {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = protoforge_core::dataset::DEFAULT_EPOCHS)]
        epochs: u32,
        /// System prompt file; the shipped prompt when absent
        #[arg(long, conflicts_with = "no_system_prompt")]
        system_prompt: Option<PathBuf>,
        /// Leave the system message out
        #[arg(long)]
        no_system_prompt: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Run every query of a suite against every backend
    Run {
        /// Suite JSON; the shipped suite when absent
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Comma-separated backend ids; the five shipped replay models when absent
        #[arg(long, value_delimiter = ',')]
        backends: Vec<String>,
        /// Also write report.csv and report.md here
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Print CSV instead of the markdown table
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum BackendsCommand {
    /// List shipped cassettes and the live endpoint
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose {
        tracing_subscriber::filter::LevelFilter::INFO
    } else {
        tracing_subscriber::filter::LevelFilter::WARN
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_max_level(level)
        .with_target(false)
        .without_time()
        .init();
    let outcome = commands::run(&cli);
    ExitCode::from(outcome.code())
}
