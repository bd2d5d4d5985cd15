//! The `pbic` command line. [`run`] parses arguments and executes a
//! subcommand in-process, so tests drive exactly what the binary does.

mod artifacts;
mod commands;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pbic_core::data::IngestConfig;
use pbic_core::tsne::OptimizerConfig;

pub use artifacts::Invocation;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag values; exit code 2.
    Usage(String),
    /// Anything that failed while running; exit code 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(msg) => write!(f, "{msg}"),
            Self::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "pbic", version, about = "t-SNE perplexity selection and preference elicitation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a dataset at one perplexity; writes embedding.json and embedding.svg.
    Embed(EmbedArgs),
    /// Select a perplexity by penalized KL; writes sweep.json, kl.svg, score.svg, selected.svg
    /// and prints the selected perplexity.
    Tune(TuneArgs),
    /// Run the grid and keep every map; writes sweep.json, kl.svg, score.svg and maps/<i>.svg.
    Sweep(SweepArgs),
    /// Simulate pairwise judgments from a known utility and check agreement.
    Simulate(SimulateArgs),
    /// Start the elicitation HTTP service.
    Serve(ServeArgs),
}

fn parse_perplexity(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 1.0 => Ok(v),
        Ok(v) => Err(format!("perplexity must be a finite number above 1, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "\\t" | "tab" => Ok(b'\t'),
        _ if s.len() == 1 && (s.as_bytes()[0].is_ascii_graphic() || s == " ") => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be one printable ASCII character, got {s:?}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Numeric CSV file.
    pub data: PathBuf,
    /// Zero-based column holding integer class labels.
    #[arg(long)]
    pub label_column: Option<usize>,
    #[arg(long)]
    pub has_header: bool,
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    pub delimiter: u8,
    /// Keep raw feature values instead of z-scoring each column.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub max_rows: Option<usize>,
}

impl InputArgs {
    pub fn ingest(&self) -> IngestConfig {
        IngestConfig {
            delimiter: self.delimiter,
            has_header: self.has_header,
            label_column: self.label_column,
            standardize: !self.no_standardize,
            max_rows: self.max_rows,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gradient steps per t-SNE run (default 1000).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Independent restarts per perplexity; the lowest KL is kept.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
}

impl RunArgs {
    pub fn optimizer(&self) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::default();
        if let Some(n) = self.max_iters {
            cfg.max_iters = n;
            cfg.momentum_switch_iter = cfg.momentum_switch_iter.min(n);
            cfg.exaggeration_iters = cfg.exaggeration_iters.min(n);
        }
        cfg
    }
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_parser = parse_perplexity)]
    pub perplexity: f64,
    #[command(flatten)]
    pub run: RunArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated perplexities replacing the default doubling grid.
    #[arg(long, value_delimiter = ',', value_parser = parse_perplexity)]
    pub grid: Option<Vec<f64>>,
    /// Rounds of geometric-midpoint refinement around the minimum.
    #[arg(long, default_value_t = 0)]
    pub refine: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', value_parser = parse_perplexity)]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// sweep.json from `tune` or `sweep`; supplies the grid and the selected index.
    #[arg(long, conflicts_with_all = ["grid", "pbic_index"])]
    pub sweep: Option<PathBuf>,
    /// Grid perplexities (default: 9 points doubling from 8).
    #[arg(long, value_delimiter = ',', value_parser = parse_perplexity)]
    pub grid: Option<Vec<f64>>,
    /// Grid index treated as the penalized-KL selection (default: middle).
    #[arg(long)]
    pub pbic_index: Option<usize>,
    /// Grid index where the simulated utility peaks (default: the selection).
    #[arg(long)]
    pub peak: Option<usize>,
    /// Width of the utility bump, in grid steps.
    #[arg(long, default_value_t = 2.0)]
    pub width: f64,
    /// Judgment noise of the simulated annotator.
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Report this strength for every judgment instead of deriving it from the utility gap.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub strength: Option<u8>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: String,
    /// Directory holding one subdirectory per session.
    #[arg(long, default_value = "pbic-data")]
    pub data_dir: PathBuf,
}

/// Parses `argv` (including the program name) and runs the command,
/// writing user-facing output to `out`.
pub fn run<I, S>(argv: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    write!(out, "{e}")?;
                    Ok(())
                }
                _ => Err(CliError::Usage(e.render().to_string())),
            };
        }
    };
    let invocation = Invocation::new(&argv);
    match cli.command {
        Command::Embed(a) => commands::embed(&a, &invocation, out),
        Command::Tune(a) => commands::tune(&a, &invocation, out),
        Command::Sweep(a) => commands::sweep(&a, &invocation, out),
        Command::Simulate(a) => commands::simulate(&a, &invocation, out),
        Command::Serve(a) => commands::serve(&a, out),
    }
}
