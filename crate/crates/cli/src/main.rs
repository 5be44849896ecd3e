//! Command-line front end: training, normalization, corpus synthesis,
//! throughput benchmarking, and gradient verification as reproducible runs.
//!
//! Exit codes are a stable contract for pipeline integration: 0 success,
//! 2 usage or configuration error, 4 numeric failure, 3 any other data error.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "colornorm",
    version,
    about = "Self-supervised color normalization for H&E rasters, with classical baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the offset network on target-domain PPM images
    Train(TrainArgs),
    /// Normalize one raster with a trained model or a classical baseline
    Normalize(NormalizeArgs),
    /// Generate a deterministic synthetic two-stain corpus
    Synthesize(SynthesizeArgs),
    /// Time normalization methods over a corpus, in seconds per gigapixel
    Benchmark(BenchmarkArgs),
    /// Verify every analytic gradient against finite differences
    Gradcheck,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// JSON run configuration (see README for the schema)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's iteration count
    #[arg(long)]
    iterations: Option<usize>,
    /// Override the config's weight output path
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the config's thread count
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(clap::Args)]
struct NormalizeArgs {
    /// Input PPM raster
    #[arg(long)]
    input: PathBuf,
    /// Output PPM path
    #[arg(long)]
    output: PathBuf,
    /// colornormnet | reinhard | macenko
    #[arg(long, default_value = "colornormnet")]
    method: String,
    /// global (one offset for the whole image) | pixel (per-pixel field)
    #[arg(long, default_value = "global")]
    mode: String,
    /// Weight file (colornormnet only)
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Target statistics JSON produced by --save-target (classical methods)
    #[arg(long)]
    target_stats: Option<PathBuf>,
    /// Fit the target from this image instead of a stats file
    #[arg(long)]
    target_image: Option<PathBuf>,
    /// Write the fitted target statistics to this JSON file
    #[arg(long)]
    save_target: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(clap::Args)]
struct SynthesizeArgs {
    /// Output directory for the generated PPM files
    #[arg(long)]
    out: PathBuf,
    /// Number of slides
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Slide side length in pixels
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// Base seed; each slide derives its own child seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct BenchmarkArgs {
    /// Comma-separated methods: colornormnet_global, colornormnet_pixel, reinhard, macenko
    #[arg(long, default_value = "colornormnet_global,macenko")]
    methods: String,
    /// Directory of PPM rasters (at least 10 megapixels total)
    #[arg(long)]
    corpus: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Trained weights; omitted = fresh seeded weights (throughput only)
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Image to fit classical targets from (default: first corpus file)
    #[arg(long)]
    target_image: Option<PathBuf>,
    /// Where normalized outputs go (default: a temporary directory)
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write the report as JSON to this path
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Normalize(args) => commands::normalize(args),
        Command::Synthesize(args) => commands::synthesize(args),
        Command::Benchmark(args) => commands::benchmark(args),
        Command::Gradcheck => commands::gradcheck(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
