use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

#[derive(Debug, Parser)]
#[command(
    name = "csiloc",
    version,
    about = "CSI fingerprint localization experiments"
)]
struct Cli {
    /// Root seed. Each component derives its own seed from it. Without it,
    /// seeds come from the config files (or default to 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap.
    #[arg(long, global = true, env = "CSILOC_THREADS")]
    threads: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a geo-tagged CSI dataset.
    Generate(GenerateArgs),
    /// Train the autoencoder on one or more datasets.
    TrainAe(TrainAeArgs),
    /// Train the x/y position models on a subsample of a dataset.
    TrainGpr(TrainGprArgs),
    /// Repeated train/test evaluation over training fractions.
    Evaluate(EvaluateArgs),
    /// Localize a single CSI record and print the outcome as JSON.
    Localize(LocalizeArgs),
    /// Time hyperparameter optimization over sample sizes and ADP lengths.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Scenario config (JSON). Defaults to the built-in scene.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the scatterers with this many random ones.
    #[arg(long)]
    random_scatterers: Option<usize>,
    /// Margin around the grid for random scatterers, meters.
    #[arg(long, default_value_t = 3.0)]
    margin: f64,
    #[arg(long)]
    grid_rows: Option<usize>,
    #[arg(long)]
    grid_cols: Option<usize>,
    /// Also write the ADP dataset.
    #[arg(long)]
    adp: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainAeArgs {
    /// Dataset files; several are concatenated.
    #[arg(long = "data", required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Autoencoder config (JSON). Defaults to the reference architecture for
    /// the dataset's ADP size.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Clone)]
struct BudgetArgs {
    /// Optimization budget (JSON).
    #[arg(long = "budget")]
    budget_config: Option<PathBuf>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Debug, Args, Clone)]
struct CodecArgs {
    /// Trained autoencoder model.
    #[arg(long, required_unless_present = "no_ae", conflicts_with = "no_ae")]
    ae: Option<PathBuf>,
    /// Regress on raw ADP vectors instead of codes.
    #[arg(long)]
    no_ae: bool,
}

#[derive(Debug, Args)]
struct TrainGprArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    codec: CodecArgs,
    #[arg(long, default_value = "0.1", value_parser = parse_fraction)]
    fraction: f64,
    /// Which seeded split to use.
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    codec: CodecArgs,
    /// Comma-separated training fractions in (0, 1).
    #[arg(long, default_value = "0.1", value_delimiter = ',', value_parser = parse_fraction)]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = csiloc::pipeline::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LocalizeArgs {
    #[arg(long)]
    ae: PathBuf,
    /// Directory written by `train-gpr`.
    #[arg(long)]
    models: PathBuf,
    /// CSI dataset holding the record to localize.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    index: usize,
    #[arg(long, default_value_t = csiloc::pipeline::DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Base scenario config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "72,720", value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, default_value = "16,256", value_delimiter = ',')]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    out: PathBuf,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|e| format!("{s:?} is not a number: {e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("fraction {v} is outside (0, 1)"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    let result = match &cli.command {
        Command::Generate(a) => commands::generate(&cli, a),
        Command::TrainAe(a) => commands::train_ae(&cli, a),
        Command::TrainGpr(a) => commands::train_gpr(&cli, a),
        Command::Evaluate(a) => commands::evaluate(&cli, a),
        Command::Localize(a) => commands::localize(&cli, a),
        Command::Bench(a) => commands::bench(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
