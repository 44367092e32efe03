use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

use commands::CliError;

/// Wavelet/NHMC feature extraction and classification of reflectance spectra.
#[derive(Debug, Parser)]
#[command(name = "nhmc", version)]
struct Cli {
    /// Directory every relative path is resolved against.
    #[arg(long, short = 'w', global = true, default_value = ".")]
    workspace: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a library CSV and rewrite it sorted by class and sample id.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic library with class-specific absorption dips.
    Synth {
        #[arg(long)]
        output: PathBuf,
        /// TOML file with synthetic-library settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        per_class: Option<usize>,
        /// Also write the true dip centres per sample as JSON.
        #[arg(long)]
        dips: Option<PathBuf>,
    },
    /// Resample onto a uniform grid and normalize by the maximum.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.35)]
        lo: f64,
        #[arg(long, default_value_t = 2.6)]
        hi: f64,
        #[arg(long, default_value_t = 0.005)]
        step: f64,
        /// CSV of rejected sample ids and reasons.
        #[arg(long)]
        rejected: Option<PathBuf>,
    },
    /// Pad every class to a fixed size with same-class mixtures.
    Balance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 65)]
        per_class: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
    /// Seeded per-class train/test split.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 52)]
        train_per_class: usize,
        #[arg(long, default_value_t = 13)]
        test_per_class: usize,
        #[arg(long, default_value_t = 3)]
        seed: u64,
    },
    /// Simulate mixed pixels with a 3x3 Gaussian blur at a given DMP.
    Blur {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Dominant material percentage as a fraction in (1/9, 1].
        #[arg(long)]
        dmp: f64,
        #[arg(long, default_value_t = 5)]
        seed: u64,
    },
    /// Train one GMM chain per wavelength and save the model as JSON.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = nhmc_core::wavelet::DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value = "haar")]
        wavelet: String,
        /// TOML file with EM settings (max_iter, tol, seed, init).
        #[arg(long)]
        em: Option<PathBuf>,
    },
    /// Collapse a GMM model into its binary mixture-of-Gaussians form.
    Collapse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Viterbi state labels for every spectrum of a library.
    Label {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Multiply labels by the sign of their wavelet coefficient.
        #[arg(long)]
        signs: bool,
    },
    /// Classify a test library against a training library.
    Classify {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// spectrum, coeffs, gmm_labels, gmm_sign, mog_labels, mog_sign or rivard.
        #[arg(long)]
        feature: String,
        /// Model JSON for label features; a GMM model is collapsed for MOG features.
        #[arg(long)]
        model: Option<PathBuf>,
        /// nn or svm.
        #[arg(long, default_value = "nn")]
        classifier: String,
        #[arg(long, default_value = "cosine")]
        metric: String,
        #[arg(long, default_value_t = nhmc_core::wavelet::DEFAULT_LEVELS)]
        levels: usize,
        /// TOML file with SVM grid-search settings.
        #[arg(long)]
        svm_config: Option<PathBuf>,
        /// CSV of per-sample predictions.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Absorption-band locations from sign-augmented binary labels.
    Semantics {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Directory for one slope-colored CSV per spectrum.
        #[arg(long)]
        colored_dir: Option<PathBuf>,
    },
    /// Accuracy-versus-DMP series from a benchmark report.
    ExportPlotData {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the full benchmark sweep described by a TOML config.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the default benchmark config as TOML.
    DefaultConfig,
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(commands::WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{} must be a positive integer, got `{raw}`", commands::WORKERS_ENV)))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("cannot start {n} workers: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_workers().and_then(|()| commands::dispatch(&cli.workspace, cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
