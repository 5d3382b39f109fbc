//! Command-line entry point: run experiment configs or shipped presets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stratcv_cli::{list_presets, preset_config, run_experiment, ExperimentConfig, RunOutputs};

#[derive(Parser)]
#[command(
    name = "stratcv",
    about = "Monte Carlo variance-reduction experiments for weak SDE schemes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// Path to a flat key-value config file.
        config: PathBuf,
        /// Override the training seed.
        #[arg(long)]
        seed_train: Option<u64>,
        /// Override the testing seed.
        #[arg(long)]
        seed_test: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a shipped preset, optionally scaled down.
    Preset {
        /// Preset name (see `list-presets`).
        name: String,
        /// Divide steps, training and testing path counts by this factor.
        #[arg(long, default_value_t = 1)]
        scale: u32,
        /// Override the training seed.
        #[arg(long)]
        seed_train: Option<u64>,
        /// Override the testing seed.
        #[arg(long)]
        seed_test: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped presets.
    ListPresets,
}

fn apply_overrides(
    mut config: ExperimentConfig,
    seed_train: Option<u64>,
    seed_test: Option<u64>,
    out: Option<PathBuf>,
) -> ExperimentConfig {
    if let Some(s) = seed_train {
        config.seed_train = s;
    }
    if let Some(s) = seed_test {
        config.seed_test = s;
    }
    if let Some(dir) = out {
        config.output_dir = dir;
    }
    config
}

fn execute(config: ExperimentConfig) -> Result<(), String> {
    config.validate().map_err(|e| e.to_string())?;
    let RunOutputs {
        output_dir,
        reports,
        files,
    } = run_experiment(&config).map_err(|e| e.to_string())?;
    println!("{}", stratcv_cli::summary_csv(&reports).trim_end());
    println!();
    for report in &reports {
        println!(
            "{:>5}: mean {:.6e}  variance {:.6e}  ({} testing paths)",
            report.method, report.mean, report.sample_variance, report.n_testing
        );
    }
    println!();
    println!("wrote {} files to {}", files.len(), output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed_train,
            seed_test,
            out,
        } => ExperimentConfig::from_file(&config)
            .map_err(|e| e.to_string())
            .map(|c| apply_overrides(c, seed_train, seed_test, out))
            .and_then(execute),
        Command::Preset {
            name,
            scale,
            seed_train,
            seed_test,
            out,
        } => preset_config(&name, scale)
            .map_err(|e| e.to_string())
            .map(|c| apply_overrides(c, seed_train, seed_test, out))
            .and_then(execute),
        Command::ListPresets => {
            for preset in list_presets() {
                println!("{:<18} {}", preset.name, preset.description);
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
