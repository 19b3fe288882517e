use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rxads::pipeline::{self, Overrides, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "rxads", version, about = "CAN-bus window anomaly detection with counterfactual explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Window size in seconds.
    #[arg(long, global = true)]
    window_size: Option<f64>,
    /// Calibration quantile of the training errors.
    #[arg(long, global = true)]
    quantile: Option<f64>,
    /// Multiplier (>= 1) applied to the calibrated threshold.
    #[arg(long, global = true)]
    threshold_scale: Option<f64>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write synthetic baseline, DoS and fuzzy captures.
    Synth,
    /// Extract window features from every capture.
    Features,
    /// Train the autoencoder and calibrate the threshold.
    Train,
    /// Score windows against the threshold.
    Detect,
    /// Compute counterfactual explanations of flagged windows.
    Explain,
    /// Compute detection metrics from the detection reports.
    Eval,
    /// Render the text summary.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let seed = cli
                .seed
                .ok_or_else(|| PipelineError::Config("either --config or --seed is required".into()))?;
            RunConfig::with_seed(seed)
        }
    };
    cfg.apply(&Overrides {
        window_size: cli.window_size,
        quantile: cli.quantile,
        threshold_scale: cli.threshold_scale,
        jobs: cli.jobs,
        seed: cli.seed,
        out_dir: cli.out.clone(),
    });
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Synth => {
            for p in pipeline::cmd_synth(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Features => pipeline::cmd_features(&cfg)?,
        Command::Train => {
            let t = pipeline::cmd_train(&cfg)?;
            println!(
                "threshold {:e} ({} training windows, final loss {:.6})",
                t.bundle.threshold.th,
                t.split.train.len(),
                t.history.final_loss()
            );
        }
        Command::Detect => pipeline::cmd_detect(&cfg)?,
        Command::Explain => pipeline::cmd_explain(&cfg)?,
        Command::Eval => print!("{}", rxads::eval::summarize(&pipeline::cmd_eval(&cfg)?)),
        Command::Report => print!("{}", pipeline::cmd_report(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RXADS_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rxads: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
