use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tickmix_cli::pipeline::{cmd_build, cmd_evaluate, cmd_fit_benchmark, cmd_generate, cmd_simulate, cmd_train, run_all};
use tickmix_cli::{CliError, RunConfig};

/// Deep mixture-density forecasting of tick moves from order-flow streams.
#[derive(Debug, Parser)]
#[command(name = "tickmix", version)]
struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set dataset.m=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; beats the config file.
    #[arg(long, env = "TICKMIX_OUT_DIR", global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic order-flow stream.
    Generate,
    /// Replay streams into train/validation/test datasets.
    Build,
    /// Train the configured heads.
    Train {
        /// Continue from saved checkpoints.
        #[arg(long)]
        resume: bool,
    },
    /// Fit the birth-death and GLM benchmarks.
    FitBenchmark,
    /// Score models on the test split.
    Evaluate,
    /// Run the trading simulation on saved forecasts.
    Simulate,
    /// Every stage in order.
    All,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides;
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(d) = cli.out_dir {
        cfg.out_dir = d;
    }
    match cli.command {
        Command::Generate => cmd_generate(&cfg).map(|_| ()),
        Command::Build => cmd_build(&cfg).map(|_| ()),
        Command::Train { resume } => cmd_train(&cfg, resume).map(|_| ()),
        Command::FitBenchmark => cmd_fit_benchmark(&cfg),
        Command::Evaluate => {
            let report = cmd_evaluate(&cfg)?;
            print!("{}", report.to_csv());
            Ok(())
        }
        Command::Simulate => {
            let (_, summary) = cmd_simulate(&cfg)?;
            for m in &summary.models {
                println!("{} mean scaled final {:.6}", m.model, m.mean_scaled);
            }
            Ok(())
        }
        Command::All => run_all(&cfg).map(|_| ()),
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tickmix: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
