//! Command-line front end: argument parsing and exit-code mapping only; all
//! behavior lives in the library where it is tested directly.

use clap::{Args, Parser, Subcommand};
use durian_core::cli::{analyze_rewards, entropy_report, exit_code, run_train};
use durian_core::config::ConfigOverrides;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "durian",
    about = "Difficulty-aware group-normalized advantage simulation and analysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated training experiment and write its logs.
    Train(TrainArgs),
    /// Score feature-matrix files by spectral entropy.
    Entropy(EntropyArgs),
    /// Summarize lopsided outcomes in a JSONL rollout reward log.
    AnalyzeRewards(AnalyzeArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config file (`key = value` lines; # comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (beats the config file and DURIAN_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Training steps to run.
    #[arg(long)]
    steps: Option<usize>,
    /// Tasks per batch.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Rollouts per task (the group size).
    #[arg(long)]
    rollout_g: Option<usize>,
    /// Surrogate objective: grpo or dapo.
    #[arg(long)]
    objective: Option<String>,
    /// Blend weights as `original,perceptual,reasoning`.
    #[arg(long)]
    alpha: Option<String>,
    /// Number of reasoning-difficulty bands.
    #[arg(long = "groups-b")]
    groups_b: Option<usize>,
    /// Difficulty grouping on or off.
    #[arg(long, value_parser = clap::builder::BoolishValueParser::new())]
    grouping: Option<bool>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Sampling temperature.
    #[arg(long)]
    temperature: Option<f64>,
    /// Output directory for logs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EntropyArgs {
    /// Feature-matrix files: text (`P d` header then P*d reals) or binary
    /// `.f64` (little-endian u32 P, u32 d, P*d f64).
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSONL log of per-rollout outcomes.
    log: PathBuf,
    /// Rollouts per sample; groups of any other size are excluded.
    #[arg(long, default_value_t = 8)]
    group_size: usize,
    /// Answer-vocabulary size, used only for `token_ids` records.
    #[arg(long, default_value_t = 4)]
    num_answers: usize,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Train(args) => {
            let overrides = ConfigOverrides {
                seed: args.seed,
                steps: args.steps,
                batch_size: args.batch_size,
                rollout_g: args.rollout_g,
                objective: args.objective,
                alpha: args.alpha,
                groups_b: args.groups_b,
                grouping: args.grouping,
                lr: args.lr,
                temperature: args.temperature,
                out_dir: args.out_dir.map(|p| p.display().to_string()),
            };
            match run_train(args.config.as_deref(), &overrides) {
                Ok(summary) => {
                    let last = summary.history.last().expect("steps >= 1 is validated");
                    println!("completed {} steps", summary.history.len());
                    println!("final mean accuracy: {:.6}", last.mean_accuracy);
                    println!("final mean reward: {:.6}", last.mean_reward);
                    println!("outputs: {}", summary.out_dir.display());
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
        Command::Entropy(args) => match entropy_report(&args.files) {
            Ok(report) => {
                for warning in &report.warnings {
                    eprintln!("warning: {warning}");
                }
                print!("{}", report.stdout);
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Command::AnalyzeRewards(args) => {
            match analyze_rewards(&args.log, args.group_size, args.num_answers) {
                Ok(outcome) => {
                    if outcome.incomplete_groups > 0 {
                        eprintln!(
                            "warning: excluded {} incomplete groups",
                            outcome.incomplete_groups
                        );
                    }
                    print!("{}", outcome.table);
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
    }
}
