use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmrl::market_data::FeatureSet;
use pmrl::runner::{cmd_backtest, cmd_compare, cmd_gen_data, cmd_train, Overrides};

#[derive(Parser)]
#[command(name = "pmrl", version, about = "Reinforcement-learning portfolio management on daily OHLCV data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic OHLCV panel from a JSON spec.
    GenData {
        /// Synthetic spec (assets, days, start_date).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Train the configured agent and write a checkpoint.
    Train(RunArgs),
    /// Evaluate an agent on the test span.
    Backtest {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to checkpoint.json in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// One-sided Welch tests of run group A against group B.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        a: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        b: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Feature set such as `close`, `close+high` or `close+low+volume`.
    #[arg(long)]
    features: Option<FeatureSet>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            features: self.features.clone(),
            out_dir: self.out.clone(),
        }
    }
}

fn run(cli: Cli) -> pmrl::Result<()> {
    match cli.command {
        Command::GenData { config, out, seed } => {
            let manifest = cmd_gen_data(&config, &out, seed)?;
            println!("wrote {}", manifest.display());
        }
        Command::Train(args) => {
            let s = cmd_train(&args.config, &args.overrides())?;
            println!(
                "trained {} for {} epochs ({} aborted), {} parameters",
                s.agent.name(),
                s.epochs,
                s.aborted_epochs,
                s.parameters
            );
            println!(
                "training APV {:.4} -> {:.4}",
                s.initial_training_apv, s.final_training_apv
            );
        }
        Command::Backtest { run, checkpoint } => {
            let s = cmd_backtest(&run.config, checkpoint.as_deref(), &run.overrides())?;
            println!("test span {} .. {}", s.start, s.end);
            println!("{:>6} {:>10} {:>10} {:>8} {:>10}", "", "APV", "ADR %", "MDD", "Sharpe");
            for (name, m) in [("agent", &s.metrics), ("ucrp", &s.reference)] {
                let sharpe = m.sharpe.map_or("n/a".to_string(), |x| format!("{x:.4}"));
                println!("{name:>6} {:>10.4} {:>10.4} {:>8.4} {sharpe:>10}", m.final_apv, m.adr, m.mdd);
            }
            if let Some(reason) = s.terminated {
                eprintln!("warning: backtest stopped early: {reason}");
            }
        }
        Command::Compare { a, b, out } => {
            let c = cmd_compare(&a, &b, &out)?;
            for row in &c.rows {
                let p = row.p_value.map_or("n/a".to_string(), |p| format!("{p:.4e}"));
                println!("{:>7}  mean A {:>10.5}  mean B {:>10.5}  p {p}", row.metric, row.mean_a, row.mean_b);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
