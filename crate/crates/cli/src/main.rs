use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualse::pipeline::{self, RunConfig};
use dualse::{ClusterReport, Error, Result};

/// Dual self-expressive subspace clustering experiments.
#[derive(Debug, Parser)]
#[command(name = "dualse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the auto-encoder alone and save a checkpoint.
    Pretrain(Common),
    /// Fine-tune the checkpoint given by `--checkpoint` on the full loss.
    Finetune(Common),
    /// Pretrain, fine-tune, cluster and score.
    Run(Common),
    /// Fusion-mode and structure-variant ablations.
    Ablate(Common),
    /// λ₁ × λ₂ grid over a shared pretrained model.
    Sweep(Common),
    /// Cluster a saved checkpoint without training.
    Eval(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for `sweep`
    #[arg(long)]
    workers: Option<usize>,
    /// Any configuration key as `--key value` or `--key=value`
    #[arg(value_name = "--KEY VALUE", trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut pairs = match &self.config {
            Some(path) => pipeline::parse_config(&std::fs::read_to_string(path)?)?,
            None => Vec::new(),
        };
        pairs.extend(parse_overrides(&self.overrides)?);
        if let Some(seed) = self.seed {
            pairs.push(("seed".into(), seed.to_string()));
        }
        if let Some(out) = &self.out {
            pairs.push(("out".into(), out.display().to_string()));
        }
        if let Some(workers) = self.workers {
            pairs.push(("workers".into(), workers.to_string()));
        }
        RunConfig::from_pairs(&pairs)
    }
}

fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(Error::config(arg.as_str(), "expected a `--key value` override"));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::config(flag, "override is missing its value"))?;
                (flag.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

fn print_report(r: &ClusterReport) {
    println!("acc={} nmi={} pur={}", r.acc, r.nmi, r.pur);
}

fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Pretrain(c) => {
            let (_, history) = pipeline::run_pretrain(&c.config()?)?;
            if let Some(loss) = history.last() {
                println!("final reconstruction loss {loss}");
            }
        }
        Command::Finetune(c) => {
            let out = pipeline::run_finetune(&c.config()?)?;
            if let Some(r) = &out.evaluation.report {
                print_report(r);
            }
        }
        Command::Run(c) => {
            let out = pipeline::run(&c.config()?)?;
            if let Some(r) = &out.evaluation.report {
                print_report(r);
            }
        }
        Command::Ablate(c) => {
            for row in pipeline::ablate(&c.config()?)? {
                println!(
                    "{:<10} {:<16} acc={} nmi={} pur={}",
                    row.group, row.case, row.report.acc, row.report.nmi, row.report.pur
                );
            }
        }
        Command::Sweep(c) => {
            for row in pipeline::sweep(&c.config()?)? {
                println!("lambda1={} lambda2={} acc={}", row.lambda1, row.lambda2, row.report.acc);
            }
        }
        Command::Eval(c) => {
            if let Some(r) = &pipeline::run_eval(&c.config()?)?.report {
                print_report(r);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DUALSE_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
