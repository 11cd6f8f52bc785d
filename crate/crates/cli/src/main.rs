//! `nuq` command-line front end.

mod commands;
mod configs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use nuq::kv::KvConfig;
use nuq::training::TrainConfig;
use nuq::Result;

use commands::{resolve, Summary};
use configs::{EvalConfig, GenerateConfig, MakeDataConfig, ReportConfig};

#[derive(Parser, Debug)]
#[command(name = "nuq", version, about = "Stochastic video prediction with learned predictive precision")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Configuration file of `key=value` lines.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one key; applied after every other source.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output location.
    #[arg(long)]
    out: Option<String>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a bouncing-digit dataset.
    MakeData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model.
    Train {
        #[command(flatten)]
        common: Common,
        /// nuq or fixed.
        #[arg(long)]
        variant: Option<String>,
        /// Add the sequence discriminator.
        #[arg(long)]
        gan: bool,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a checkpoint.
        #[arg(long, value_name = "CKPT")]
        resume: Option<PathBuf>,
    },
    /// Sample futures from a trained model.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        context: Option<String>,
    },
    /// Best-of-K evaluation on a test set.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        data: Option<String>,
    },
    /// Plot evaluation data files.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<String>,
    },
}

fn push<T: ToString>(out: &mut Vec<String>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        out.push(format!("{key}={}", v.to_string()));
    }
}

/// Flag overrides followed by `--set` overrides.
fn overrides(common: &Common, out_key: &str, extra: Vec<String>) -> Vec<String> {
    let mut all = Vec::new();
    push(&mut all, out_key, common.out.as_ref());
    push(&mut all, "seed", common.seed);
    all.extend(extra);
    all.extend(common.set.iter().cloned());
    all
}

enum Resolved {
    Print(String),
    Done(Summary),
}

fn run_with<C: KvConfig + Default>(
    common: &Common,
    out_key: &str,
    extra: Vec<String>,
    run: impl FnOnce(&C) -> Result<Summary>,
) -> Result<Resolved> {
    let cfg: C = resolve(common.config.as_deref(), &overrides(common, out_key, extra))?;
    if common.print_config {
        return Ok(Resolved::Print(cfg.to_kv_string()));
    }
    run(&cfg).map(Resolved::Done)
}

fn dispatch(command: Command) -> Result<Resolved> {
    match command {
        Command::MakeData { common } => run_with(&common, "out", vec![], commands::make_data),
        Command::Train { common, variant, gan, epochs, resume } => {
            let mut extra = Vec::new();
            push(&mut extra, "variant", variant);
            push(&mut extra, "gan", gan.then_some(true));
            push(&mut extra, "epochs", epochs);
            run_with::<TrainConfig>(&common, "checkpoint_dir", extra, |c| commands::train(c, resume.as_deref()))
        }
        Command::Generate { common, checkpoint, k, steps, context } => {
            let mut extra = Vec::new();
            push(&mut extra, "checkpoint", checkpoint);
            push(&mut extra, "K", k);
            push(&mut extra, "steps", steps);
            push(&mut extra, "context", context);
            run_with(&common, "out", extra, commands::generate)
        }
        Command::Eval { common, checkpoint, k, steps, data } => {
            let mut extra = Vec::new();
            push(&mut extra, "checkpoint", checkpoint);
            push(&mut extra, "K", k);
            push(&mut extra, "steps", steps);
            push(&mut extra, "data", data);
            run_with(&common, "out", extra, commands::eval)
        }
        Command::Report { common, input } => {
            let mut extra = Vec::new();
            push(&mut extra, "in", input);
            run_with::<ReportConfig>(&common, "out", extra, commands::report)
        }
    }
}

fn keys_help<C: KvConfig + Default>(note: &str) -> String {
    format!("Configuration keys (for --config files and --set):\n{}{note}", C::default().help_listing())
}

fn command() -> clap::Command {
    Cli::command()
        .mut_subcommand("make-data", |c| c.after_help(keys_help::<MakeDataConfig>("")))
        .mut_subcommand("train", |c| {
            c.after_help(keys_help::<TrainConfig>("\n--out sets checkpoint_dir.\n"))
        })
        .mut_subcommand("generate", |c| c.after_help(keys_help::<GenerateConfig>("")))
        .mut_subcommand("eval", |c| c.after_help(keys_help::<EvalConfig>("")))
        .mut_subcommand("report", |c| c.after_help(keys_help::<ReportConfig>("")))
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(Resolved::Print(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(Resolved::Done(summary)) => {
            let line: Vec<String> = summary.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!("{}", line.join(" "));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
