//! `entlm` — experiment driver for the entity-augmented masked language
//! model: corpus synthesis, two-stage pretraining, zero-shot inference,
//! entity generation, supervised classification and name disambiguation.
//!
//! Every subcommand is driven by a flat `key = value` config file; `--seed`
//! overrides the config's seed, `--out` anchors relative output paths.
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "entlm", version, about = "entity-augmented academic language model workbench")]
struct Cli {
    /// Run configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for relative output paths.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (optionally vocabulary and task files).
    GenCorpus,
    /// Run one MLM pretraining stage.
    Pretrain,
    /// Fine-tune the classification head on a task file.
    Finetune,
    /// Zero-shot candidate inference with Hit@1/MRR.
    Infer,
    /// Free-form entity generation for one paper.
    Generate,
    /// Classification protocol: subsets x freeze settings x seeds.
    Classify,
    /// Author name disambiguation with threshold sweep.
    Disambiguate,
    /// Finite-difference check of the model gradients.
    Gradcheck,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<entlm_core::Error>() {
            return match core {
                entlm_core::Error::NonFinite(_) => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            };
        }
    }
    EXIT_CONFIG
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path, cli.out.clone()) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => RunConfig::parse("", cli.out.clone()).expect("empty config"),
    };
    cfg.override_seed(cli.seed);

    let result = match cli.command {
        Command::GenCorpus => commands::gen_corpus::run(&cfg),
        Command::Pretrain => commands::pretrain::run(&cfg),
        Command::Finetune => commands::finetune::run(&cfg),
        Command::Infer => commands::infer::run(&cfg),
        Command::Generate => commands::generate::run(&cfg),
        Command::Classify => commands::classify::run(&cfg),
        Command::Disambiguate => commands::disambiguate::run(&cfg),
        Command::Gradcheck => commands::gradcheck::run(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
