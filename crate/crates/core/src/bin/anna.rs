use std::path::PathBuf;
use std::process::ExitCode;

use anna::harness::ablate::{run_ablate, Axis};
use anna::harness::commands::{build_vocab, preprocess, run_eval, run_finetune_qa, run_pretrain};
use anna::harness::RunConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anna", about = "Whole-form tokenization, noun-phrase masking and neighbor-aware encoder pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Extra `key=value` override; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the whole-form vocabulary from the corpus.
    BuildVocab(Common),
    /// Clean, chunk, tokenize and mask the corpus into pretraining examples.
    Preprocess(Common),
    /// Masked-language-model pretraining.
    Pretrain(Common),
    /// Fine-tune span heads on extractive QA and score the dev split.
    FinetuneQa(Common),
    /// Score predictions (or a checkpoint) with EM and F1.
    Eval(Common),
    /// Run every arm of one ablation axis.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// masking, attention, stacking or chunking.
        #[arg(long)]
        axis: Axis,
    },
}

fn config(c: &Common) -> anna::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&c.overrides)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anna::Result<()> {
    let (common, out) = match &cli.command {
        Command::BuildVocab(c)
        | Command::Preprocess(c)
        | Command::Pretrain(c)
        | Command::FinetuneQa(c)
        | Command::Eval(c)
        | Command::Ablate { common: c, .. } => (c, c.out.clone()),
    };
    let cfg = config(common)?;
    let written = match cli.command {
        Command::BuildVocab(_) => build_vocab(&cfg, &out)?,
        Command::Preprocess(_) => preprocess(&cfg, &out)?,
        Command::Pretrain(_) => run_pretrain(&cfg, &out)?,
        Command::FinetuneQa(_) => run_finetune_qa(&cfg, &out)?,
        Command::Eval(_) => run_eval(&cfg, &out)?,
        Command::Ablate { axis, .. } => run_ablate(&cfg, axis, &out)?,
    };
    for f in written.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
