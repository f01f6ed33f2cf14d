//! Command line front end: alignment, training, tagging, evaluation and
//! projection exports.

mod align_cmd;
mod common;
mod eval_cmd;
mod project_cmd;
mod tag_cmd;
mod train_cmd;

use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "xner", version, about = "Zero-resource cross-lingual named entity recognition")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a mapping between two embedding spaces without supervision.
    Align(align_cmd::AlignArgs),
    /// Train the tagger on labeled source data.
    Pretrain(train_cmd::PretrainArgs),
    /// Transfer a pretrained tagger to unlabeled target text.
    Finetune(train_cmd::FinetuneArgs),
    /// Tag a CoNLL file with a trained model.
    Tag(tag_cmd::TagArgs),
    /// Score predictions against gold tags.
    Eval(eval_cmd::EvalArgs),
    /// Export a two-dimensional PCA projection of embeddings.
    Project(project_cmd::ProjectArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Align(a) => align_cmd::run(a),
        Command::Pretrain(a) => train_cmd::pretrain(a),
        Command::Finetune(a) => train_cmd::finetune(a),
        Command::Tag(a) => tag_cmd::run(a),
        Command::Eval(a) => eval_cmd::run(a),
        Command::Project(a) => project_cmd::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xner: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
