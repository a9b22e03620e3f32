//! `xvqa`: generate the synthetic world, train the explainers and reasoners,
//! and run the analyses, one subcommand per stage.

mod config;
mod errors;
mod stages;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::Common;
use errors::{categorize, Category};
use stages::RunDir;

#[derive(Parser)]
#[command(name = "xvqa", version, about = "Explain-then-reason VQA on a synthetic micro-world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or import) the train and validation splits and the word list.
    GenData(Common),
    /// Build the vocabulary, answer candidates and idf table.
    BuildVocab(Common),
    /// Train the word predictor and caption generator; attach explanations.
    TrainExplainers(Common),
    /// Train one reasoner (`--mode`).
    TrainReasoner(Common),
    /// Evaluate a trained reasoner on the validation split.
    Evaluate(Common),
    /// Train and compare the word, sentence and full reasoners.
    Ablate(Common),
    /// Evaluate the sentence reasoner with each caption source.
    Control(Common),
    /// Vary explanation quality and bin accuracy by quality.
    Sweep(Common),
    /// Split answers by correctness, relevance and answer type.
    Dissect(Common),
    /// Finite-difference check of every model's gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Random toy batches per model.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
    /// Run every stage and write a combined report.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        gradcheck_seeds: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::BuildVocab(_) => "build-vocab",
            Command::TrainExplainers(_) => "train-explainers",
            Command::TrainReasoner(_) => "train-reasoner",
            Command::Evaluate(_) => "evaluate",
            Command::Ablate(_) => "ablate",
            Command::Control(_) => "control",
            Command::Sweep(_) => "sweep",
            Command::Dissect(_) => "dissect",
            Command::Gradcheck { .. } => "gradcheck",
            Command::Report { .. } => "report",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::GenData(c)
            | Command::BuildVocab(c)
            | Command::TrainExplainers(c)
            | Command::TrainReasoner(c)
            | Command::Evaluate(c)
            | Command::Ablate(c)
            | Command::Control(c)
            | Command::Sweep(c)
            | Command::Dissect(c) => c,
            Command::Gradcheck { common, .. } | Command::Report { common, .. } => common,
        }
    }
}

fn run(cmd: &Command) -> Result<()> {
    let cfg = config::resolve(cmd.common())?;
    let run = RunDir::new(config::run_dir(&cfg));
    run.write(&format!("config/{}.toml", cmd.name()), config::to_toml(&cfg)?)?;
    log::info!("{} in {}", cmd.name(), run.root().display());
    match cmd {
        Command::GenData(_) => stages::gen_data(&cfg, &run),
        Command::BuildVocab(_) => stages::build_vocab(&cfg, &run),
        Command::TrainExplainers(_) => stages::train_explainers(&cfg, &run),
        Command::TrainReasoner(_) => stages::train_reasoner(&cfg, &run),
        Command::Evaluate(_) => stages::evaluate(&cfg, &run),
        Command::Ablate(_) => stages::ablate(&cfg, &run),
        Command::Control(_) => stages::control(&cfg, &run),
        Command::Sweep(_) => stages::sweep(&cfg, &run),
        Command::Dissect(_) => stages::dissect_stage(&cfg, &run),
        Command::Gradcheck { seeds, .. } => stages::gradcheck(&cfg, &run, *seeds),
        Command::Report { gradcheck_seeds, .. } => stages::report(&cfg, &run, *gradcheck_seeds),
    }
}

fn fail(category: Category, message: &str) -> ExitCode {
    eprintln!("error[{}]: {}", category.name(), message.replace('\n', " "));
    ExitCode::from(category.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail(Category::Usage, first);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(categorize(&e), &format!("{e:#}")),
    }
}
