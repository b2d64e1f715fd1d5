//! `clean` — batch entry points and the review server.
//!
//! Data goes to stdout, diagnostics to stderr. Exit status is 0 on success,
//! 2 for bad input and 1 for anything else.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use clean_core::{Method, NegationPolicy, ScorePolicy};

#[derive(Debug, Parser)]
#[command(name = "clean", version, about = "Pre-annotate, review and score clinical note annotations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Note,
    Sentence,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tag every note with the built-in extractor, merge in external tool
    /// outputs, and write one .ann per note.
    Preannotate {
        #[arg(long)]
        corpus: PathBuf,
        /// Lexicon TSV (defaults to the shipped lexicon).
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Negation trigger file (defaults to the shipped triggers).
        #[arg(long)]
        negation_lexicon: Option<PathBuf>,
        /// Directory with one sub-directory of .ann files per external tool.
        #[arg(long)]
        tools: Option<PathBuf>,
        #[arg(long, default_value = "union")]
        method: Method,
        #[arg(long, default_value = "keep-flag")]
        negation_policy: NegationPolicy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted annotations against gold annotations.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        level: LevelArg,
        #[arg(long, default_value = "ignore-assertion")]
        negation_policy: ScorePolicy,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Deal labeled notes into k sets, balanced per label.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        /// `note_id<TAB>label` lines.
        #[arg(long)]
        strata: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
    /// Word-count statistics of a corpus.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        /// Restrict to notes matching a boolean keyword query.
        #[arg(long)]
        query: Option<String>,
        /// Split manifest; adds one row per set.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Create a review project from a corpus.
    Init {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        negation_lexicon: Option<PathBuf>,
        /// Load pre-annotations from this .ann directory instead of running
        /// the extractor.
        #[arg(long)]
        pre: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Serve a review project over HTTP.
    Serve {
        #[arg(long)]
        project: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = &mut std::io::stdout().lock();
    let result = match cli.command {
        Command::Preannotate { corpus, lexicon, negation_lexicon, tools, method, negation_policy, out } => {
            commands::preannotate(&commands::PreannotateArgs {
                corpus,
                lexicon,
                negation_lexicon,
                tools,
                method,
                negation_policy,
                out,
            })
        }
        Command::Evaluate { gold, pred, corpus, lexicon, level, negation_policy, json } => commands::evaluate(
            &commands::EvaluateArgs { gold, pred, corpus, lexicon, level, policy: negation_policy, json },
            stdout,
        ),
        Command::Split { corpus, strata, seed, k } => commands::split(&corpus, &strata, seed, k, stdout),
        Command::Stats { corpus, query, manifest } => {
            commands::stats(&corpus, query.as_deref(), manifest.as_deref(), stdout)
        }
        Command::Init { project, corpus, lexicon, negation_lexicon, pre, force } => {
            commands::init(&project, &corpus, lexicon.as_deref(), negation_lexicon.as_deref(), pre, force, stdout)
        }
        Command::Serve { project, host, port } => commands::serve(&project, &host, port),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clean: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
