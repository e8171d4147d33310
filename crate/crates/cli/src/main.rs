use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ljp_core::experiment::{
    cmd_evaluate, cmd_report, cmd_run, cmd_validate, ExperimentConfig, ExperimentError, RunOptions,
};
use ljp_core::metrics::EvaluationScope;

#[derive(Parser)]
#[command(
    name = "ljp",
    version,
    about = "Structured-prompting experiments for legal judgment prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check corpus, template, variants and backend without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Skip the backend reachability probe.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run every case × variant × repeat, reusing finished transcripts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        max_in_flight: Option<usize>,
    },
    /// Score a transcript store against the gold corpus.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        /// Comma-separated: independent,common,chainwise
        #[arg(long, value_delimiter = ',')]
        scopes: Option<Vec<EvaluationScope>>,
    },
    /// Render a comparison report from a results file.
    Report {
        /// Results file; defaults to the one named by --config.
        results: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    ExperimentConfig::load(path)
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Validate { config, dry_run } => {
            let report = cmd_validate(&load(&config)?, dry_run);
            if report.is_ok() {
                println!("{report}");
                Ok(())
            } else {
                Err(ExperimentError::Validation(report))
            }
        }
        Command::Run {
            config,
            store,
            max_in_flight,
        } => {
            let cfg = load(&config)?;
            let opts = RunOptions {
                store,
                max_in_flight,
                ..RunOptions::default()
            };
            match cmd_run(&cfg, &opts) {
                Ok(summary) => {
                    println!("{summary}");
                    Ok(())
                }
                Err(ExperimentError::RunFailures { failed, summary }) => {
                    println!("{summary}");
                    Err(ExperimentError::RunFailures { failed, summary })
                }
                Err(e) => Err(e),
            }
        }
        Command::Evaluate {
            config,
            store,
            scopes,
        } => {
            let cfg = load(&config)?;
            let (results, path) = cmd_evaluate(&cfg, store.as_deref(), scopes.as_deref())?;
            print!("{}", ljp_core::experiment::render_results_table(&results));
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Report { results, config } => {
            let path = match (results, config) {
                (Some(p), _) => p,
                (None, Some(c)) => load(&c)?.results_path(),
                (None, None) => {
                    return Err(ExperimentError::Config(
                        "report needs a results file or --config".into(),
                    ))
                }
            };
            print!("{}", cmd_report(&path)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(ExperimentError::Validation(report)) => {
            eprintln!("{report}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
