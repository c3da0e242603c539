use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rxnopt::reactions::{load_templates, TemplateLibrary};
use rxnopt::run::{self, EvalSelection, RunConfig, RunError, Session};

#[derive(Parser)]
#[command(name = "rxnopt", version, about = "Lead optimization over reaction-template actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy, evaluate it on the held-out leads and write all artifacts.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Evaluate a checkpoint on the held-out leads.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        selection: Option<Selection>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Replay pathway records through the templates and optionally re-export them.
    Replay {
        #[arg(long)]
        pathways: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Reaction cache inspection.
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
    /// Recompute metrics from an oracle log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        curve: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CacheCommand {
    Stats {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        templates: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Selection {
    Greedy,
    Sample,
    Random,
}

fn library(path: Option<PathBuf>) -> Result<TemplateLibrary, RunError> {
    match path {
        Some(p) => load_templates(&p).map_err(|e| RunError::Config(e.to_string())),
        None => Ok(TemplateLibrary::default_library()),
    }
}

fn load_config(path: &PathBuf, output: Option<PathBuf>) -> Result<RunConfig, RunError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(o) = output {
        cfg.paths.output_dir = o;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<i32, RunError> {
    match cli.command {
        Command::Optimize { config, seed, output, steps } => {
            let mut cfg = load_config(&config, output)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = steps {
                cfg.grpo.steps = s;
            }
            let summary = run::run_optimize(&Session::new(cfg)?)?;
            print!("{}", summary.report);
            if summary.budget_exhausted() {
                eprintln!("oracle budget exhausted before the planned work finished");
                return Ok(3);
            }
        }
        Command::Eval { config, checkpoint, selection, output } => {
            let cfg = load_config(&config, output)?;
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.checkpoint_path());
            let selection = match selection {
                Some(Selection::Greedy) => EvalSelection::Greedy,
                Some(Selection::Sample) => EvalSelection::Sample,
                Some(Selection::Random) => EvalSelection::Random,
                None => cfg.eval.selection,
            };
            let (report, outcome) = run::run_eval(&Session::new(cfg)?, &checkpoint, selection)?;
            print!("{report}");
            if outcome.budget_exhausted {
                eprintln!("evaluation budget exhausted before every lead was scored");
                return Ok(3);
            }
        }
        Command::Replay { pathways, templates, export } => {
            let lib = library(templates)?;
            let records = run::read_pathways(&pathways)?;
            match export {
                Some(out) => run::export_pathways(&lib, &records, &out)?,
                None => run::verify_pathways(&lib, &records)?,
            }
            println!("{} pathways replayed", records.len());
        }
        Command::Cache { command: CacheCommand::Stats { cache, templates } } => {
            print!("{}", run::cache_stats(&cache, &library(templates)?)?);
        }
        Command::Metrics { log, budget, curve } => {
            let (report, history) = run::metrics_from_log(&log, budget)?;
            print!("{}", report.to_text());
            if let Some(c) = curve {
                rxnopt::evalmetrics::write_curve(&history, &c)
                    .map_err(|source| RunError::Io { path: c.clone(), source })?;
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
