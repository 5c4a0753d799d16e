use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use exercise_llm::runner::{build_gateway, render_reports, DataContext, ExperimentConfig, RunError, Runner};
use tracing_subscriber::EnvFilter;

/// Exercise-quality assessment experiments with a chat-completion model.
#[derive(Parser, Debug)]
#[command(name = "exercise-llm", version)]
struct Cli {
    /// Experiment config (TOML). Without one, a synthetic offline setup is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Answer prompts with the offline threshold oracle.
    #[arg(long, global = true)]
    mock: bool,
    /// Response cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Global seed for support/test splits.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load the configured dataset and write it in the interchange format.
    Ingest,
    /// Extract features and write one CSV per exercise.
    Features,
    /// Classification accuracy over the configured shot counts.
    Sweep,
    /// Compare prompting techniques at a fixed shot count.
    Compare,
    /// Certainty-elicitation results per exercise.
    PerExercise,
    /// Two-step assessment then role-play feedback.
    Feedback,
    /// Re-render tables from a previous run's output directory.
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::synthetic(&PathBuf::from("out")),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(dir) = &cli.cache_dir {
        cfg.cache_dir = Some(dir.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), RunError> {
    let cfg = load_config(cli)?;
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Report => {
            print!("{}", render_reports(&out)?);
            return Ok(());
        }
        Command::Ingest => {
            for p in DataContext::new(cfg)?.ingest(&out.join("ingest"))? {
                println!("{}", p.display());
            }
            return Ok(());
        }
        Command::Features => {
            for p in DataContext::new(cfg)?.export_features(&out.join("features"))? {
                println!("{}", p.display());
            }
            return Ok(());
        }
        _ => {}
    }

    // Validate before opening the cache or reading API keys.
    DataContext::new(cfg.clone())?;
    let gateway = build_gateway(&cfg, cli.mock)?;
    let runner = Runner::new(cfg, &gateway)?;
    match cli.command {
        Command::Sweep => {
            let s = runner.run_shot_sweep()?;
            print!("{}", s.render());
            println!("plot data: {}", out.join("sweep").join("plot.csv").display());
        }
        Command::Compare => print!("{}", runner.run_reasoning_comparison()?.render()),
        Command::PerExercise => print!("{}", runner.run_per_exercise()?.0.render()),
        Command::Feedback => {
            let (summary, cells) = runner.run_per_exercise()?;
            print!("{}", summary.render());
            let t = runner.run_feedback(&cells)?;
            for e in &t.entries {
                println!("\n[{}] assessed {} ({}):\n{}", e.sample_id, e.verdict, e.persona, e.feedback_text);
            }
            if let Some(rate) = t.feature_mention_rate() {
                println!("\nfeedback naming a prompt feature: {rate:.2}");
            }
        }
        Command::Report | Command::Ingest | Command::Features => unreachable!(),
    }
    let s = gateway.stats();
    eprintln!(
        "completions: {} backend calls, {} cache hits, {} network requests",
        s.backend_calls, s.cache_hits, s.network_requests
    );
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                2
            } else if e.is_transport() {
                3
            } else {
                1
            })
        }
    }
}
