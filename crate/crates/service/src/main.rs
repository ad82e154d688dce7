use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cdss_core::features::{generate_synthetic_study, load_cohort_dir, write_study_dir, CohortConfig};
use cdss_core::models::{train_cohort, CohortParams, Registry, SplitPolicy};
use cdss_core::stats::{compare_report, read_survey};
use cdss_core::xai::{explain, ExplainKind, ExplainOptions};
use cdss_service::config::Config;
use cdss_service::{api, build_state};

#[derive(Debug, Parser)]
#[command(name = "cdss", version, about = "Explainable decision support for intoxication detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic cohort (sensors.csv, events.csv) to a directory.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        participants: usize,
        #[arg(long, default_value_t = 100)]
        windows: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train per-participant models on a cohort directory and save the registry.
    Train {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print one explanation as JSON.
    Explain {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        participant: String,
        /// shap, rules, cf or causal.
        #[arg(long)]
        kind: ExplainKind,
        /// Row to explain; defaults to the participant's latest window.
        #[arg(long)]
        instance: Option<usize>,
        /// Also write the chart PNG here.
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Paired t-tests per question for a survey file.
    EvalCompare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn generate(out: PathBuf, participants: usize, windows: usize, seed: u64) -> CliResult {
    let cfg = CohortConfig { n_participants: participants, windows_per_participant: windows, seed, ..CohortConfig::default() };
    write_study_dir(&generate_synthetic_study(&cfg), &out)?;
    println!("wrote {participants} participants to {}", out.display());
    Ok(())
}

fn train(cohort: PathBuf, out: PathBuf, seed: u64) -> CliResult {
    let matrices = load_cohort_dir(&cohort)?;
    let reg = train_cohort(&matrices, &SplitPolicy::default(), &CohortParams::default(), seed);
    for s in &reg.skipped {
        eprintln!("skipped {}: {}", s.participant_id, s.reason);
    }
    for (pid, e) in &reg.participants {
        println!("{pid}\t{}\taccuracy {:.3}\tf1 {:.3}", e.model.kind(), e.metrics.accuracy, e.metrics.f1);
    }
    match reg.mean_accuracy() {
        Some(acc) => println!("mean accuracy {acc:.4} over {} participants", reg.participants.len()),
        None => return Err("no participant could be trained".into()),
    }
    reg.save(&out)?;
    Ok(())
}

fn run_explain(registry: PathBuf, participant: String, kind: ExplainKind, instance: Option<usize>, png: Option<PathBuf>) -> CliResult {
    let reg = Registry::load(&registry)?;
    let entry = reg.get(&participant).ok_or_else(|| format!("unknown participant {participant}"))?;
    let instance = instance.unwrap_or(entry.data.rows.len().saturating_sub(1));
    let e = explain(entry, kind, instance, &ExplainOptions::default())?;
    if let Some(path) = png {
        std::fs::write(path, e.chart.to_png())?;
    }
    println!("{}", serde_json::to_string_pretty(&e)?);
    Ok(())
}

fn eval_compare(input: PathBuf, out: PathBuf) -> CliResult {
    let rows = read_survey(std::fs::File::open(&input)?)?;
    let report = compare_report(&rows);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for r in &report.results {
        let t = &r.ttest;
        println!("{}\tt({}) = {:.2}, p = {:.4}{}, d = {:.2}", r.question_id, t.df, t.t, t.p, t.stars, t.cohens_d);
    }
    std::fs::write(&out, serde_json::to_vec_pretty(&report)?)?;
    Ok(())
}

async fn serve(config: Option<PathBuf>) -> CliResult {
    let cfg = Config::load(config.as_deref())?;
    let state = build_state(&cfg)?;
    let addr = format!("{}:{}", cfg.server.host, cfg.server.port);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    tracing::info!(%addr, participants = state.registry.snapshot().participants.len(), "serving");
    axum::serve(listener, api::router(state)).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into())).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { out, participants, windows, seed } => generate(out, participants, windows, seed),
        Command::Train { cohort, out, seed } => tokio::task::block_in_place(|| train(cohort, out, seed)),
        Command::Explain { registry, participant, kind, instance, png } => run_explain(registry, participant, kind, instance, png),
        Command::EvalCompare { input, out } => eval_compare(input, out),
        Command::Serve { config } => serve(config).await,
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
