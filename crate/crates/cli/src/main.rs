use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dagcheck::dsep::minimal_adjustment_sets;
use dagcheck::graph::{parse_document, CausalDag, DagDocument};
use dagcheck::implications::implied_independencies;
use dagcheck::metrics::{build_dataset, ingest_log, IngestOptions, RepoEventLog};
use dagcheck::refine::{refine, Choice, Decider, FailureDiagnosis, Policy, RefineOptions, SessionStatus};
use dagcheck::report::{render_session, render_table};
use dagcheck::stats::{evaluate_dag, DatasetTable, TestConfig};

#[derive(Parser)]
#[command(name = "dagcheck", version, about = "Check causal DAGs against data")]
struct Cli {
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a DAG file and report every violated invariant.
    Validate { dag: PathBuf },
    /// List the testable independencies a DAG implies.
    Implications { dag: PathBuf },
    /// Minimal backdoor adjustment sets for the exposure and outcome.
    Adjust {
        dag: PathBuf,
        /// Defaults to the DAG's marked exposure.
        #[arg(long)]
        exposure: Option<String>,
        /// Defaults to the DAG's marked outcome.
        #[arg(long)]
        outcome: Option<String>,
    },
    /// Test every implication of a DAG on a dataset.
    Test {
        dag: PathBuf,
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate, diagnose and edit a DAG until the data stop contradicting it.
    Refine {
        dag: PathBuf,
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 25)]
        max_iterations: usize,
        /// Prompt for each decision instead of choosing automatically.
        #[arg(long)]
        interactive: bool,
        /// Skip the unconditional test recorded with each diagnosis.
        #[arg(long)]
        no_auxiliary: bool,
        /// Write the session journal as JSON.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    /// Convert JSONL repository bundles into a dataset CSV.
    Ingest {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON object mapping lower-case issue labels to bug/non-bug.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Classify unlabeled issues by "bug"/"fix" in title or body.
        #[arg(long)]
        keyword_fallback: bool,
        /// Window start (RFC 3339) for projects without CI.
        #[arg(long)]
        no_ci_start: Option<DateTime<Utc>>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = "DAGCHECK_STATE_DIR", default_value = "dagcheck-state")]
        state_dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        workers: usize,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 999)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    fn config(&self) -> Result<TestConfig> {
        let c = TestConfig {
            alpha: self.alpha,
            permutations: self.permutations,
            rng_seed: self.seed,
            ..TestConfig::default()
        };
        c.validate().map_err(|e| usage(e.to_string()))?;
        Ok(c)
    }
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_dag(path: &Path) -> Result<CausalDag> {
    let text = read(path)?;
    let doc = parse_document(&text).with_context(|| path.display().to_string())?;
    doc.into_dag().with_context(|| path.display().to_string())
}

fn load_data(path: &Path) -> Result<DatasetTable> {
    let file = std::fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let table = DatasetTable::from_csv(file).with_context(|| path.display().to_string())?;
    if table.dropped_rows() > 0 {
        eprintln!("dropped {} rows with missing values", table.dropped_rows());
    }
    Ok(table)
}

fn validate(path: &Path) -> Result<bool> {
    let text = read(path)?;
    let doc: DagDocument = parse_document(&text).with_context(|| path.display().to_string())?;
    let violations = doc.violations();
    if violations.is_empty() {
        println!("{}: valid ({} variables, {} edges)", path.display(), doc.variables.len(), doc.edges.len());
        return Ok(true);
    }
    for v in &violations {
        println!("{}: {}", path.display(), v.message);
    }
    Ok(false)
}

struct Prompt;

impl Decider for Prompt {
    fn decide(&mut self, _dag: &CausalDag, d: &FailureDiagnosis) -> Choice {
        let mut err = std::io::stderr();
        let _ = writeln!(err, "Failed: {}", d.failed_claim);
        for (i, c) in d.candidates.iter().enumerate() {
            let _ = writeln!(err, "  [{i}] {} ({})", c.edit, c.mechanism.label());
            for r in &c.followup_results {
                let _ = writeln!(err, "      follow-up {}: p-value {:.6e}, {}", r.claim, r.outcome.p_value, r.outcome.decision.label());
            }
        }
        let stdin = std::io::stdin();
        loop {
            let _ = write!(err, "accept [0-{}], d to decline, q to abort: ", d.candidates.len().saturating_sub(1));
            let _ = err.flush();
            let mut line = String::new();
            match stdin.lock().read_line(&mut line) {
                Ok(0) | Err(_) => return Choice::Abort,
                Ok(_) => {}
            }
            match line.trim() {
                "d" => return Choice::Decline,
                "q" => return Choice::Abort,
                s => match s.parse::<usize>() {
                    Ok(i) if i < d.candidates.len() => return Choice::Accept(i),
                    _ => {
                        let _ = writeln!(err, "not a choice: {s}");
                    }
                },
            }
        }
    }
}

fn ingest(
    bundles: &[PathBuf],
    out: &Path,
    labels: Option<&Path>,
    keyword_fallback: bool,
    no_ci_start: Option<DateTime<Utc>>,
) -> Result<()> {
    let label_map: BTreeMap<String, bool> = match labels {
        Some(p) => serde_json::from_str(&read(p)?).with_context(|| p.display().to_string())?,
        None => BTreeMap::from([("bug".to_string(), true)]),
    };
    let options = IngestOptions {
        label_map: label_map.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect(),
        keyword_fallback,
        no_ci_start,
    };
    let mut projects = Vec::new();
    for path in bundles {
        let file = std::fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let log = RepoEventLog::from_jsonl(std::io::BufReader::new(file)).with_context(|| path.display().to_string())?;
        if !log.dangling_parents.is_empty() {
            eprintln!("{}: {} parent commits missing from the log", path.display(), log.dangling_parents.len());
        }
        let unscanned = dagcheck::metrics::detect_merge_conflicts(&log).unscanned;
        if !unscanned.is_empty() {
            eprintln!("{}: {} merge commits have no conflict probe", path.display(), unscanned.len());
        }
        projects.push(ingest_log(&log, &options).with_context(|| path.display().to_string())?);
    }
    let table = build_dataset(&projects)?;
    let file = std::fs::File::create(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    table.write_csv(file)?;
    eprintln!("wrote {} rows to {}", table.row_count(), out.display());
    Ok(())
}

async fn serve(bind: &str, state_dir: &Path, workers: usize) -> Result<()> {
    let state = dagcheck_cli::AppState::open(state_dir, workers)?;
    let listener = tokio::net::TcpListener::bind(bind).await.map_err(|e| usage(format!("{bind}: {e}")))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, dagcheck_cli::router(state)).await?;
    Ok(())
}

/// Ok(true) on success, Ok(false) on a validation or consistency failure.
fn run(cli: Cli) -> Result<bool> {
    let fmt = |default| cli.format.unwrap_or(default);
    match &cli.command {
        Command::Validate { dag } => validate(dag),
        Command::Implications { dag } => {
            let hs = implied_independencies(&load_dag(dag)?)?;
            match fmt(Format::Json) {
                Format::Json => println!("{}", hs.to_json()),
                Format::Table => {
                    for (i, c) in hs.claims.iter().enumerate() {
                        println!("H{} {c}", i + 1);
                    }
                    for p in &hs.omitted_pairs {
                        println!("untestable: {} and {} are separated only through latent variables", p.x, p.y);
                    }
                }
            }
            Ok(true)
        }
        Command::Adjust { dag, exposure, outcome } => {
            let dag = load_dag(dag)?;
            let x = exposure
                .as_deref()
                .or(dag.exposure())
                .ok_or_else(|| usage("no exposure given or marked in the DAG"))?;
            let y = outcome
                .as_deref()
                .or(dag.outcome())
                .ok_or_else(|| usage("no outcome given or marked in the DAG"))?;
            let sets = minimal_adjustment_sets(&dag, x, y)?;
            match fmt(Format::Table) {
                Format::Json => println!("{}", serde_json::to_string_pretty(&sets)?),
                Format::Table if !sets.admissible => println!("no observed adjustment set for {x} -> {y}"),
                Format::Table => {
                    for s in &sets.sets {
                        println!("{{{}}}", s.iter().cloned().collect::<Vec<_>>().join(", "));
                    }
                }
            }
            Ok(sets.admissible)
        }
        Command::Test { dag, data, config } => {
            let (dag, data, config) = (load_dag(dag)?, load_data(data)?, config.config()?);
            let eval = evaluate_dag(&data, &dag, &config)?;
            match fmt(Format::Table) {
                Format::Json => println!("{}", serde_json::to_string_pretty(&eval)?),
                Format::Table => {
                    print!("{}", render_table(&eval.results));
                    println!("{} passed, {} failed", eval.summary.passed, eval.summary.failed);
                }
            }
            Ok(eval.consistent())
        }
        Command::Refine {
            dag,
            data,
            config,
            max_iterations,
            interactive,
            no_auxiliary,
            journal,
        } => {
            let (dag, data, config) = (load_dag(dag)?, load_data(data)?, config.config()?);
            let options = RefineOptions {
                max_iterations: *max_iterations,
                auxiliary_test: !no_auxiliary,
            };
            let mut prompt = Prompt;
            let policy = if *interactive {
                Policy::Interactive(&mut prompt)
            } else {
                Policy::Automatic
            };
            let session = refine(dag, &data, config, options, policy)?;
            if let Some(path) = journal {
                std::fs::write(path, session.to_json()).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            }
            match fmt(Format::Table) {
                Format::Json => println!("{}", session.to_json()),
                Format::Table => print!("{}", render_session(&session)),
            }
            Ok(session.status == SessionStatus::Consistent)
        }
        Command::Ingest {
            bundles,
            out,
            labels,
            keyword_fallback,
            no_ci_start,
        } => ingest(bundles, out, labels.as_deref(), *keyword_fallback, *no_ci_start).map(|_| true),
        Command::Serve { bind, state_dir, workers } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(bind, state_dir, *workers)).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
