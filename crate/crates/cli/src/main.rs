//! `arise`: build repository graphs, serve the JSON tool API, replay
//! recorded traces, and score localization predictions.

mod http;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use arise_core::build::build_graph;
use arise_core::graph::BuildMode;
use arise_core::metrics::{self, GoldSets};
use arise_core::persist;
use arise_core::service::{replay, serve_lines, ReplayError, ToolService};
use arise_core::session::RetrievalSession;

#[derive(Parser)]
#[command(
    name = "arise",
    version,
    about = "Repository program graph and agent tool service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Coarse,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Stdio,
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a source tree and write the graph file.
    Build {
        /// Repository root to scan for .py files.
        repo_root: PathBuf,
        /// full = structure + statement dataflow; coarse = structure only.
        #[arg(long, value_enum, default_value_t = ModeArg::Full)]
        mode: ModeArg,
        /// Output graph file (JSON Lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the tool API over a graph file.
    Serve {
        /// Graph file produced by `build`.
        graph: PathBuf,
        /// Repository root the graph was built from (source reads).
        #[arg(long, default_value = ".")]
        repo: PathBuf,
        #[arg(long, value_enum, default_value_t = TransportArg::Stdio)]
        transport: TransportArg,
        /// Port for the http transport.
        #[arg(long, default_value_t = 7341)]
        port: u16,
    },
    /// Execute a recorded tool-call trace in order; verifies expected
    /// responses when the trace carries them.
    Replay {
        /// Trace file: JSON Lines of {request, expect?}.
        trace: PathBuf,
        /// Graph file produced by `build`.
        graph: PathBuf,
        #[arg(long, default_value = ".")]
        repo: PathBuf,
    },
    /// Score a predictions file against gold patches.
    Eval {
        /// Predictions: JSON Lines of {instance_id, predictions: [...]}.
        predictions: PathBuf,
        /// Directory of per-instance unified diffs (*.diff / *.patch).
        gold_dir: PathBuf,
        /// Graph file for the pre-patch snapshot.
        graph: PathBuf,
        #[arg(long, default_value = ".")]
        repo: PathBuf,
        /// Token budget for the Coverage@budget retrieval window.
        #[arg(long, default_value_t = 8000)]
        budget: u64,
        /// Write the full report as JSON here (table always on stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional per-instance score series (JSON Lines of
        /// {instance_id, score}) for the rank-correlation column.
        #[arg(long)]
        external_scores: Option<PathBuf>,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = if err.downcast_ref::<ReplayError>().is_some() {
                2
            } else {
                1
            };
            std::process::exit(code);
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Build {
            repo_root,
            mode,
            out,
        } => build_command(&repo_root, mode, &out),
        Command::Serve {
            graph,
            repo,
            transport,
            port,
        } => serve_command(&graph, &repo, transport, port),
        Command::Replay { trace, graph, repo } => replay_command(&trace, &graph, &repo),
        Command::Eval {
            predictions,
            gold_dir,
            graph,
            repo,
            budget,
            out,
            external_scores,
        } => eval_command(
            &predictions,
            &gold_dir,
            &graph,
            &repo,
            budget,
            out.as_deref(),
            external_scores.as_deref(),
        ),
    }
}

fn build_command(repo_root: &Path, mode: ModeArg, out: &Path) -> anyhow::Result<()> {
    let mode = match mode {
        ModeArg::Full => BuildMode::Full,
        ModeArg::Coarse => BuildMode::Coarse,
    };
    let output = build_graph(repo_root, mode)
        .with_context(|| format!("building graph for {}", repo_root.display()))?;
    persist::save_to_path(&output.graph, out)
        .with_context(|| format!("writing {}", out.display()))?;
    let d = &output.diagnostics;
    for warning in &d.warnings {
        eprintln!("warning: {warning}");
    }
    for diag in &d.parse_errors {
        eprintln!("parse error: {}: {}", diag.file_path, diag.message);
    }
    for (file, reason) in &d.skipped_files {
        eprintln!("skipped: {file}: {reason}");
    }
    eprintln!(
        "built {} graph: {} nodes, {} edges ({} unresolved calls, {} unresolved bases, {} dropped relative imports) -> {}",
        output.graph.build_mode(),
        output.graph.node_count(),
        output.graph.edge_count(),
        d.unresolved_calls,
        d.unresolved_bases,
        d.dropped_relative_imports,
        out.display()
    );
    Ok(())
}

fn open_service(graph_path: &Path, repo: &Path) -> anyhow::Result<ToolService> {
    let graph = persist::load_from_path(graph_path)
        .with_context(|| format!("loading graph {}", graph_path.display()))?;
    let session = RetrievalSession::open(Arc::new(graph), repo);
    Ok(ToolService::new(session))
}

fn serve_command(
    graph_path: &Path,
    repo: &Path,
    transport: TransportArg,
    port: u16,
) -> anyhow::Result<()> {
    let service = open_service(graph_path, repo)?;
    match transport {
        TransportArg::Stdio => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            serve_lines(&service, stdin.lock(), stdout.lock())?;
            Ok(())
        }
        TransportArg::Http => http::serve(&service, port),
    }
}

fn replay_command(trace: &Path, graph_path: &Path, repo: &Path) -> anyhow::Result<()> {
    let service = open_service(graph_path, repo)?;
    let reader = BufReader::new(
        std::fs::File::open(trace).with_context(|| format!("opening {}", trace.display()))?,
    );
    let outcome = replay(&service, reader)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for entry in &outcome.transcript {
        writeln!(out, "{}", serde_json::to_string(entry)?)?;
    }
    writeln!(
        out,
        "{}",
        serde_json::to_string(&serde_json::json!({ "ledger": outcome.ledger }))?
    )?;
    Ok(())
}

fn eval_command(
    predictions_path: &Path,
    gold_dir: &Path,
    graph_path: &Path,
    repo: &Path,
    budget: u64,
    out: Option<&Path>,
    external_scores: Option<&Path>,
) -> anyhow::Result<()> {
    let graph = persist::load_from_path(graph_path)
        .with_context(|| format!("loading graph {}", graph_path.display()))?;
    let session = RetrievalSession::open(Arc::new(graph), repo);

    let mut golds: BTreeMap<String, GoldSets> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(gold_dir)
        .with_context(|| format!("reading gold dir {}", gold_dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|path| {
            matches!(
                path.extension().and_then(|e| e.to_str()),
                Some("diff") | Some("patch")
            )
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        bail!("no .diff or .patch files in {}", gold_dir.display());
    }
    for path in entries {
        let instance_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let gold = metrics::parse_gold_patch(&text, session.graph())
            .with_context(|| format!("parsing {}", path.display()))?;
        golds.insert(instance_id, gold);
    }

    let predictions_file = std::fs::File::open(predictions_path)
        .with_context(|| format!("opening {}", predictions_path.display()))?;
    let predictions = metrics::load_predictions(BufReader::new(predictions_file))?;

    let external = match external_scores {
        Some(path) => Some(load_external_scores(path)?),
        None => None,
    };

    let report = metrics::evaluate_set(&session, &golds, &predictions, budget, external.as_ref());
    print!("{}", metrics::render_table(&report));
    if let Some(out_path) = out {
        std::fs::write(out_path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", out_path.display()))?;
    }
    Ok(())
}

fn load_external_scores(path: &Path) -> anyhow::Result<BTreeMap<String, f64>> {
    #[derive(serde::Deserialize)]
    struct Row {
        instance_id: String,
        score: f64,
    }
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut scores = BTreeMap::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", path.display(), index + 1))?;
        scores.insert(row.instance_id, row.score);
    }
    Ok(scores)
}
