use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use igmirag_core::context::AnswerMode;
use igmirag_core::hypergraph::LayerCounts;
use igmirag_core::pipeline::{load_qa, query_label, run_eval, store_paths};
use igmirag_core::{
    build_index, load_corpus, Config, Engine, Error, Gateway, GatewayMode, QueryOptions, QueryTrace, TokenUsage,
};

#[derive(Parser)]
#[command(name = "igmirag", version, about = "Hypergraph retrieval-augmented generation")]
struct Cli {
    /// Log at debug level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a store from a directory of .txt files or a JSON-lines corpus.
    Index {
        corpus: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Store prefix; writes <prefix>.hhhg and <prefix>.dfidx.
        #[arg(long, default_value = "store")]
        store: PathBuf,
        /// Print the stats as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Answer one question against a store.
    Query {
        store: PathBuf,
        question: String,
        #[command(flatten)]
        common: Common,
        /// Anchors and their chunks only.
        #[arg(long)]
        no_diffusion: bool,
        /// Write the rendered context here.
        #[arg(long, value_name = "FILE")]
        dump_context: Option<PathBuf>,
        /// Write the diffusion trace here, one JSON record per phase.
        #[arg(long, value_name = "FILE")]
        trace_diffusion: Option<PathBuf>,
        /// Write the whole query trace here as JSON.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        #[arg(long, value_enum)]
        answer_mode: Option<ModeArg>,
    },
    /// Score a JSON-lines file of {question, answers} records.
    Eval {
        store: PathBuf,
        qa: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Score with the model judge instead of EM/F1.
        #[arg(long)]
        judge: bool,
        /// Write the report JSON here.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Write per-question records here as JSON lines.
        #[arg(long, value_name = "FILE")]
        records: Option<PathBuf>,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Show store statistics, or one vertex.
    Inspect {
        store: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Print this vertex (by key) with its neighbours.
        #[arg(long)]
        vertex: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults apply when absent.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides gateway.mode.
    #[arg(long, value_enum)]
    mode: Option<GatewayArg>,
    /// Overrides gateway.cassette.
    #[arg(long, value_name = "FILE")]
    cassette: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GatewayArg {
    Live,
    Stub,
    Record,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Brief,
    Detailed,
}

impl Common {
    fn config(&self) -> Result<Config> {
        let mut config = match &self.config {
            Some(path) => {
                require(path)?;
                Config::load(path)?
            }
            None => Config::default(),
        };
        if let Some(mode) = self.mode {
            config.gateway.mode = match mode {
                GatewayArg::Live => GatewayMode::Live,
                GatewayArg::Stub => GatewayMode::Stub,
                GatewayArg::Record => GatewayMode::Record,
                GatewayArg::Replay => GatewayMode::Replay,
            };
        }
        if let Some(cassette) = &self.cassette {
            config.gateway.cassette = Some(cassette.clone());
        }
        config.validate()?;
        Ok(config)
    }
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::NotFound(path.display().to_string()).into());
    }
    Ok(())
}

fn require_store(prefix: &Path) -> Result<()> {
    let (graph, index) = store_paths(prefix);
    require(&graph)?;
    require(&index)
}

fn stats_table(layers: LayerCounts, chunks: usize, tokens: Option<u64>) -> String {
    let mut rows = vec![
        ("Entities", layers.entities as u64),
        ("Pairwise Relations", layers.pair_relations as u64),
        ("Multiple Associations", layers.multi_associations as u64),
        ("Chunks", chunks as u64),
    ];
    rows.extend(tokens.map(|t| ("Tokens", t)));
    rows.iter().map(|(name, n)| format!("{name:<24}{n:>10}\n")).collect()
}

fn cmd_index(corpus: &Path, common: &Common, store: &Path, json: bool) -> Result<()> {
    require(corpus)?;
    let config = common.config()?;
    let docs = load_corpus(corpus)?;
    let gateway = Gateway::from_config(config.gateway.clone())?;
    let built = build_index(&docs, &config, &gateway)?;
    gateway.flush()?;
    for failure in &built.failures {
        eprintln!("skipped chunk {}: {}", failure.chunk_id, failure.reason);
    }
    let stats = built.stats.clone();
    let engine = Engine::from_built(config, built);
    if let Some(dir) = store.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    engine.save(store)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        print!("{}", stats_table(stats.layers, stats.chunks, Some(stats.tokens)));
    }
    let (graph, index) = store_paths(store);
    eprintln!("wrote {} and {}", graph.display(), index.display());
    Ok(())
}

fn write_artifacts(
    trace: &QueryTrace,
    dump_context: Option<&Path>,
    trace_diffusion: Option<&Path>,
    trace_file: Option<&Path>,
) -> Result<()> {
    if let (Some(path), Some(window)) = (dump_context, &trace.window) {
        fs::write(path, &window.rendered).with_context(|| path.display().to_string())?;
    }
    if let Some(path) = trace_diffusion {
        let text = match &trace.diffusion {
            Some(d) => d.trace_jsonl(),
            None => "{\"exit\":\"skipped\"}\n".to_string(),
        };
        fs::write(path, text).with_context(|| path.display().to_string())?;
    }
    if let Some(path) = trace_file {
        fs::write(path, serde_json::to_string_pretty(trace)? + "\n").with_context(|| path.display().to_string())?;
    }
    Ok(())
}

fn print_tokens(usage: TokenUsage) {
    println!(
        "Tokens: {} (prompt {}, completion {})",
        usage.total(),
        usage.prompt_tokens,
        usage.completion_tokens
    );
}

#[allow(clippy::too_many_arguments)]
fn cmd_query(
    store: &Path,
    question: &str,
    common: &Common,
    no_diffusion: bool,
    dump_context: Option<&Path>,
    trace_diffusion: Option<&Path>,
    trace_file: Option<&Path>,
    answer_mode: Option<ModeArg>,
) -> Result<()> {
    require_store(store)?;
    let config = common.config()?;
    let engine = Engine::open(store, config.clone())?;
    let gateway = Gateway::from_config(config.gateway)?;
    let opts = QueryOptions {
        no_diffusion,
        mode: answer_mode.map(|m| match m {
            ModeArg::Brief => AnswerMode::Brief,
            ModeArg::Detailed => AnswerMode::Detailed,
        }),
    };
    let mut trace = QueryTrace::default();
    let outcome = engine.query_into(question, &gateway, &query_label(0), opts, &mut trace);
    gateway.flush()?;
    write_artifacts(&trace, dump_context, trace_diffusion, trace_file)?;
    if let Err(e) = outcome {
        if e.is_gateway() {
            eprintln!("partial trace:\n{}", serde_json::to_string_pretty(&trace)?);
        }
        return Err(e.into());
    }
    let answer = trace.answer.as_ref().expect("finished query has an answer");
    if let Some(s) = &trace.strategy {
        eprintln!(
            "strategy: target_layer={} matching_score={} semantic_depth={}{}",
            s.strategy.target_layer.code(),
            s.strategy.matching_score,
            s.strategy.semantic_depth,
            if s.fallback { " (fallback)" } else { "" }
        );
    }
    if !answer.thought.is_empty() {
        println!("Thought: {}", answer.thought);
    }
    println!("Answer: {}", answer.answer);
    print_tokens(trace.tokens);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    store: &Path,
    qa: &Path,
    common: &Common,
    judge: bool,
    report_path: Option<&Path>,
    records_path: Option<&Path>,
    json: bool,
) -> Result<()> {
    require_store(store)?;
    require(qa)?;
    let config = common.config()?;
    let records = load_qa(qa)?;
    let engine = Engine::open(store, config.clone())?;
    let gateway = Gateway::from_config(config.gateway)?;
    let (scored, report) = run_eval(&engine, &gateway, &records, judge)?;
    gateway.flush()?;
    if let Some(path) = records_path {
        let mut out = String::new();
        for r in &scored {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        fs::write(path, out).with_context(|| path.display().to_string())?;
    }
    let report_json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = report_path {
        fs::write(path, format!("{report_json}\n")).with_context(|| path.display().to_string())?;
    }
    if json {
        println!("{report_json}");
    } else {
        print!("{}", report.to_table());
        if judge {
            println!("{:<12}{:>10}", "Judge tok.", report.judge_tokens);
        }
    }
    Ok(())
}

fn cmd_inspect(store: &Path, common: &Common, vertex: Option<&str>, json: bool) -> Result<()> {
    require_store(store)?;
    let config = common.config()?;
    let engine = Engine::open(store, config)?;
    let graph = engine.graph();
    if let Some(key) = vertex {
        let v = graph.vertex(key).ok_or_else(|| Error::NotFound(key.to_string()))?;
        let containing: Vec<&String> = graph.backward_neighbors(key)?.collect();
        let value = serde_json::json!({ "vertex": v, "contained_in": containing });
        println!("{}", serde_json::to_string_pretty(&value)?);
        return Ok(());
    }
    graph.validate_complete()?;
    let layers = graph.layer_counts();
    if json {
        let value = serde_json::json!({
            "layers": layers,
            "chunks": graph.chunk_count(),
            "fr_edges": graph.fr_edges().count(),
            "lr_edges": graph.lr_edges().count(),
            "hr_edges": graph.hr_edges().count(),
            "embedding_dim": engine.df().table().dim,
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
        return Ok(());
    }
    print!("{}", stats_table(layers, graph.chunk_count(), None));
    println!("{:<24}{:>10}", "FR edges", graph.fr_edges().count());
    println!("{:<24}{:>10}", "LR edges", graph.lr_edges().count());
    println!("{:<24}{:>10}", "HR edges", graph.hr_edges().count());
    println!("{:<24}{:>10}", "Embedding dim", engine.df().table().dim);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Index { corpus, common, store, json } => cmd_index(&corpus, &common, &store, json),
        Command::Query {
            store,
            question,
            common,
            no_diffusion,
            dump_context,
            trace_diffusion,
            trace,
            answer_mode,
        } => cmd_query(
            &store,
            &question,
            &common,
            no_diffusion,
            dump_context.as_deref(),
            trace_diffusion.as_deref(),
            trace.as_deref(),
            answer_mode,
        ),
        Command::Eval { store, qa, common, judge, report, records, json } => {
            cmd_eval(&store, &qa, &common, judge, report.as_deref(), records.as_deref(), json)
        }
        Command::Inspect { store, common, vertex, json } => cmd_inspect(&store, &common, vertex.as_deref(), json),
    }
}

/// 2 for a missing input, 3 for a gateway failure, 1 for anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NotFound(_)) => 2,
        Some(e) if e.is_gateway() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
