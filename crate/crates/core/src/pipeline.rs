//! The query engine: a loaded store plus the stages that turn a question
//! into an answer, and the batch evaluation loop built on it.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::context::{
    answer, assemble_from_graph, fuse_chunk_scores, select_chunks, select_units, window_quotas, AnswerMode,
    AnswerOutput, ContextWindow,
};
use crate::df_index::DfIndex;
use crate::diffusion::{diffuse, Diffusion};
use crate::error::{Error, Result};
use crate::eval::{judge_score, report, short_form_score, EvalRecord, EvalReport};
use crate::extraction::BuiltIndex;
use crate::gateway::{Gateway, TokenUsage};
use crate::hypergraph::Hypergraph;
use crate::lexical::LexicalIndex;
use crate::retrieval::{chunk_relevance, retrieve_anchors, Anchors};
use crate::scores::{ChunkScores, ScoreMap};
use crate::strategy::{parse_strategy, ParsedStrategy};

pub const GRAPH_EXTENSION: &str = "hhhg";
pub const INDEX_EXTENSION: &str = "dfidx";

/// The two files behind a store prefix: `<prefix>.hhhg` and `<prefix>.dfidx`.
pub fn store_paths(prefix: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let prefix = prefix.as_ref().as_os_str();
    let with = |ext: &str| {
        let mut p = prefix.to_owned();
        p.push(".");
        p.push(ext);
        PathBuf::from(p)
    };
    (with(GRAPH_EXTENSION), with(INDEX_EXTENSION))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueryOptions {
    /// Skip diffusion: the context holds the anchors and their chunks only.
    pub no_diffusion: bool,
    /// Overrides the mode the config picks.
    pub mode: Option<AnswerMode>,
}

/// Everything a query produced, filled stage by stage so a failed query
/// still shows how far it got.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryTrace {
    pub question: String,
    pub strategy: Option<ParsedStrategy>,
    pub anchors: Option<Anchors>,
    pub initial_chunks: Option<ChunkScores>,
    pub diffusion: Option<Diffusion>,
    pub units: Vec<(String, f64)>,
    pub chunks: Vec<(String, f64)>,
    pub window: Option<ContextWindow>,
    pub answer: Option<AnswerOutput>,
    pub tokens: TokenUsage,
}

impl QueryTrace {
    pub fn depth_used(&self) -> Option<usize> {
        self.strategy.as_ref().map(|s| s.strategy.depth())
    }
}

pub struct Engine {
    config: Config,
    graph: Hypergraph,
    df: DfIndex,
    lexical: LexicalIndex,
}

impl Engine {
    /// The lexical index is always rebuilt from the graph; quotas and the
    /// exact-search switch come from `config`.
    pub fn new(config: Config, graph: Hypergraph, df: DfIndex) -> Engine {
        let mut df = df.with_quotas(config.quotas);
        df.set_exact(config.ann.exact);
        let lexical = LexicalIndex::build(&graph, config.lexical);
        Engine { config, graph, df, lexical }
    }

    pub fn from_built(config: Config, built: BuiltIndex) -> Engine {
        Engine::new(config, built.graph, built.df)
    }

    pub fn open(prefix: impl AsRef<Path>, config: Config) -> Result<Engine> {
        let (graph_path, index_path) = store_paths(prefix);
        for p in [&graph_path, &index_path] {
            if !p.exists() {
                return Err(Error::NotFound(p.display().to_string()));
            }
        }
        let graph = Hypergraph::load(&graph_path)?;
        let df = DfIndex::load(&index_path)?;
        for key in graph.vertices().map(|v| &v.key) {
            if df.vector(key).is_none() {
                return Err(Error::CorruptStore(format!("vertex {key} has no embedding")));
            }
        }
        Ok(Engine::new(config, graph, df))
    }

    pub fn save(&self, prefix: impl AsRef<Path>) -> Result<()> {
        let (graph_path, index_path) = store_paths(prefix);
        self.graph.save(graph_path)?;
        self.df.save(index_path)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn graph(&self) -> &Hypergraph {
        &self.graph
    }

    pub fn df(&self) -> &DfIndex {
        &self.df
    }

    pub fn lexical(&self) -> &LexicalIndex {
        &self.lexical
    }

    /// Runs every stage for `question`. Model calls are booked in the ledger
    /// under `<label>/strategy`, `<label>/embed` and `<label>/answer`; the
    /// token count in the trace sums the `<label>/` entries, so labels should
    /// be unique per gateway.
    pub fn query(&self, question: &str, gateway: &Gateway, label: &str, opts: QueryOptions) -> Result<QueryTrace> {
        let mut trace = QueryTrace::default();
        self.query_into(question, gateway, label, opts, &mut trace)?;
        Ok(trace)
    }

    /// Like [`Engine::query`], writing into `trace` as it goes; on error the
    /// trace keeps the stages that finished.
    pub fn query_into(
        &self,
        question: &str,
        gateway: &Gateway,
        label: &str,
        opts: QueryOptions,
        trace: &mut QueryTrace,
    ) -> Result<()> {
        let result = self.run_stages(question, gateway, label, opts, trace);
        trace.tokens = gateway.ledger().sum_prefixed(&format!("{label}/"));
        result
    }

    fn run_stages(
        &self,
        question: &str,
        gateway: &Gateway,
        label: &str,
        opts: QueryOptions,
        trace: &mut QueryTrace,
    ) -> Result<()> {
        trace.question = question.to_string();
        let parsed = parse_strategy(question, gateway, &format!("{label}/strategy"), self.config.strategy.retries)?;
        let strategy = parsed.strategy.clone();
        trace.strategy = Some(parsed);

        let anchors = retrieve_anchors(
            &strategy,
            &self.df,
            &self.lexical,
            gateway,
            &format!("{label}/embed"),
            self.config.fusion.rrf_k0,
        )?;
        let initial = chunk_relevance(&anchors.anchors, &self.graph)?;
        trace.initial_chunks = Some(initial.clone());

        let extended = if opts.no_diffusion || anchors.anchors.is_empty() {
            None
        } else {
            let d = diffuse(
                &anchors.anchors,
                strategy.target_layer,
                strategy.depth(),
                &self.graph,
                self.config.diffusion,
            )?;
            let scores = d.scores.clone();
            trace.diffusion = Some(d);
            Some(scores)
        };

        let budget = window_quotas(strategy.depth(), self.config.window)?;
        let (units, chunk_scores) = match &extended {
            Some(scores) => (
                select_units(&anchors.anchors, scores, budget.top_ku),
                fuse_chunk_scores(&initial, scores, &self.graph, self.config.fusion.chunk_weight)?,
            ),
            None => (select_units(&anchors.anchors, &ScoreMap::new(), budget.top_ku), initial),
        };
        trace.anchors = Some(anchors);
        trace.units = units;
        trace.chunks = select_chunks(&chunk_scores, budget.top_kc);
        let window = assemble_from_graph(&self.graph, &trace.units, &trace.chunks, budget)?;
        let mode = opts.mode.unwrap_or_else(|| self.config.answer_mode());
        let out = answer(question, &window, gateway, &format!("{label}/answer"), mode);
        trace.window = Some(window);
        trace.answer = Some(out?);
        Ok(())
    }
}

/// One line of a QA file. Either `answers` or a single `answer` is accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub question: String,
    #[serde(default)]
    pub answers: Vec<String>,
    #[serde(default, skip_serializing)]
    pub answer: Option<String>,
}

impl QaRecord {
    pub fn golds(&self) -> Vec<String> {
        let mut golds = self.answers.clone();
        if let Some(a) = &self.answer {
            if !golds.contains(a) {
                golds.push(a.clone());
            }
        }
        golds
    }
}

pub fn load_qa(path: impl AsRef<Path>) -> Result<Vec<QaRecord>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let record: QaRecord = serde_json::from_str(line)
            .map_err(|e| Error::InvalidArgument(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if record.golds().is_empty() {
            return Err(Error::InvalidArgument(format!("{}:{}: no answers", path.display(), i + 1)));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn query_label(i: usize) -> String {
    format!("query:{i}")
}

pub fn judge_label(i: usize) -> String {
    format!("judge:{i}")
}

fn eval_one(engine: &Engine, gateway: &Gateway, i: usize, qa: &QaRecord, judged: bool) -> EvalRecord {
    let golds = qa.golds();
    let mut trace = QueryTrace::default();
    let outcome = engine.query_into(&qa.question, gateway, &query_label(i), QueryOptions::default(), &mut trace);
    let predicted = trace.answer.as_ref().map(|a| a.answer.clone()).unwrap_or_default();
    let mut record = EvalRecord {
        question: qa.question.clone(),
        answers: golds.clone(),
        predicted: predicted.clone(),
        em: 0.0,
        f1: 0.0,
        tokens: trace.tokens.total(),
        depth_used: trace.depth_used().unwrap_or(0),
        judge: None,
        failure: None,
    };
    if let Err(e) = outcome {
        log::warn!("query {i} failed: {e}");
        record.failure = Some(format!("query: {e}"));
        return record;
    }
    if judged {
        let gold = golds.join("; ");
        match judge_score(&qa.question, &gold, &predicted, gateway, &judge_label(i), engine.config.judge.retries) {
            Ok(s) => {
                record.em = s.em;
                record.f1 = s.f1;
                record.judge = Some(s);
            }
            Err(e) => {
                log::warn!("judging query {i} failed: {e}");
                record.failure = Some(format!("judge: {e}"));
            }
        }
    } else {
        let s = short_form_score(&predicted, &golds).expect("golds checked on load");
        record.em = s.em;
        record.f1 = s.f1;
    }
    record
}

/// Scores every QA record. Queries run in parallel up to the extraction
/// width; records come back in file order and failures are counted, not
/// raised.
pub fn run_eval(engine: &Engine, gateway: &Gateway, qa: &[QaRecord], judged: bool) -> Result<(Vec<EvalRecord>, EvalReport)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(engine.config.extraction.parallelism)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let records: Vec<EvalRecord> = pool.install(|| {
        qa.par_iter()
            .enumerate()
            .map(|(i, r)| eval_one(engine, gateway, i, r, judged))
            .collect()
    });
    let judge_tokens = gateway.ledger().sum_prefixed("judge:").total();
    let report = report(&records, judged, judge_tokens);
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_path_pair() {
        let (g, i) = store_paths("out/bacon");
        assert_eq!(g, PathBuf::from("out/bacon.hhhg"));
        assert_eq!(i, PathBuf::from("out/bacon.dfidx"));
    }

    #[test]
    fn qa_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("qa.jsonl");
        std::fs::write(&p, "{\"question\":\"q\",\"answers\":[\"a\",\"b\"]}\n{\"question\":\"r\",\"answer\":\"c\"}\n").unwrap();
        let qa = load_qa(&p).unwrap();
        assert_eq!(qa[0].golds(), vec!["a", "b"]);
        assert_eq!(qa[1].golds(), vec!["c"]);
        std::fs::write(&p, "{\"question\":\"q\"}\n").unwrap();
        assert!(load_qa(&p).is_err());
        assert!(matches!(load_qa(dir.path().join("none")), Err(Error::NotFound(_))));
    }

    #[test]
    fn missing_store() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Engine::open(dir.path().join("x"), Config::default()), Err(Error::NotFound(_))));
    }
}
