//! Retrieval-augmented generation over a hierarchical heterogeneous
//! hypergraph.
//!
//! Indexing turns a corpus into chunks, asks a model to extract entities,
//! pairwise relations and multi-entity associations from each chunk, and
//! stores them as three vertex layers of a [`Hypergraph`]. Querying parses
//! the question into a [`Strategy`], recalls anchor vertices through BM25
//! and a dual-focus vector index fused by reciprocal rank, spreads relevance
//! along the hypergraph with a bidirectional diffusion, and packs a context
//! window whose size follows the estimated semantic depth of the question.

pub mod ann;
pub mod config;
pub mod context;
pub mod df_index;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod extraction;
pub mod gateway;
pub mod hypergraph;
pub mod lexical;
pub mod pipeline;
pub mod prompts;
pub mod retrieval;
pub mod scores;
pub mod strategy;
pub mod text;

pub use error::{Error, Result};
pub use gateway::{ChatMessage, Gateway, GatewayConfig, GatewayMode, TokenLedger, TokenUsage};
pub use hypergraph::{canonical_key, Chunk, Direction, Hypergraph, Layer, Vertex};

pub use config::Config;
pub use context::{AnswerMode, ContextWindow, WindowBudget};
pub use df_index::{quotas, DfIndex, QuotaParams, Quotas};
pub use diffusion::{diffuse, Diffusion, DiffusionParams, ExitReason};
pub use eval::{short_form_score, EvalRecord, EvalReport};
pub use extraction::{build_index, load_corpus, BuildStats, BuiltIndex, Document};
pub use lexical::LexicalIndex;
pub use pipeline::{Engine, QueryOptions, QueryTrace};
pub use retrieval::rrf_fuse;
pub use scores::{ChunkScores, ScoreMap};
pub use strategy::{ParsedStrategy, Strategy};
