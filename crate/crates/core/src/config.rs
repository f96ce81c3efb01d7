//! Engine configuration, read from one TOML document. Every section and
//! field is optional and falls back to the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ann::AnnParams;
use crate::context::{AnswerMode, WindowParams};
use crate::df_index::{quotas, QuotaParams};
use crate::diffusion::DiffusionParams;
use crate::error::{Error, Result};
use crate::gateway::GatewayConfig;
use crate::lexical::Bm25Params;

pub const DEFAULT_CHUNK_TOKENS: usize = 780;
pub const EXPLANATORY_CHUNK_TOKENS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    /// Unset means 780, or 1024 for explanatory corpora.
    pub chunk_tokens: Option<usize>,
    /// How far one oversized sentence may run past `chunk_tokens` before it
    /// is cut at token boundaries.
    pub overflow_slack: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig { chunk_tokens: None, overflow_slack: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    /// Chunks extracted concurrently.
    pub parallelism: usize,
    /// Corrective re-asks per stage after an unparseable reply.
    pub retries: usize,
    /// Texts per embedding request.
    pub embed_batch: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig { parallelism: 4, retries: 2, embed_batch: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub rrf_k0: usize,
    /// Weight of the initial chunk scores against the diffused ones.
    pub chunk_weight: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { rrf_k0: 60, chunk_weight: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryConfig {
    pub retries: usize,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig { retries: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Long-form corpus: bigger chunks and the detailed answer prompt.
    pub explanatory: bool,
    pub chunking: ChunkingConfig,
    pub extraction: ExtractionConfig,
    pub quotas: QuotaParams,
    pub lexical: Bm25Params,
    pub ann: AnnParams,
    pub fusion: FusionConfig,
    pub diffusion: DiffusionParams,
    pub window: WindowParams,
    pub strategy: RetryConfig,
    pub judge: RetryConfig,
    pub gateway: GatewayConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Relative cassette paths resolve against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Config::from_toml_str(&text)?;
        if let (Some(cassette), Some(dir)) = (config.gateway.cassette.as_mut(), path.parent()) {
            if cassette.is_relative() {
                *cassette = dir.join(&*cassette);
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_tokens() == 0 {
            return Err(Error::Config("chunking.chunk_tokens must be positive".into()));
        }
        if self.extraction.parallelism == 0 || self.extraction.embed_batch == 0 {
            return Err(Error::Config("extraction.parallelism and embed_batch must be positive".into()));
        }
        quotas(1, self.quotas).map_err(|e| Error::Config(format!("quotas: {e}")))?;
        if self.lexical.k1.is_nan() || self.lexical.k1 < 0.0 || !(0.0..=1.0).contains(&self.lexical.b) {
            return Err(Error::Config("lexical needs k1 >= 0 and b in [0, 1]".into()));
        }
        if self.ann.m < 2 || self.ann.ef_search == 0 || self.ann.ef_construction == 0 {
            return Err(Error::Config("ann needs m >= 2 and positive ef values".into()));
        }
        if !(0.0..=1.0).contains(&self.fusion.chunk_weight) {
            return Err(Error::Config("fusion.chunk_weight must lie in [0, 1]".into()));
        }
        if self.window.unit_multiplier == 0 || self.window.chunk_multiplier == 0 {
            return Err(Error::Config("window multipliers must be positive".into()));
        }
        self.diffusion.validate()?;
        self.gateway.validate()
    }

    pub fn chunk_tokens(&self) -> usize {
        match self.chunking.chunk_tokens {
            Some(n) => n,
            None if self.explanatory => EXPLANATORY_CHUNK_TOKENS,
            None => DEFAULT_CHUNK_TOKENS,
        }
    }

    pub fn answer_mode(&self) -> AnswerMode {
        if self.explanatory {
            AnswerMode::Detailed
        } else {
            AnswerMode::Brief
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::GatewayMode;

    #[test]
    fn empty_document_gives_defaults() {
        let c = Config::from_toml_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.chunk_tokens(), 780);
        assert_eq!((c.quotas.base, c.quotas.global_min, c.quotas.global_max), (12, 5, 20));
        assert_eq!((c.window.unit_multiplier, c.window.chunk_multiplier), (5, 2));
        assert_eq!(c.fusion.chunk_weight, 0.5);
        assert_eq!(c.answer_mode(), AnswerMode::Brief);
    }

    #[test]
    fn explanatory_switches_chunks_and_prompt() {
        let c = Config::from_toml_str("explanatory = true").unwrap();
        assert_eq!(c.chunk_tokens(), 1024);
        assert_eq!(c.answer_mode(), AnswerMode::Detailed);
        let c = Config::from_toml_str("explanatory = true\n[chunking]\nchunk_tokens = 300").unwrap();
        assert_eq!(c.chunk_tokens(), 300);
    }

    #[test]
    fn sections_parse_and_round_trip() {
        let text = r#"
[quotas]
k_b = 8
k_min = 3
k_max = 10

[diffusion]
gamma = 0.4

[gateway]
mode = "replay"
cassette = "fixtures/run.jsonl"
"#;
        let c = Config::from_toml_str(text).unwrap();
        assert_eq!(c.quotas.base, 8);
        assert_eq!(c.diffusion.gamma, 0.4);
        assert_eq!(c.gateway.mode, GatewayMode::Replay);
        let again = Config::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_documents() {
        for bad in [
            "unknown = 1",
            "[quotas]\nbase = 3",
            "[quotas]\nk_min = 30",
            "[fusion]\nchunk_weight = 1.5",
            "[diffusion]\ntau_pair = 0.555",
            "[gateway]\nmode = \"replay\"",
            "[chunking]\nchunk_tokens = 0",
        ] {
            assert!(matches!(Config::from_toml_str(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn relative_cassette_resolves_next_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("igmirag.toml");
        std::fs::write(&path, "[gateway]\nmode = \"replay\"\ncassette = \"c.jsonl\"\n").unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!(c.gateway.cassette.unwrap(), dir.path().join("c.jsonl"));
    }
}
