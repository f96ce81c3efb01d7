use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> TokenUsage {
        TokenUsage { prompt_tokens, completion_tokens }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
        }
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> TokenUsage {
        iter.fold(TokenUsage::default(), |a, b| a + b)
    }
}

/// Token usage per label (one label per query, judge call, build, ...)
/// with a running total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenLedger {
    entries: BTreeMap<String, TokenUsage>,
    totals: TokenUsage,
    calls: u64,
}

impl TokenLedger {
    pub fn record(&mut self, label: &str, usage: TokenUsage) {
        *self.entries.entry(label.to_string()).or_default() += usage;
        self.totals += usage;
        self.calls += 1;
    }

    pub fn totals(&self) -> TokenUsage {
        self.totals
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn entry(&self, label: &str) -> TokenUsage {
        self.entries.get(label).copied().unwrap_or_default()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, TokenUsage)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Sum over entries whose label starts with `prefix`.
    pub fn sum_prefixed(&self, prefix: &str) -> TokenUsage {
        self.entries
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| *v)
            .sum()
    }
}
