//! Approximate tokenization shared by chunking, token accounting and BM25.
//!
//! A token is either a maximal run of alphanumeric characters or a single
//! punctuation/symbol character. Whitespace separates tokens and is never a
//! token itself. This is a monotone proxy for provider tokenizers and keeps
//! every count reproducible offline.

/// Byte spans `(start, end)` of each token in `text`.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    for (idx, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some(idx);
            }
            continue;
        }
        if let Some(start) = run_start.take() {
            spans.push((start, idx));
        }
        if !ch.is_whitespace() {
            spans.push((idx, idx + ch.len_utf8()));
        }
    }
    if let Some(start) = run_start {
        spans.push((start, text.len()));
    }
    spans
}

pub fn count_tokens(text: &str) -> usize {
    token_spans(text).len()
}

/// Lowercased alphanumeric terms, the vocabulary used by the lexical index.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}
