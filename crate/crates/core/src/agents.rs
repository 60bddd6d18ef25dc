//! Query-generating policies and model-output parsing.
//!
//! The [`Agent`] trait is the policy boundary: the evaluation loop hands an
//! agent the rendered prompt and expects back a [`QueryBatch`]. Two
//! deterministic scripted agents live here for offline runs and oracles
//! ([`VerbatimAgent`], [`RandomAgent`]); the remote chat adapter in the
//! harness crate implements the same trait over the wire and reuses the
//! parsers below for structured and free-form model output.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::PromptPair;
use crate::corpus::Document;

/// Provider-reported token counts; absent fields stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub reasoning_tokens: u64,
}

impl core::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
        self.reasoning_tokens += rhs.reasoning_tokens;
    }
}

/// One step's worth of generated queries. A blocked batch (upstream content
/// filter) carries no queries but still consumes the step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryBatch {
    pub queries: Vec<String>,
    pub raw_model_output: String,
    pub blocked: bool,
    pub usage: TokenUsage,
}

impl QueryBatch {
    pub fn from_queries(queries: Vec<String>) -> Self {
        QueryBatch {
            queries,
            raw_model_output: String::new(),
            blocked: false,
            usage: TokenUsage::default(),
        }
    }

    /// Batch for a content-filter block: zero queries, step still consumed.
    pub fn blocked(raw_model_output: String) -> Self {
        QueryBatch {
            queries: Vec::new(),
            raw_model_output,
            blocked: true,
            usage: TokenUsage::default(),
        }
    }

    pub fn reasoning_token_count(&self) -> u64 {
        self.usage.reasoning_tokens
    }
}

/// Remote chat-agent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Request a JSON-schema response format; when false, queries are parsed
    /// from free-form text instead.
    pub structured_output: bool,
    /// Opaque provider knob, passed through verbatim when set.
    pub reasoning_effort: Option<String>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            endpoint_url: String::new(),
            model_name: String::new(),
            temperature: 0.7,
            max_output_tokens: 8192,
            structured_output: true,
            reasoning_effort: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("agent provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("could not parse any query from model output: {0}")]
    UnparseableOutput(String),
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
}

/// A query-generating policy.
pub trait Agent {
    /// Produce up to `num_queries` queries for the given prompt. Emitting
    /// more is tolerated (the environment truncates); emitting fewer, down
    /// to one, is fine. Content-filter blocks come back as a blocked batch,
    /// not an error.
    fn generate_queries(
        &mut self,
        prompt: &PromptPair,
        num_queries: usize,
    ) -> Result<QueryBatch, AgentError>;
}

/// Test oracle with privileged access to the document: step `t` emits the
/// bodies of the next `num_queries` not-yet-emitted passages verbatim, so
/// under the deterministic embedder every query retrieves exactly its own
/// passage. Wraps around once every body has been emitted.
#[derive(Debug, Clone)]
pub struct VerbatimAgent {
    bodies: Vec<String>,
    cursor: usize,
}

impl VerbatimAgent {
    pub fn new(doc: &Document) -> Self {
        VerbatimAgent {
            bodies: doc.passages.iter().map(|p| p.body.clone()).collect(),
            cursor: 0,
        }
    }
}

impl Agent for VerbatimAgent {
    fn generate_queries(
        &mut self,
        _prompt: &PromptPair,
        num_queries: usize,
    ) -> Result<QueryBatch, AgentError> {
        let mut queries = Vec::with_capacity(num_queries);
        for _ in 0..num_queries.max(1) {
            queries.push(self.bodies[self.cursor % self.bodies.len()].clone());
            self.cursor += 1;
        }
        Ok(QueryBatch::from_queries(queries))
    }
}

/// Baseline emitting seeded-random word strings; deterministic per seed.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn random_word(&mut self) -> String {
        let len = self.rng.gen_range(4..=8);
        (0..len)
            .map(|_| (b'a' + self.rng.gen_range(0..26u8)) as char)
            .collect()
    }
}

impl Agent for RandomAgent {
    fn generate_queries(
        &mut self,
        _prompt: &PromptPair,
        num_queries: usize,
    ) -> Result<QueryBatch, AgentError> {
        let mut queries = Vec::with_capacity(num_queries);
        for _ in 0..num_queries.max(1) {
            let words = self.rng.gen_range(3..=6);
            let query = (0..words)
                .map(|_| self.random_word())
                .collect::<Vec<_>>()
                .join(" ");
            queries.push(query);
        }
        Ok(QueryBatch::from_queries(queries))
    }
}

/// Locate the outermost JSON object in possibly fenced or chatty output.
pub(crate) fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

#[derive(Deserialize)]
struct StructuredQueries {
    queries: Vec<String>,
}

/// Parse a structured `{"queries": [...]}` reply. Empty strings are dropped;
/// zero surviving queries is an error.
pub fn parse_structured_queries(text: &str) -> Result<Vec<String>, AgentError> {
    let body = extract_json_object(text)
        .ok_or_else(|| AgentError::UnparseableOutput(text.to_string()))?;
    let parsed: StructuredQueries = serde_json::from_str(body)
        .map_err(|_| AgentError::UnparseableOutput(text.to_string()))?;
    let queries: Vec<String> = parsed
        .queries
        .into_iter()
        .map(|q| q.trim().to_string())
        .filter(|q| !q.is_empty())
        .collect();
    if queries.is_empty() {
        return Err(AgentError::UnparseableOutput(text.to_string()));
    }
    Ok(queries)
}

/// Drop `<think>...</think>` reasoning blocks from free-form output.
fn strip_reasoning_blocks(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("<think>") {
        out.push_str(&rest[..open]);
        match rest[open..].find("</think>") {
            Some(close) => rest = &rest[open + close + "</think>".len()..],
            None => return out, // unterminated block: drop the tail
        }
    }
    out.push_str(rest);
    out
}

fn strip_list_marker(line: &str) -> Option<&str> {
    let line = line.trim_start();
    // Numbered: "1. query" or "12) query".
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return Some(rest.trim_start());
        }
    }
    // Bulleted: "- query" or "* query".
    line.strip_prefix("- ")
        .or_else(|| line.strip_prefix("* "))
        .map(str::trim_start)
}

fn strip_quotes(text: &str) -> &str {
    let t = text.trim();
    if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') {
        &t[1..t.len() - 1]
    } else {
        t
    }
}

/// Fallback extractor for providers without structured output: reasoning
/// blocks are stripped, then numbered/bulleted lines are taken; failing
/// that, quoted strings; failing that, one query per non-empty line. Lines
/// under 3 characters are rejected throughout. May return an empty list —
/// the adapter turns that into an unparseable-output error.
pub fn parse_freeform_queries(text: &str) -> Vec<String> {
    let cleaned = strip_reasoning_blocks(text);

    let keep = |q: &str| q.chars().count() >= 3;

    let listed: Vec<String> = cleaned
        .lines()
        .filter_map(strip_list_marker)
        .map(strip_quotes)
        .filter(|q| keep(q))
        .map(str::to_string)
        .collect();
    if !listed.is_empty() {
        return listed;
    }

    let mut quoted = Vec::new();
    let mut rest = cleaned.as_str();
    while let Some(open) = rest.find('"') {
        let tail = &rest[open + 1..];
        match tail.find('"') {
            Some(close) => {
                let candidate = tail[..close].trim();
                if keep(candidate) {
                    quoted.push(candidate.to_string());
                }
                rest = &tail[close + 1..];
            }
            None => break,
        }
    }
    if !quoted.is_empty() {
        return quoted;
    }

    cleaned
        .lines()
        .map(str::trim)
        .filter(|q| keep(q))
        .map(str::to_string)
        .collect()
}
