//! Prompt-ready belief renderings and the prompt templates built on them.
//!
//! Three renderings of an episode state ship with the harness:
//!
//! - **raw trajectory** — the verbatim query/observation history, one
//!   `<query_result>` block per executed query in chronological order, with
//!   `<no_results/>` marking empty observations;
//! - **deduplicated** — each retrieved passage exactly once, in document
//!   order, wrapped in `<passage section="...">` tags;
//! - **oracle** — the full article skeleton with found passages in place,
//!   unfound slots as `<missing id="pN"/>`, and sections hidden as
//!   `name="???"` until one of their passages is found. A privileged
//!   upper-bound representation.
//!
//! Tags are emitted as literal text; the only escaping is `&` and `<` inside
//! passage bodies, since the output is consumed by language models rather
//! than XML parsers. Renderings are pure functions of (state, document) and
//! the same state always renders to identical bytes.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::environment::{EpisodeConfig, EpisodeState};

/// The three shipped belief representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefKind {
    RawTrajectory,
    Deduplicated,
    Oracle,
}

impl BeliefKind {
    pub const ALL: [BeliefKind; 3] = [
        BeliefKind::RawTrajectory,
        BeliefKind::Deduplicated,
        BeliefKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BeliefKind::RawTrajectory => "raw_trajectory",
            BeliefKind::Deduplicated => "deduplicated",
            BeliefKind::Oracle => "oracle",
        }
    }

    /// Parse a kind name as used in configs and CLIs.
    pub fn parse(name: &str) -> Result<Self, BeliefError> {
        match name {
            "raw_trajectory" | "raw" => Ok(BeliefKind::RawTrajectory),
            "deduplicated" | "dedup" => Ok(BeliefKind::Deduplicated),
            "oracle" => Ok(BeliefKind::Oracle),
            other => Err(BeliefError::UnknownKind(String::from(other))),
        }
    }
}

impl core::fmt::Display for BeliefKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// A rendered, prompt-ready belief.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefText {
    pub kind: BeliefKind,
    pub rendered: String,
    /// Passage tags visible in the rendering (dedup/oracle: unique retrieved
    /// passages; raw: every shown hit, duplicates included).
    pub passage_count_visible: usize,
    /// Step the belief was rendered at; step 0 selects the shared initial
    /// query prompt.
    pub step_index: usize,
}

/// A (system, user) prompt pair ready for a chat endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BeliefError {
    #[error("unknown belief kind: {0}")]
    UnknownKind(String),
    #[error("expected a {expected} belief, got {got}")]
    WrongBeliefKind {
        expected: BeliefKind,
        got: BeliefKind,
    },
    #[error("state belongs to document {state_doc}, not {doc}")]
    StateMismatch { state_doc: String, doc: String },
}

/// Escape `&` and `<` in passage bodies.
fn escape_body(body: &str) -> String {
    let mut out = String::with_capacity(body.len());
    for ch in body.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            other => out.push(other),
        }
    }
    out
}

/// Render the episode state under the requested representation.
pub fn render_belief(
    state: &EpisodeState,
    doc: &Document,
    kind: BeliefKind,
) -> Result<BeliefText, BeliefError> {
    if state.doc_id() != doc.doc_id || state.goal_count() != doc.goal_count() {
        return Err(BeliefError::StateMismatch {
            state_doc: String::from(state.doc_id()),
            doc: doc.doc_id.clone(),
        });
    }
    let (rendered, visible) = match kind {
        BeliefKind::Deduplicated => render_deduplicated(doc, &state.retrieved_ids()),
        BeliefKind::Oracle => render_oracle(doc, state),
        BeliefKind::RawTrajectory => render_raw(doc, state),
    };
    Ok(BeliefText {
        kind,
        rendered,
        passage_count_visible: visible,
        step_index: state.step_index(),
    })
}

/// Deduplicated rendering from an explicit retrieved set (document order),
/// shared with synthetic belief generation.
pub(crate) fn render_deduplicated(doc: &Document, retrieved_ids: &[usize]) -> (String, usize) {
    let mut out = String::from("<belief>\n");
    let mut visible = 0;
    for passage in &doc.passages {
        if !retrieved_ids.contains(&passage.passage_id) {
            continue;
        }
        visible += 1;
        out.push_str("  <passage section=\"");
        out.push_str(&passage.section_name);
        out.push_str("\">\n    ");
        out.push_str(&escape_body(&passage.body));
        out.push_str("\n  </passage>\n");
    }
    out.push_str("</belief>");
    (out, visible)
}

fn render_oracle(doc: &Document, state: &EpisodeState) -> (String, usize) {
    // Contiguous runs of one section name form one <section> block, so the
    // document order of the skeleton mirrors the article exactly.
    let mut out = String::new();
    let mut visible = 0;
    let mut i = 0;
    while i < doc.passages.len() {
        let section_name = &doc.passages[i].section_name;
        let mut j = i;
        while j < doc.passages.len() && doc.passages[j].section_name == *section_name {
            j += 1;
        }
        let run = &doc.passages[i..j];
        let revealed = run.iter().any(|p| state.is_retrieved(p.passage_id));
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("<section name=\"");
        out.push_str(if revealed { section_name } else { "???" });
        out.push_str("\">\n");
        for passage in run {
            if state.is_retrieved(passage.passage_id) {
                visible += 1;
                out.push_str("  <passage id=\"p");
                out.push_str(&itoa(passage.passage_id));
                out.push_str("\">\n    ");
                out.push_str(&escape_body(&passage.body));
                out.push_str("\n  </passage>\n");
            } else {
                out.push_str("  <missing id=\"p");
                out.push_str(&itoa(passage.passage_id));
                out.push_str("\"/>\n");
            }
        }
        out.push_str("</section>");
        i = j;
    }
    (out, visible)
}

fn render_raw(doc: &Document, state: &EpisodeState) -> (String, usize) {
    let mut out = String::from("<belief>\n");
    let mut visible = 0;
    for record in state.trajectory() {
        for (query, hits) in record.queries.iter().zip(&record.per_query_hits) {
            out.push_str("  <query_result>\n    <query>");
            out.push_str(query);
            out.push_str("</query>\n");
            if hits.is_empty() {
                out.push_str("    <no_results/>\n");
            } else {
                out.push_str("    <passages>\n");
                for hit in hits {
                    let passage = &doc.passages[hit.passage_id];
                    visible += 1;
                    out.push_str("      <passage section=\"");
                    out.push_str(&passage.section_name);
                    out.push_str("\">\n        ");
                    out.push_str(&escape_body(&passage.body));
                    out.push_str("\n      </passage>\n");
                }
                out.push_str("    </passages>\n");
            }
            out.push_str("  </query_result>\n");
        }
    }
    out.push_str("</belief>");
    (out, visible)
}

fn itoa(n: usize) -> String {
    alloc::format!("{n}")
}

/// Recover the retrieved passage ids from an oracle rendering (the inverse
/// of the found-slot markup).
pub fn oracle_retrieved_ids(rendered: &str) -> Vec<usize> {
    let mut ids = Vec::new();
    let marker = "<passage id=\"p";
    let mut rest = rendered;
    while let Some(pos) = rest.find(marker) {
        rest = &rest[pos + marker.len()..];
        let end = rest.find('"').unwrap_or(0);
        if let Ok(id) = rest[..end].parse::<usize>() {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    ids
}

// ── Prompt templates ─────────────────────────────────────────────────────

/// System prompt shared by all query-generation prompts.
pub const QUERY_SYSTEM_PROMPT: &str = "You are an information-seeking agent that generates precise search queries.\n\
Do not include action words like \"search\", \"find\", \"retrieve\", \"look up\",\n\
or XML tags and structural metadata in queries.";

/// System prompt for completeness estimation.
pub const ESTIMATOR_SYSTEM_PROMPT: &str = "You are a careful evaluator of information completeness.\n\
Respond with a single JSON object and no additional text.";

const INITIAL_TEMPLATE: &str = r#"<role>
  Your goal is to retrieve relevant information to complete
  an article about "{topic}".
</role>

<context>
  <topic>{topic}</topic>
  <abstract>{abstract}</abstract>
</context>

<instruction>
  Analyze what information is missing or logically incomplete.
  Generate up to {num_queries} natural language search queries
  to retrieve the missing information.
</instruction>"#;

const DEDUP_TEMPLATE: &str = r#"<role>
  Your goal is to retrieve relevant information to complete
  an article about "{topic}".
</role>

<context>
  <topic>{topic}</topic>
  <abstract>{abstract}</abstract>
</context>

{belief}

<instruction>
  The found section shows retrieved passages.

  Format:
  - <passage section="...">text</passage> shows a retrieved
    passage with its section name

  Analyze what information is missing or logically incomplete.
  Generate up to {num_queries} natural language search queries
  to retrieve the missing information.
</instruction>"#;

const ORACLE_TEMPLATE: &str = r#"<role>
  You have access to the article structure. Your goal is to retrieve
  all {total_passages} passages to complete an article about
  "{topic}".
</role>

<context>
  <topic>{topic}</topic>
  <abstract>{abstract}</abstract>
</context>

<article>
{article_skeleton}
</article>

<instruction>
  You have access to the article structure showing all sections
  and passage positions.

  Structure format:
  - <section name="SectionName"> shows a revealed section
  - <section name="???"> shows a hidden section (no passages found)
  - <passage id="pN">text</passage> shows a found passage
  - <missing id="pN"/> shows a passage you still need to find

  Analyze what information is missing or logically incomplete.
  Generate up to {num_queries} natural language search queries
  to retrieve the missing information.
</instruction>"#;

const RAW_TEMPLATE: &str = r#"<role>
  Your goal is to retrieve relevant information to complete
  an article about "{topic}".
</role>

<context>
  <topic>{topic}</topic>
  <abstract>{abstract}</abstract>
</context>

{belief}

<instruction>
  The found section shows your search history as query-result pairs.

  Format:
  - <query_result> contains a query and its results
  - <query>...</query> shows a search query you made
  - <passages> contains the retrieved passages
  - <passage section="...">text</passage> shows a retrieved passage
  - <no_results/> indicates a query found no results

  Analyze what information is missing or logically incomplete.
  Generate up to {num_queries} natural language search queries
  to retrieve the missing information.
</instruction>"#;

const ESTIMATE_TEMPLATE: &str = r#"<role>
  You are evaluating information retrieved for a target document
  about "{topic}".
</role>

<context>
  <topic>{topic}</topic>
  <abstract>{abstract}</abstract>
</context>

{belief}

<instruction>
  You have collected {num_collected} passages so far from the
  target document.

  Estimate the completeness fraction of the current collection between
  0 and 1, where:
  - 0 = you have found essentially none of the document's passages
  - 0.5 = you have found about half of the document's passages
  - 1 = you have found all or almost all of the document's passages

  Return a JSON object with:
  - predicted_completeness: your best estimate of the completeness
    fraction as a number from 0 to 1

  predicted_completeness should be a direct estimate of the
  completeness fraction, not a vague score.
  Use the full range from 0 to 1 when appropriate.
  Base your estimate on the passages collected so far, the abstract,
  and any obvious missing coverage.
</instruction>"#;

/// Fill `{name}` placeholders in a single left-to-right pass over the
/// template; substituted values are never re-scanned, so placeholder-like
/// text inside document content cannot inject.
fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        if let Some(close) = after.find('}') {
            let name = &after[..close];
            for (key, value) in vars {
                if *key == name {
                    out.push_str(&rest[..open]);
                    out.push_str(value);
                    rest = &after[close + 1..];
                    continue 'outer;
                }
            }
        }
        // Not a known placeholder: emit the brace literally and move on.
        out.push_str(&rest[..=open]);
        rest = after;
    }
    out.push_str(rest);
    out
}

fn indent_lines(text: &str, prefix: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(prefix);
        out.push_str(line);
    }
    out
}

/// Build the query-generation prompt for a rendered belief. At step 0 every
/// representation shares the same initial prompt (no belief block); from
/// step 1 onward the representation-specific follow-up template is used.
pub fn render_query_prompt(belief: &BeliefText, doc: &Document, cfg: &EpisodeConfig) -> PromptPair {
    let num_queries = itoa(cfg.queries_per_step);
    let user = if belief.step_index == 0 {
        fill(
            INITIAL_TEMPLATE,
            &[
                ("topic", doc.topic.as_str()),
                ("abstract", doc.abstract_text.as_str()),
                ("num_queries", num_queries.as_str()),
            ],
        )
    } else {
        match belief.kind {
            BeliefKind::Deduplicated => fill(
                DEDUP_TEMPLATE,
                &[
                    ("topic", doc.topic.as_str()),
                    ("abstract", doc.abstract_text.as_str()),
                    ("belief", belief.rendered.as_str()),
                    ("num_queries", num_queries.as_str()),
                ],
            ),
            BeliefKind::RawTrajectory => fill(
                RAW_TEMPLATE,
                &[
                    ("topic", doc.topic.as_str()),
                    ("abstract", doc.abstract_text.as_str()),
                    ("belief", belief.rendered.as_str()),
                    ("num_queries", num_queries.as_str()),
                ],
            ),
            BeliefKind::Oracle => {
                let skeleton = indent_lines(&belief.rendered, "  ");
                let total = itoa(doc.goal_count());
                fill(
                    ORACLE_TEMPLATE,
                    &[
                        ("total_passages", total.as_str()),
                        ("topic", doc.topic.as_str()),
                        ("abstract", doc.abstract_text.as_str()),
                        ("article_skeleton", skeleton.as_str()),
                        ("num_queries", num_queries.as_str()),
                    ],
                )
            }
        }
    };
    PromptPair {
        system: String::from(QUERY_SYSTEM_PROMPT),
        user,
    }
}

/// Build the completeness-estimation prompt. The estimator protocol always
/// consumes the deduplicated rendering; any other kind is an error.
pub fn render_completeness_prompt(
    belief: &BeliefText,
    doc: &Document,
) -> Result<PromptPair, BeliefError> {
    if belief.kind != BeliefKind::Deduplicated {
        return Err(BeliefError::WrongBeliefKind {
            expected: BeliefKind::Deduplicated,
            got: belief.kind,
        });
    }
    let num_collected = itoa(belief.passage_count_visible);
    let user = fill(
        ESTIMATE_TEMPLATE,
        &[
            ("topic", doc.topic.as_str()),
            ("abstract", doc.abstract_text.as_str()),
            ("belief", belief.rendered.as_str()),
            ("num_collected", num_collected.as_str()),
        ],
    );
    Ok(PromptPair {
        system: String::from(ESTIMATOR_SYSTEM_PROMPT),
        user,
    })
}
