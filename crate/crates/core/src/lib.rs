//! Core logic for document-grounded information-seeking evaluation.
//!
//! An episode hides a document's passages behind thresholded embedding
//! retrieval. An agent issues natural-language queries, observes which
//! passages match, and accumulates them monotonically; the terminal reward
//! is the fraction of goal passages recovered. Around that loop this crate
//! provides:
//!
//! - [`corpus`]: parsing, quality filtering, and scoring of passage-structured
//!   documents.
//! - [`retrieval`]: embedding vectors, cosine similarity, and the thresholded
//!   observation function over a per-document passage index.
//! - [`environment`]: the episode state machine (monotone retrieved set,
//!   step budget, blocked steps, discounted scores).
//! - [`belief`]: prompt-ready renderings of exploration state (raw trajectory,
//!   deduplicated, oracle) and the query/estimation prompt templates.
//! - [`agents`]: query-generating policies and output parsing.
//! - [`calibration`]: synthetic belief pools, split-conformal calibration of
//!   completeness estimates, and the calibrated stopping rule.
//! - [`protocol`]: the end-to-end evaluation loop, query-diversity metric,
//!   and run aggregation.
//!
//! The crate is `no_std` (with `alloc`): everything here is pure computation.
//! File formats, network providers, caching, and the CLI live in the
//! companion `infoseek-harness` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agents;
pub mod belief;
pub mod calibration;
pub mod corpus;
pub mod environment;
mod math;
pub mod protocol;
pub mod retrieval;

pub use agents::{Agent, AgentConfig, QueryBatch, TokenUsage};
pub use belief::{BeliefKind, BeliefText, PromptPair};
pub use calibration::{
    CalibrationModel, CompletenessEstimate, CompletenessEstimator, SyntheticBelief,
};
pub use corpus::{Document, FilterProfile, Passage, QualityReport, SourceRecord};
pub use environment::{EpisodeConfig, EpisodeState, StepRecord};
pub use protocol::{EpisodeReport, RunReport};
pub use retrieval::{Embedder, EmbeddingVector, PassageIndex, RetrievalHit};
