//! Everything around the core evaluation logic that touches the outside
//! world: corpus and belief-pool files, the on-disk embedding cache, remote
//! embedding and chat providers with retry/backoff, the parallel episode
//! runner with trajectory logging, report emission, and the `infoseek` CLI.

pub mod cache;
pub mod chat;
pub mod cli;
pub mod config;
pub mod corpus_io;
pub mod embedder;
pub mod http;
pub mod pool_io;
pub mod reports;
pub mod runner;

pub use cache::CachingEmbedder;
pub use chat::{ChatClient, ChatProviderConfig, LlmAgent, LlmEstimator};
pub use corpus_io::{load_corpus, store_corpus, LoadedCorpus};
pub use embedder::{RemoteEmbedder, RemoteEmbedderConfig};
pub use runner::{run_plan, AgentSpec, EstimatorSpec, RunOutcome, RunPlan};
