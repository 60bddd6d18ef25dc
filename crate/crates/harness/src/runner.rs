//! Parallel episode execution.
//!
//! A run is the cross product of seeds and corpus documents. Episodes run on
//! a bounded worker pool; results are collected in (seed, document) input
//! order regardless of completion order, so aggregation is reproducible
//! under concurrency. Shared state is read-only (corpus, indexes, frozen
//! calibration) or internally synchronized (the embedding cache); each
//! episode owns its agent and estimator.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use infoseek_core::agents::{Agent, AgentError, QueryBatch, RandomAgent, TokenUsage, VerbatimAgent};
use infoseek_core::belief::{BeliefKind, PromptPair};
use infoseek_core::calibration::{
    CalibrationModel, CompletenessEstimate, CompletenessEstimator, ConstantEstimator,
    NoisyEstimator, PerfectEstimator,
};
use infoseek_core::corpus::Document;
use infoseek_core::environment::EpisodeConfig;
use infoseek_core::protocol::{aggregate_run, run_episode, EpisodeReport, RunReport, StopRule};
use infoseek_core::retrieval::{build_index, Embedder, PassageIndex, RetrievalError, RetrievalHit};

use crate::chat::{ChatClient, LlmAgent, LlmEstimator};

/// Which query policy a run uses.
#[derive(Clone)]
pub enum AgentSpec {
    /// Privileged scripted oracle: emits passage bodies verbatim.
    Verbatim,
    /// Seeded random word strings.
    Random { seed: u64 },
    /// Remote chat model.
    Llm(ChatClient),
}

impl AgentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AgentSpec::Verbatim => "verbatim",
            AgentSpec::Random { .. } => "random",
            AgentSpec::Llm(_) => "llm",
        }
    }

    fn build(&self, doc: &Document, episode_seed: u64) -> Box<dyn Agent> {
        match self {
            AgentSpec::Verbatim => Box::new(VerbatimAgent::new(doc)),
            AgentSpec::Random { seed } => {
                Box::new(RandomAgent::new(mix_seed(*seed ^ episode_seed, "agent")))
            }
            AgentSpec::Llm(client) => Box::new(LlmAgent::new(client.clone())),
        }
    }
}

/// Which completeness estimator a run uses.
#[derive(Clone)]
pub enum EstimatorSpec {
    Perfect,
    Noisy { half_width: f64, seed: u64 },
    Constant { value: f64 },
    Llm(ChatClient),
}

impl EstimatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::Perfect => "perfect",
            EstimatorSpec::Noisy { .. } => "noisy",
            EstimatorSpec::Constant { .. } => "constant",
            EstimatorSpec::Llm(_) => "llm",
        }
    }

    pub fn build(&self, episode_seed: u64) -> Box<dyn CompletenessEstimator> {
        match self {
            EstimatorSpec::Perfect => Box::new(PerfectEstimator),
            EstimatorSpec::Noisy { half_width, seed } => Box::new(NoisyEstimator::new(
                *half_width,
                mix_seed(*seed ^ episode_seed, "estimator"),
            )),
            EstimatorSpec::Constant { value } => Box::new(ConstantEstimator { value: *value }),
            EstimatorSpec::Llm(client) => Box::new(LlmEstimator::new(client.clone())),
        }
    }
}

/// Stable seed derivation: identical inputs give identical episode seeds on
/// every platform.
pub fn mix_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// One episode's worth of work, identified by (run seed, document).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub doc_id: String,
    pub seed: u64,
    pub error: String,
}

/// One trajectory-log line: everything observed at one step, including the
/// verbatim prompts for audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub doc_id: String,
    pub seed: u64,
    pub step: usize,
    pub blocked: bool,
    /// True on the synthetic final record emitted when the calibrated stop
    /// rule fires.
    pub stopped: bool,
    pub queries: Vec<String>,
    pub hits: Vec<Vec<RetrievalHit>>,
    pub newly_retrieved: Vec<usize>,
    pub truncated_queries: usize,
    pub estimate: Option<CompletenessEstimate>,
    pub prompt_system: String,
    pub prompt_user: String,
    pub raw_model_output: String,
    pub usage: TokenUsage,
    pub wall_ms: u64,
}

/// A full run description.
pub struct RunPlan<'a> {
    pub corpus: &'a [Document],
    pub episode: EpisodeConfig,
    pub belief: BeliefKind,
    pub seeds: Vec<u64>,
    pub agent: AgentSpec,
    pub estimator: Option<EstimatorSpec>,
    pub calibration: Option<CalibrationModel>,
    pub parallelism: usize,
    pub dispersion_multiplier: f64,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub episodes: Vec<EpisodeReport>,
    pub failures: Vec<EpisodeFailure>,
    pub trajectories: Vec<TrajectoryStep>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("run needs at least one seed")]
    NoSeeds,
    #[error("a calibration artifact was supplied without an estimator")]
    CalibrationWithoutEstimator,
    #[error("failed to build index for {doc_id}: {source}")]
    Index {
        doc_id: String,
        #[source]
        source: RetrievalError,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Wrapper measuring wall time per agent call so trajectory lines can carry
/// step timings without the core loop owning a clock.
struct TimedAgent {
    inner: Box<dyn Agent>,
    timings_ms: Vec<u64>,
}

impl Agent for TimedAgent {
    fn generate_queries(
        &mut self,
        prompt: &PromptPair,
        num_queries: usize,
    ) -> Result<QueryBatch, AgentError> {
        let start = Instant::now();
        let result = self.inner.generate_queries(prompt, num_queries);
        self.timings_ms.push(start.elapsed().as_millis() as u64);
        result
    }
}

/// Execute a run plan: indexes are built once per document (through whatever
/// cache the embedder carries), then all (seed, document) episodes run on a
/// bounded pool.
pub fn run_plan(
    plan: &RunPlan<'_>,
    embedder: &(dyn Embedder + Sync),
) -> Result<RunOutcome, RunError> {
    if plan.seeds.is_empty() {
        return Err(RunError::NoSeeds);
    }
    if plan.calibration.is_some() && plan.estimator.is_none() {
        return Err(RunError::CalibrationWithoutEstimator);
    }

    let mut indexes: BTreeMap<&str, PassageIndex> = BTreeMap::new();
    for doc in plan.corpus {
        let index = build_index(doc, embedder, plan.episode.theta).map_err(|source| {
            RunError::Index {
                doc_id: doc.doc_id.clone(),
                source,
            }
        })?;
        indexes.insert(doc.doc_id.as_str(), index);
    }

    let jobs: Vec<(u64, &Document)> = plan
        .seeds
        .iter()
        .flat_map(|&seed| plan.corpus.iter().map(move |doc| (seed, doc)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.parallelism.max(1))
        .build()
        .expect("worker pool");

    type EpisodeResult = Result<(EpisodeReport, Vec<TrajectoryStep>), EpisodeFailure>;
    let results: Vec<EpisodeResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(seed, doc)| run_one(plan, embedder, &indexes, seed, doc))
            .collect()
    });

    let mut episodes = Vec::new();
    let mut failures = Vec::new();
    let mut trajectories = Vec::new();
    for result in results {
        match result {
            Ok((report, steps)) => {
                episodes.push(report);
                trajectories.extend(steps);
            }
            Err(failure) => failures.push(failure),
        }
    }

    let mut report = aggregate_run(
        &episodes,
        plan.dispersion_multiplier,
        plan.episode.max_steps,
    );
    report.failed_episode_count = failures.len();
    Ok(RunOutcome {
        report,
        episodes,
        failures,
        trajectories,
    })
}

fn run_one(
    plan: &RunPlan<'_>,
    embedder: &(dyn Embedder + Sync),
    indexes: &BTreeMap<&str, PassageIndex>,
    seed: u64,
    doc: &Document,
) -> Result<(EpisodeReport, Vec<TrajectoryStep>), EpisodeFailure> {
    let episode_seed = mix_seed(seed, &doc.doc_id);
    let cfg = EpisodeConfig {
        seed: episode_seed,
        ..plan.episode.clone()
    };
    let index = &indexes[doc.doc_id.as_str()];
    let mut agent = TimedAgent {
        inner: plan.agent.build(doc, episode_seed),
        timings_ms: Vec::new(),
    };
    let mut estimator = plan
        .estimator
        .as_ref()
        .map(|spec| spec.build(episode_seed));
    let stopper = match (&mut estimator, &plan.calibration) {
        (Some(estimator), Some(calibration)) => Some(StopRule {
            estimator: estimator.as_mut(),
            calibration,
        }),
        _ => None,
    };

    let started = Instant::now();
    let outcome = run_episode(doc, &cfg, plan.belief, index, embedder, &mut agent, stopper)
        .map_err(|e| EpisodeFailure {
            doc_id: doc.doc_id.clone(),
            seed,
            error: e.to_string(),
        })?;
    let mut report = outcome.report;
    report.wall_time_secs = started.elapsed().as_secs_f64();

    let mut steps = Vec::with_capacity(outcome.step_audits.len() + 1);
    for (record, audit) in outcome
        .state
        .trajectory()
        .iter()
        .zip(&outcome.step_audits)
    {
        steps.push(TrajectoryStep {
            doc_id: doc.doc_id.clone(),
            seed,
            step: audit.step,
            blocked: record.blocked,
            stopped: false,
            queries: record.queries.clone(),
            hits: record.per_query_hits.clone(),
            newly_retrieved: record.newly_retrieved.clone(),
            truncated_queries: record.truncated_queries,
            estimate: audit.estimate,
            prompt_system: audit.prompt.system.clone(),
            prompt_user: audit.prompt.user.clone(),
            raw_model_output: audit.raw_model_output.clone(),
            usage: audit.usage,
            wall_ms: agent.timings_ms.get(audit.step - 1).copied().unwrap_or(0),
        });
    }
    if let Some(estimate) = outcome.stop_estimate {
        steps.push(TrajectoryStep {
            doc_id: doc.doc_id.clone(),
            seed,
            step: report.stop_step,
            blocked: false,
            stopped: true,
            queries: Vec::new(),
            hits: Vec::new(),
            newly_retrieved: Vec::new(),
            truncated_queries: 0,
            estimate: Some(estimate),
            prompt_system: String::new(),
            prompt_user: String::new(),
            raw_model_output: String::new(),
            usage: TokenUsage::default(),
            wall_ms: 0,
        });
    }
    Ok((report, steps))
}
