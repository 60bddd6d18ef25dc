//! The episode state machine.
//!
//! One episode hides one document's goal passages behind the observation
//! function. Each step executes up to `K` queries, ORs the observed passage
//! ids into the retrieved indicator vector (bits only ever flip 0 -> 1), and
//! appends a [`StepRecord`] to the trajectory. Episodes run for at most `M`
//! steps; the terminal reward is the completeness ratio, optionally
//! discounted to reward early termination. No intermediate rewards exist —
//! agents get feedback only through observations.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::math;
use crate::retrieval::{retrieve, Embedder, PassageIndex, RetrievalError, RetrievalHit};

/// Per-episode knobs: `K` queries per step, `M` steps, similarity threshold,
/// discount, and the calibrated stopping threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// `K`: maximum queries executed per step.
    pub queries_per_step: usize,
    /// `M`: maximum steps per episode.
    pub max_steps: usize,
    /// Similarity threshold for the observation function.
    pub theta: f64,
    /// Discount in (0, 1]; 1 reduces the score to the plain completeness
    /// ratio.
    pub gamma: f64,
    /// Stopping threshold delta for the calibrated lower bound.
    pub stop_threshold: f64,
    /// Episode-level seed; runners derive agent seeds from it.
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            queries_per_step: 10,
            max_steps: 10,
            theta: crate::retrieval::DEFAULT_THETA,
            gamma: 1.0,
            stop_threshold: 0.8,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    /// Total query budget `K * M` (100 under the defaults).
    pub fn query_budget(&self) -> usize {
        self.queries_per_step * self.max_steps
    }
}

/// What happened in one step: the executed queries, their per-query hits,
/// the ids newly added to the retrieved set, and whether the step was
/// consumed by an upstream content-filter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub queries: Vec<String>,
    pub per_query_hits: Vec<Vec<RetrievalHit>>,
    /// Sorted ids first retrieved in this step; disjoint from everything
    /// retrieved before.
    pub newly_retrieved: Vec<usize>,
    pub blocked: bool,
    /// How many over-budget queries were dropped before execution.
    pub truncated_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("document has no goal passages")]
    EmptyDocument,
    #[error("episode horizon of {max_steps} steps exceeded")]
    HorizonExceeded { max_steps: usize },
    #[error("step requires at least one query unless blocked")]
    NoQueries,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

/// Hidden episode state: the monotone retrieved indicator plus the full
/// trajectory. Single-owner; one runner mutates it at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    doc_id: String,
    goal_count: usize,
    retrieved: Vec<bool>,
    step_index: usize,
    trajectory: Vec<StepRecord>,
    config: EpisodeConfig,
}

/// Fresh state for one document: all-zero retrieved vector, empty
/// trajectory, step 0.
pub fn init_episode(doc: &Document, cfg: &EpisodeConfig) -> Result<EpisodeState, EnvError> {
    if doc.passages.is_empty() {
        return Err(EnvError::EmptyDocument);
    }
    Ok(EpisodeState {
        doc_id: doc.doc_id.clone(),
        goal_count: doc.goal_count(),
        retrieved: alloc::vec![false; doc.goal_count()],
        step_index: 0,
        trajectory: Vec::new(),
        config: cfg.clone(),
    })
}

impl EpisodeState {
    /// State with a chosen retrieved set and no trajectory, for synthetic
    /// belief pools and replay.
    pub fn with_retrieved_set(
        doc: &Document,
        retrieved_ids: &[usize],
        cfg: &EpisodeConfig,
    ) -> Result<EpisodeState, EnvError> {
        let mut state = init_episode(doc, cfg)?;
        for &id in retrieved_ids {
            if id < state.goal_count {
                state.retrieved[id] = true;
            }
        }
        state.step_index = 1.min(cfg.max_steps);
        Ok(state)
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    /// `N`, the number of goal passages.
    pub fn goal_count(&self) -> usize {
        self.goal_count
    }

    /// Steps consumed so far (`t`).
    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn trajectory(&self) -> &[StepRecord] {
        &self.trajectory
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn rng_seed(&self) -> u64 {
        self.config.seed
    }

    pub fn is_retrieved(&self, passage_id: usize) -> bool {
        self.retrieved.get(passage_id).copied().unwrap_or(false)
    }

    /// Sorted ids of all retrieved passages.
    pub fn retrieved_ids(&self) -> Vec<usize> {
        self.retrieved
            .iter()
            .enumerate()
            .filter_map(|(i, &r)| r.then_some(i))
            .collect()
    }

    pub fn retrieved_count(&self) -> usize {
        self.retrieved.iter().filter(|&&r| r).count()
    }

    /// `popcount(retrieved) / N`, in [0, 1]. Nondecreasing across steps.
    pub fn completeness_ratio(&self) -> f64 {
        self.retrieved_count() as f64 / self.goal_count as f64
    }

    /// Count of steps consumed by content-filter blocks.
    pub fn blocked_steps(&self) -> usize {
        self.trajectory.iter().filter(|s| s.blocked).count()
    }

    /// Execute one step: each query is retrieved independently and the union
    /// of observed ids is OR-ed into the retrieved vector. Queries beyond
    /// the per-step budget are truncated (recorded, not an error). The step
    /// is transactional — a provider failure on any query leaves the state
    /// untouched so budget accounting stays intact.
    pub fn step(
        &mut self,
        queries: &[String],
        index: &PassageIndex,
        embedder: &dyn Embedder,
    ) -> Result<Vec<Vec<RetrievalHit>>, EnvError> {
        if self.step_index >= self.config.max_steps {
            return Err(EnvError::HorizonExceeded {
                max_steps: self.config.max_steps,
            });
        }
        if queries.is_empty() {
            return Err(EnvError::NoQueries);
        }
        let budget = self.config.queries_per_step;
        let executed = &queries[..queries.len().min(budget)];
        let truncated_queries = queries.len() - executed.len();

        let mut per_query_hits = Vec::with_capacity(executed.len());
        for query in executed {
            per_query_hits.push(retrieve(index, query, embedder)?);
        }

        let mut newly_retrieved = Vec::new();
        for hits in &per_query_hits {
            for hit in hits {
                if hit.passage_id < self.goal_count && !self.retrieved[hit.passage_id] {
                    self.retrieved[hit.passage_id] = true;
                    newly_retrieved.push(hit.passage_id);
                }
            }
        }
        newly_retrieved.sort_unstable();

        self.trajectory.push(StepRecord {
            queries: executed.to_vec(),
            per_query_hits: per_query_hits.clone(),
            newly_retrieved,
            blocked: false,
            truncated_queries,
        });
        self.step_index += 1;
        Ok(per_query_hits)
    }

    /// Consume one step for an upstream content-filter block: the retrieved
    /// vector is unchanged and an empty blocked record is appended.
    pub fn record_blocked_step(&mut self) -> Result<(), EnvError> {
        if self.step_index >= self.config.max_steps {
            return Err(EnvError::HorizonExceeded {
                max_steps: self.config.max_steps,
            });
        }
        self.trajectory.push(StepRecord {
            queries: Vec::new(),
            per_query_hits: Vec::new(),
            newly_retrieved: Vec::new(),
            blocked: true,
            truncated_queries: 0,
        });
        self.step_index += 1;
        Ok(())
    }
}

/// Terminal score `c * gamma^(t_star - M)`: with `gamma = 1` this is the
/// plain completeness ratio; `gamma < 1` grants a bonus factor above 1 to
/// episodes that stop before the budget is exhausted (the value is left
/// unclamped, so early stops can score above 1).
pub fn discounted_score(completeness: f64, t_star: usize, cfg: &EpisodeConfig) -> f64 {
    if cfg.gamma == 1.0 {
        return completeness;
    }
    let exponent = t_star as f64 - cfg.max_steps as f64;
    completeness * math::powf(cfg.gamma, exponent)
}
