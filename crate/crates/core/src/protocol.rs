//! The end-to-end evaluation loop and run-level aggregation.
//!
//! [`run_episode`] drives one document through the full protocol: at each
//! step the current deduplicated belief is (optionally) scored by a
//! calibrated estimator and the episode stops once the calibrated lower
//! bound clears the threshold — the estimate precedes query generation, so
//! an episode can stop before issuing a single query. Otherwise the belief
//! of the configured kind is rendered, the agent generates up to `K`
//! queries, and the environment steps. Without a stop rule the episode runs
//! to the horizon.
//!
//! Per-step query diversity and token accounting are annotations only; they
//! never influence control flow.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError, TokenUsage};
use crate::belief::{
    render_belief, render_query_prompt, BeliefError, BeliefKind, PromptPair,
};
use crate::calibration::{
    apply_interval, estimate_completeness, should_stop, CalibrationModel, CompletenessEstimate,
    CompletenessEstimator, EstimatorError,
};
use crate::corpus::Document;
use crate::environment::{discounted_score, init_episode, EnvError, EpisodeConfig, EpisodeState};
use crate::math;
use crate::retrieval::{embed_text, Embedder, EmbeddingVector, PassageIndex, RetrievalError};

/// Per-episode metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub doc_id: String,
    pub topic_group: String,
    pub final_completeness: f64,
    pub discounted_score: f64,
    /// `t*`: the 1-based loop step at which the stop rule fired, or the
    /// horizon when it never did.
    pub stop_step: usize,
    pub stopped_early: bool,
    /// Completeness after each executed step; nondecreasing.
    pub per_step_completeness: Vec<f64>,
    /// Query diversity per executed step; `None` for blocked steps.
    pub per_step_diversity: Vec<Option<f64>>,
    pub blocked_steps: usize,
    pub token_usage: TokenUsage,
    /// Filled in by runners that own a clock; 0 for pure in-process runs.
    pub wall_time_secs: f64,
}

/// Audit record for one executed loop step: the exact prompts sent, the raw
/// model output, and the pre-step estimate when a stop rule was active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub step: usize,
    pub estimate: Option<CompletenessEstimate>,
    pub prompt: PromptPair,
    pub raw_model_output: String,
    pub usage: TokenUsage,
    pub blocked: bool,
}

/// Everything produced by one episode: the report, the final state (with
/// its full trajectory), and per-step audits.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub report: EpisodeReport,
    pub state: EpisodeState,
    pub step_audits: Vec<StepAudit>,
    /// The estimate that fired the stop rule, when one did.
    pub stop_estimate: Option<CompletenessEstimate>,
}

/// A calibrated stopping rule: an estimator plus a frozen calibration.
/// Bundling them makes "calibration without estimator" unrepresentable.
pub struct StopRule<'a> {
    pub estimator: &'a mut dyn CompletenessEstimator,
    pub calibration: &'a CalibrationModel,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Run one episode of the evaluation protocol.
pub fn run_episode(
    doc: &Document,
    cfg: &EpisodeConfig,
    kind: BeliefKind,
    index: &PassageIndex,
    embedder: &dyn Embedder,
    agent: &mut dyn Agent,
    mut stopper: Option<StopRule<'_>>,
) -> Result<EpisodeOutcome, EpisodeError> {
    let mut state = init_episode(doc, cfg)?;
    let mut step_audits = Vec::new();
    let mut stop_estimate = None;
    let mut per_step_completeness = Vec::new();
    let mut per_step_diversity = Vec::new();
    let mut prior_queries: Vec<String> = Vec::new();
    let mut usage_total = TokenUsage::default();
    let mut stopped_early = false;
    let mut t_star = cfg.max_steps;

    for t in 1..=cfg.max_steps {
        let mut step_estimate = None;
        if let Some(rule) = stopper.as_mut() {
            let dedup = render_belief(&state, doc, BeliefKind::Deduplicated)?;
            let c_hat = estimate_completeness(&dedup, doc, rule.estimator)?;
            usage_total += rule.estimator.last_usage();
            let estimate = apply_interval(c_hat, rule.calibration);
            if should_stop(&estimate, cfg.stop_threshold) {
                stopped_early = true;
                t_star = t;
                stop_estimate = Some(estimate);
                break;
            }
            step_estimate = Some(estimate);
        }

        let belief = render_belief(&state, doc, kind)?;
        let prompt = render_query_prompt(&belief, doc, cfg);
        let batch = agent.generate_queries(&prompt, cfg.queries_per_step)?;
        usage_total += batch.usage;

        if batch.blocked {
            state.record_blocked_step()?;
            per_step_diversity.push(None);
        } else {
            state.step(&batch.queries, index, embedder)?;
            let executed = state
                .trajectory()
                .last()
                .expect("step just appended a record")
                .queries
                .clone();
            let diversity = query_diversity(&executed, &prior_queries, embedder).ok();
            per_step_diversity.push(diversity);
            prior_queries.extend(executed);
        }
        per_step_completeness.push(state.completeness_ratio());
        step_audits.push(StepAudit {
            step: t,
            estimate: step_estimate,
            prompt,
            raw_model_output: batch.raw_model_output,
            usage: batch.usage,
            blocked: batch.blocked,
        });
    }

    let final_completeness = state.completeness_ratio();
    let report = EpisodeReport {
        doc_id: doc.doc_id.clone(),
        topic_group: doc.topic_group.clone(),
        final_completeness,
        discounted_score: discounted_score(final_completeness, t_star, cfg),
        stop_step: t_star,
        stopped_early,
        per_step_completeness,
        per_step_diversity,
        blocked_steps: state.blocked_steps(),
        token_usage: usage_total,
        wall_time_secs: 0.0,
    };
    Ok(EpisodeOutcome {
        report,
        state,
        step_audits,
        stop_estimate,
    })
}

/// Mean per-query dissimilarity to the most similar prior query,
/// `1 - max cos(embed(q_i), embed(q))` over all prior queries. With no
/// priors (the first step) it is the mean pairwise dissimilarity among the
/// step's own queries. Clamped to [0, 1]; a degenerate step with nothing to
/// compare against scores 1.
pub fn query_diversity(
    step_queries: &[String],
    prior_queries: &[String],
    embedder: &dyn Embedder,
) -> Result<f64, RetrievalError> {
    let step_vecs: Vec<EmbeddingVector> = step_queries
        .iter()
        .map(|q| embed_text(q, embedder))
        .collect::<Result<_, _>>()?;

    if prior_queries.is_empty() {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..step_vecs.len() {
            for j in (i + 1)..step_vecs.len() {
                total += 1.0 - crate::retrieval::cosine_similarity(&step_vecs[i], &step_vecs[j]);
                pairs += 1;
            }
        }
        if pairs == 0 {
            return Ok(1.0);
        }
        return Ok(math::clamp01(total / pairs as f64));
    }

    let prior_vecs: Vec<EmbeddingVector> = prior_queries
        .iter()
        .map(|q| embed_text(q, embedder))
        .collect::<Result<_, _>>()?;
    if step_vecs.is_empty() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for query_vec in &step_vecs {
        let max_sim = prior_vecs
            .iter()
            .map(|p| crate::retrieval::cosine_similarity(query_vec, p))
            .fold(f64::NEG_INFINITY, math::fmax);
        total += 1.0 - max_sim;
    }
    Ok(math::clamp01(total / step_vecs.len() as f64))
}

/// Per-topic aggregate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRow {
    pub topic_group: String,
    pub episodes: usize,
    pub mean_completeness: f64,
}

/// One step of the mean completeness curve with its dispersion band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub mean_completeness: f64,
    pub std_completeness: f64,
    pub band_lo: f64,
    pub band_hi: f64,
}

/// Run-level aggregate: overall and per-topic means plus the padded step
/// curve. Calibration metrics and the failure count are attached by the
/// runner when applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub episode_count: usize,
    pub mean_completeness: f64,
    pub mean_discounted_score: f64,
    pub stopped_early_count: usize,
    pub blocked_steps_total: usize,
    pub failed_episode_count: usize,
    pub token_usage: TokenUsage,
    pub per_topic: Vec<TopicRow>,
    pub step_curve: Vec<StepRow>,
    pub dispersion_multiplier: f64,
    pub calibration: Option<crate::calibration::EstimatorMetrics>,
}

/// Completeness of an episode at 1-based step `s`, carrying the final value
/// forward past an early stop.
fn completeness_at(report: &EpisodeReport, step: usize) -> f64 {
    report
        .per_step_completeness
        .get(step - 1)
        .copied()
        .unwrap_or(report.final_completeness)
}

/// Aggregate episode reports: overall mean completeness, per-topic means
/// (grouped by topic label, sorted), and the per-step mean curve over
/// `horizon` steps with a `mean ± multiplier * std` dispersion band.
/// Early-stopped episodes are padded by carrying their final completeness
/// forward so every step averages the same episode count.
pub fn aggregate_run(
    reports: &[EpisodeReport],
    dispersion_multiplier: f64,
    horizon: usize,
) -> RunReport {
    let n = reports.len();
    let mean = |values: &[f64]| -> f64 {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    };

    let completeness: Vec<f64> = reports.iter().map(|r| r.final_completeness).collect();
    let scores: Vec<f64> = reports.iter().map(|r| r.discounted_score).collect();

    let mut by_topic: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for report in reports {
        by_topic
            .entry(report.topic_group.as_str())
            .or_default()
            .push(report.final_completeness);
    }
    let per_topic = by_topic
        .into_iter()
        .map(|(topic_group, values)| TopicRow {
            topic_group: String::from(topic_group),
            episodes: values.len(),
            mean_completeness: mean(&values),
        })
        .collect();

    let mut step_curve = Vec::with_capacity(horizon);
    for step in 1..=horizon {
        let values: Vec<f64> = reports.iter().map(|r| completeness_at(r, step)).collect();
        let step_mean = mean(&values);
        let variance = if values.is_empty() {
            0.0
        } else {
            values
                .iter()
                .map(|v| (v - step_mean) * (v - step_mean))
                .sum::<f64>()
                / values.len() as f64
        };
        let std = math::sqrt(variance);
        step_curve.push(StepRow {
            step,
            mean_completeness: step_mean,
            std_completeness: std,
            band_lo: step_mean - dispersion_multiplier * std,
            band_hi: step_mean + dispersion_multiplier * std,
        });
    }

    let mut token_usage = TokenUsage::default();
    for report in reports {
        token_usage += report.token_usage;
    }

    RunReport {
        episode_count: n,
        mean_completeness: mean(&completeness),
        mean_discounted_score: mean(&scores),
        stopped_early_count: reports.iter().filter(|r| r.stopped_early).count(),
        blocked_steps_total: reports.iter().map(|r| r.blocked_steps).sum(),
        failed_episode_count: 0,
        token_usage,
        per_topic,
        step_curve,
        dispersion_multiplier,
        calibration: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    use crate::agents::{QueryBatch, VerbatimAgent};
    use crate::calibration::PerfectEstimator;
    use crate::retrieval::{basis_vector, build_index, DeterministicEmbedder, FixtureEmbedder};

    fn synthetic_doc(n: usize, topic_group: &str) -> Document {
        let bodies: Vec<String> = (0..n)
            .map(|i| format!("distinct passage body number {i}"))
            .collect();
        let refs: Vec<&str> = bodies.iter().map(|s| s.as_str()).collect();
        let mut doc = crate::retrieval::tests::doc_with_bodies("proto-doc", &refs);
        doc.topic_group = topic_group.into();
        doc
    }

    #[test]
    fn verbatim_agent_reaches_full_completeness_within_budget() {
        let doc = synthetic_doc(25, "T");
        let embedder = DeterministicEmbedder::new(1);
        let cfg = EpisodeConfig::default();
        let index = build_index(&doc, &embedder, cfg.theta).unwrap();
        let mut agent = VerbatimAgent::new(&doc);
        let outcome = run_episode(
            &doc,
            &cfg,
            BeliefKind::Deduplicated,
            &index,
            &embedder,
            &mut agent,
            None,
        )
        .unwrap();
        assert_eq!(outcome.report.final_completeness, 1.0);
        assert_eq!(outcome.report.stop_step, 10);
        assert!(!outcome.report.stopped_early);
        assert_eq!(outcome.report.per_step_completeness.len(), 10);
    }

    #[test]
    fn infinite_half_width_never_stops_early() {
        let doc = synthetic_doc(10, "T");
        let embedder = DeterministicEmbedder::new(1);
        let cfg = EpisodeConfig::default();
        let index = build_index(&doc, &embedder, cfg.theta).unwrap();
        let mut agent = VerbatimAgent::new(&doc);
        let calibration = CalibrationModel::frozen(f64::INFINITY, 0.1);
        let mut estimator = PerfectEstimator;
        let outcome = run_episode(
            &doc,
            &cfg,
            BeliefKind::Deduplicated,
            &index,
            &embedder,
            &mut agent,
            Some(StopRule {
                estimator: &mut estimator,
                calibration: &calibration,
            }),
        )
        .unwrap();
        assert!(!outcome.report.stopped_early);
        assert_eq!(outcome.report.stop_step, cfg.max_steps);
        assert_eq!(outcome.report.final_completeness, 1.0);
    }

    #[test]
    fn perfect_estimator_with_zero_width_stops_at_the_threshold() {
        // N=20, K=10: completeness is 0.5 after one step, so with q̂=0 and
        // δ=0.5 the estimate at loop step 2 fires the stop rule before any
        // second-step query is issued.
        let doc = synthetic_doc(20, "T");
        let embedder = DeterministicEmbedder::new(1);
        let cfg = EpisodeConfig {
            stop_threshold: 0.5,
            ..Default::default()
        };
        let index = build_index(&doc, &embedder, cfg.theta).unwrap();
        let mut agent = VerbatimAgent::new(&doc);
        let calibration = CalibrationModel::frozen(0.0, 0.1);
        let mut estimator = PerfectEstimator;
        let outcome = run_episode(
            &doc,
            &cfg,
            BeliefKind::Deduplicated,
            &index,
            &embedder,
            &mut agent,
            Some(StopRule {
                estimator: &mut estimator,
                calibration: &calibration,
            }),
        )
        .unwrap();
        assert!(outcome.report.stopped_early);
        assert_eq!(outcome.report.stop_step, 2);
        assert_eq!(outcome.report.per_step_completeness, vec![0.5]);
        assert_eq!(outcome.report.final_completeness, 0.5);
        assert!(outcome.stop_estimate.is_some());
    }

    #[test]
    fn stop_can_fire_before_the_first_query() {
        // δ=0 with a zero half-width stops at step 1 on the abstract-only
        // belief: zero queries are ever issued.
        let doc = synthetic_doc(10, "T");
        let embedder = DeterministicEmbedder::new(1);
        let cfg = EpisodeConfig {
            stop_threshold: 0.0,
            ..Default::default()
        };
        let index = build_index(&doc, &embedder, cfg.theta).unwrap();
        let mut agent = VerbatimAgent::new(&doc);
        let calibration = CalibrationModel::frozen(0.0, 0.1);
        let mut estimator = PerfectEstimator;
        let outcome = run_episode(
            &doc,
            &cfg,
            BeliefKind::Deduplicated,
            &index,
            &embedder,
            &mut agent,
            Some(StopRule {
                estimator: &mut estimator,
                calibration: &calibration,
            }),
        )
        .unwrap();
        assert_eq!(outcome.report.stop_step, 1);
        assert!(outcome.report.per_step_completeness.is_empty());
        assert_eq!(outcome.state.step_index(), 0);
        assert_eq!(outcome.report.final_completeness, 0.0);
    }

    #[test]
    fn blocked_batches_consume_steps_without_failing() {
        struct BlockedAgent;
        impl Agent for BlockedAgent {
            fn generate_queries(
                &mut self,
                _prompt: &PromptPair,
                _num_queries: usize,
            ) -> Result<QueryBatch, AgentError> {
                Ok(QueryBatch::blocked("blocked by upstream filter".into()))
            }
        }
        let doc = synthetic_doc(8, "T");
        let embedder = DeterministicEmbedder::new(1);
        let cfg = EpisodeConfig::default();
        let index = build_index(&doc, &embedder, cfg.theta).unwrap();
        let outcome = run_episode(
            &doc,
            &cfg,
            BeliefKind::RawTrajectory,
            &index,
            &embedder,
            &mut BlockedAgent,
            None,
        )
        .unwrap();
        assert_eq!(outcome.report.blocked_steps, 10);
        assert_eq!(outcome.report.final_completeness, 0.0);
        assert!(outcome.report.per_step_diversity.iter().all(Option::is_none));
    }

    #[test]
    fn repeated_query_has_zero_diversity() {
        let embedder = DeterministicEmbedder::new(4);
        let step = vec!["the same query".to_string()];
        let prior = vec!["the same query".to_string()];
        let d = query_diversity(&step, &prior, &embedder).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn first_step_diversity_is_pairwise() {
        let embedder = DeterministicEmbedder::new(4);
        // K identical queries: pairwise cosine 1, diversity 0.
        let step: Vec<String> = (0..10).map(|_| "identical".to_string()).collect();
        let d = query_diversity(&step, &[], &embedder).unwrap();
        assert!(d.abs() < 1e-12);

        // Mutually orthogonal fixtures: pairwise cosine exactly 0.
        let mut fixture = FixtureEmbedder::new();
        for (i, name) in ["qa", "qb", "qc"].iter().enumerate() {
            fixture.insert(name, basis_vector(4, i)).unwrap();
        }
        let step: Vec<String> = ["qa", "qb", "qc"].iter().map(|s| s.to_string()).collect();
        let d = query_diversity(&step, &[], &fixture).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_query_first_step_is_fully_diverse() {
        let embedder = DeterministicEmbedder::new(4);
        let step = vec!["lonely query".to_string()];
        assert_eq!(query_diversity(&step, &[], &embedder).unwrap(), 1.0);
    }

    #[test]
    fn later_steps_score_against_the_most_similar_prior() {
        let mut fixture = FixtureEmbedder::new();
        fixture.insert("old a", basis_vector(4, 0)).unwrap();
        fixture.insert("old b", basis_vector(4, 1)).unwrap();
        fixture.insert("new", basis_vector(4, 1)).unwrap();
        let step = vec!["new".to_string()];
        let prior = vec!["old a".to_string(), "old b".to_string()];
        // Max similarity is 1 (matches "old b"), so diversity is 0.
        let d = query_diversity(&step, &prior, &fixture).unwrap();
        assert!(d.abs() < 1e-12);
    }

    fn report(topic: &str, curve: &[f64], final_c: f64) -> EpisodeReport {
        EpisodeReport {
            doc_id: "d".into(),
            topic_group: topic.into(),
            final_completeness: final_c,
            discounted_score: final_c,
            stop_step: curve.len().max(1),
            stopped_early: curve.len() < 3,
            per_step_completeness: curve.to_vec(),
            per_step_diversity: vec![None; curve.len()],
            blocked_steps: 0,
            token_usage: TokenUsage::default(),
            wall_time_secs: 0.0,
        }
    }

    #[test]
    fn aggregate_means_and_topics() {
        let reports = vec![
            report("a", &[0.1, 0.2, 0.2], 0.2),
            report("b", &[0.2, 0.4, 0.4], 0.4),
        ];
        let run = aggregate_run(&reports, 0.3, 3);
        assert!((run.mean_completeness - 0.3).abs() < 1e-12);
        assert_eq!(run.per_topic.len(), 2);
        assert_eq!(run.per_topic[0].topic_group, "a");
        assert_eq!(run.episode_count, 2);

        let single = aggregate_run(&reports[..1], 0.3, 3);
        assert_eq!(single.mean_completeness, 0.2);
    }

    #[test]
    fn aggregate_mean_is_count_weighted_topic_mean() {
        let reports = vec![
            report("a", &[0.1], 0.1),
            report("a", &[0.3], 0.3),
            report("b", &[0.8], 0.8),
        ];
        let run = aggregate_run(&reports, 0.3, 1);
        let weighted: f64 = run
            .per_topic
            .iter()
            .map(|t| t.mean_completeness * t.episodes as f64)
            .sum::<f64>()
            / run.episode_count as f64;
        assert!((run.mean_completeness - weighted).abs() < 1e-12);
    }

    #[test]
    fn step_curve_pads_early_stops_with_final_completeness() {
        let reports = vec![report("a", &[0.5], 0.5), report("b", &[0.2, 0.4, 0.6], 0.6)];
        let run = aggregate_run(&reports, 0.3, 3);
        assert_eq!(run.step_curve.len(), 3);
        // Step 3 averages 0.5 (carried) and 0.6.
        assert!((run.step_curve[2].mean_completeness - 0.55).abs() < 1e-12);
        let row = &run.step_curve[2];
        assert!((row.band_hi - row.mean_completeness - 0.3 * row.std_completeness).abs() < 1e-12);
    }

    #[test]
    fn aggregation_is_deterministic() {
        let reports = vec![
            report("a", &[0.1, 0.2], 0.2),
            report("b", &[0.0, 0.9], 0.9),
        ];
        let a = serde_json::to_string(&aggregate_run(&reports, 0.3, 2)).unwrap();
        let b = serde_json::to_string(&aggregate_run(&reports, 0.3, 2)).unwrap();
        assert_eq!(a, b);
    }
}
