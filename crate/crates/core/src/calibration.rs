//! Completeness estimation, split-conformal calibration, and the calibrated
//! stopping rule.
//!
//! Estimators predict the completeness ratio of a belief; the harness never
//! trusts those raw estimates. Instead, a pool of synthetic beliefs with
//! known true completeness is generated per document (uniform retrieved
//! subsets, binned by remaining-passage count so the pool spans low to high
//! coverage), split 50/50, and the calibration half turns absolute errors
//! `e = |c - ĉ|` into a conformal half-width `q̂`: the `⌈(n+1)(1-α)⌉`-th
//! smallest score, or +∞ when the calibration set is too small for the
//! target level. Intervals `[ĉ - q̂, ĉ + q̂]` then cover the true ratio with
//! probability at least `1 - α` over exchangeable draws, for any estimator,
//! however biased. Synthetic subsets are drawn independently, which gives
//! exchangeability by construction.
//!
//! Stopping uses the *unclamped* lower bound: stop once `ĉ - q̂ >= δ`.
//! Displayed intervals clamp to [0, 1]; the stop rule does not.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{extract_json_object, TokenUsage};
use crate::belief::{render_deduplicated, BeliefError, BeliefKind, BeliefText};
use crate::corpus::Document;
use crate::math;

/// An offline belief with a uniformly sampled retrieved subset and known
/// true completeness, used as an exchangeable calibration sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBelief {
    pub doc_id: String,
    /// Which remaining-count bin this belief was drawn from.
    pub bin_index: usize,
    /// Sorted passage ids visible in the belief.
    pub retrieved_set: Vec<usize>,
    /// `|retrieved_set| / N`, exact.
    pub true_completeness: f64,
    /// Deduplicated rendering of the retrieved set.
    pub rendered: BeliefText,
}

/// Generate one synthetic belief per remaining-count bin of width `delta`.
///
/// Remaining counts {0..N-1} are partitioned into `⌈N/delta⌉` contiguous
/// bins (last possibly short); per bin a remaining count is sampled
/// uniformly, the retrieved subset of size `N - remaining` is drawn
/// uniformly, and the deduplicated rendering is produced. Deterministic per
/// (seed, doc).
pub fn generate_synthetic_beliefs(
    doc: &Document,
    delta: usize,
    seed: u64,
) -> Vec<SyntheticBelief> {
    assert!(delta >= 1, "bin width must be at least 1");
    let n = doc.goal_count();
    if n == 0 {
        return Vec::new();
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(doc.doc_id.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);

    let bin_count = n.div_ceil(delta);
    let mut beliefs = Vec::with_capacity(bin_count);
    for bin_index in 0..bin_count {
        let lo = bin_index * delta;
        let hi = ((bin_index + 1) * delta).min(n) - 1;
        let n_remaining = rng.gen_range(lo..=hi);
        let n_retrieved = n - n_remaining;
        let mut retrieved_set: Vec<usize> =
            rand::seq::index::sample(&mut rng, n, n_retrieved).into_vec();
        retrieved_set.sort_unstable();
        let true_completeness = n_retrieved as f64 / n as f64;
        let (rendered_text, visible) = render_deduplicated(doc, &retrieved_set);
        beliefs.push(SyntheticBelief {
            doc_id: doc.doc_id.clone(),
            bin_index,
            retrieved_set,
            true_completeness,
            rendered: BeliefText {
                kind: BeliefKind::Deduplicated,
                rendered: rendered_text,
                passage_count_visible: visible,
                step_index: 1,
            },
        });
    }
    beliefs
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("could not parse a completeness estimate: {0}")]
    UnparseableOutput(String),
    #[error("estimator provider unavailable: {0}")]
    ProviderUnavailable(String),
}

/// A completeness estimator: given a deduplicated belief and its document,
/// predict the completeness ratio. Remote estimators see only the rendered
/// prompt; scripted ones may use the visible-count/goal-count truth.
pub trait CompletenessEstimator {
    fn estimate(&mut self, belief: &BeliefText, doc: &Document) -> Result<f64, EstimatorError>;

    /// Provider-reported usage for the most recent call; zero for scripted
    /// estimators.
    fn last_usage(&self) -> TokenUsage {
        TokenUsage::default()
    }
}

/// Run the estimator on a deduplicated belief and clamp the prediction to
/// [0, 1]. Non-deduplicated beliefs are rejected — the estimation protocol
/// is defined on the deduplicated rendering only.
pub fn estimate_completeness(
    belief: &BeliefText,
    doc: &Document,
    estimator: &mut dyn CompletenessEstimator,
) -> Result<f64, EstimatorError> {
    if belief.kind != BeliefKind::Deduplicated {
        return Err(BeliefError::WrongBeliefKind {
            expected: BeliefKind::Deduplicated,
            got: belief.kind,
        }
        .into());
    }
    Ok(math::clamp01(estimator.estimate(belief, doc)?))
}

/// Parse `{"predicted_completeness": x}` from a model reply, tolerating code
/// fences and surrounding chatter.
pub fn parse_completeness_reply(text: &str) -> Result<f64, EstimatorError> {
    #[derive(Deserialize)]
    struct Reply {
        predicted_completeness: f64,
    }
    let body = extract_json_object(text)
        .ok_or_else(|| EstimatorError::UnparseableOutput(text.to_string()))?;
    let reply: Reply = serde_json::from_str(body)
        .map_err(|_| EstimatorError::UnparseableOutput(text.to_string()))?;
    Ok(reply.predicted_completeness)
}

/// Scripted estimator returning the exact truth (visible / N).
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectEstimator;

impl CompletenessEstimator for PerfectEstimator {
    fn estimate(&mut self, belief: &BeliefText, doc: &Document) -> Result<f64, EstimatorError> {
        Ok(belief.passage_count_visible as f64 / doc.goal_count() as f64)
    }
}

/// Scripted estimator returning truth plus seeded uniform noise of the given
/// half-width, clamped to [0, 1].
#[derive(Debug, Clone)]
pub struct NoisyEstimator {
    half_width: f64,
    rng: ChaCha8Rng,
}

impl NoisyEstimator {
    pub fn new(half_width: f64, seed: u64) -> Self {
        NoisyEstimator {
            half_width,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl CompletenessEstimator for NoisyEstimator {
    fn estimate(&mut self, belief: &BeliefText, doc: &Document) -> Result<f64, EstimatorError> {
        let truth = belief.passage_count_visible as f64 / doc.goal_count() as f64;
        let noise = self.rng.gen_range(-self.half_width..=self.half_width);
        Ok(math::clamp01(truth + noise))
    }
}

/// Scripted estimator ignoring the belief entirely.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEstimator {
    pub value: f64,
}

impl CompletenessEstimator for ConstantEstimator {
    fn estimate(&mut self, _belief: &BeliefText, _doc: &Document) -> Result<f64, EstimatorError> {
        Ok(self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("calibration set is empty")]
    EmptyCalibrationSet,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

/// Serialize an infinite half-width as `null` (JSON has no infinity).
mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            serializer.serialize_some(value)
        } else {
            serializer.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(deserializer)?.unwrap_or(f64::INFINITY))
    }
}

/// A frozen conformal calibration: the half-width `q̂` with the level and
/// score list it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    /// Conformal half-width; +∞ when the calibration set is too small, in
    /// which case intervals clamp to [0, 1] and the stop rule never fires.
    #[serde(with = "inf_as_null")]
    pub q_hat: f64,
    pub alpha: f64,
    /// Calibration set size.
    pub n: usize,
    /// Nonconformity scores, sorted ascending.
    pub scores: Vec<f64>,
}

impl CalibrationModel {
    /// Model with an injected half-width (loaded artifacts, hand-built
    /// fixtures).
    pub fn frozen(q_hat: f64, alpha: f64) -> Self {
        CalibrationModel {
            q_hat,
            alpha,
            n: 0,
            scores: Vec::new(),
        }
    }
}

/// 1-based order-statistic rank `⌈(n+1)(1-α)⌉`.
///
/// The product is computed in floats, so an epsilon guard keeps values that
/// are mathematically integral (e.g. 10 x 0.9) from being ceiled one slot
/// too high.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    let raw = (n as f64 + 1.0) * (1.0 - alpha);
    let rank = math::ceil(raw - 1e-9);
    math::fmax(rank, 1.0) as usize
}

/// Split-conformal calibration over (true, predicted) completeness pairs:
/// scores are `|c - ĉ|` sorted ascending and `q̂` is the score at rank
/// `⌈(n+1)(1-α)⌉`, or +∞ when that rank exceeds `n`.
pub fn conformal_calibrate(
    pairs: &[(f64, f64)],
    alpha: f64,
) -> Result<CalibrationModel, CalibrationError> {
    if pairs.is_empty() {
        return Err(CalibrationError::EmptyCalibrationSet);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CalibrationError::InvalidAlpha(alpha));
    }
    let mut scores: Vec<f64> = pairs
        .iter()
        .map(|(truth, estimate)| math::abs(truth - estimate))
        .collect();
    scores.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let n = scores.len();
    let rank = conformal_rank(n, alpha);
    let q_hat = if rank <= n {
        scores[rank - 1]
    } else {
        f64::INFINITY
    };
    Ok(CalibrationModel {
        q_hat,
        alpha,
        n,
        scores,
    })
}

/// A calibrated point estimate with its clamped display interval. The
/// unclamped lower bound used by the stop rule is `c_hat - q_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletenessEstimate {
    pub c_hat: f64,
    #[serde(with = "inf_as_null")]
    pub q_hat: f64,
    pub interval_lo: f64,
    pub interval_hi: f64,
}

/// Attach the calibrated interval `[ĉ - q̂, ĉ + q̂]`, clamped to [0, 1], to a
/// point estimate.
pub fn apply_interval(c_hat: f64, model: &CalibrationModel) -> CompletenessEstimate {
    CompletenessEstimate {
        c_hat,
        q_hat: model.q_hat,
        interval_lo: math::clamp01(c_hat - model.q_hat),
        interval_hi: math::clamp01(c_hat + model.q_hat),
    }
}

/// The calibrated stopping rule: stop once the unclamped lower bound reaches
/// the threshold, `ĉ - q̂ >= δ` (boundary inclusive). An infinite `q̂` never
/// stops.
pub fn should_stop(estimate: &CompletenessEstimate, delta_stop: f64) -> bool {
    estimate.c_hat - estimate.q_hat >= delta_stop
}

/// Uniform random 50/50 split of a pool; odd pools give the extra element to
/// the test side. Deterministic per seed.
pub fn split_calibration_pool<T: Clone>(pool: &[T], split_seed: u64) -> (Vec<T>, Vec<T>) {
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    indices.shuffle(&mut rng);
    let cal_size = pool.len() / 2;
    let calibration = indices[..cal_size]
        .iter()
        .map(|&i| pool[i].clone())
        .collect();
    let test = indices[cal_size..].iter().map(|&i| pool[i].clone()).collect();
    (calibration, test)
}

/// Estimator quality on a held-out test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMetrics {
    /// Fraction of test points whose true completeness lies inside the
    /// calibrated interval.
    pub coverage: f64,
    #[serde(with = "inf_as_null")]
    pub q_hat: f64,
    /// Out-of-sample coefficient of determination against the test-set mean;
    /// `None` when the test truths are all equal (degenerate variance).
    pub r_squared: Option<f64>,
    pub test_size: usize,
}

/// Evaluate a calibrated estimator on held-out (true, predicted) pairs.
pub fn evaluate_estimator(pairs: &[(f64, f64)], model: &CalibrationModel) -> EstimatorMetrics {
    let n = pairs.len();
    if n == 0 {
        return EstimatorMetrics {
            coverage: 0.0,
            q_hat: model.q_hat,
            r_squared: None,
            test_size: 0,
        };
    }
    let covered = pairs
        .iter()
        .filter(|(truth, estimate)| math::abs(truth - estimate) <= model.q_hat)
        .count();
    let mean_truth: f64 = pairs.iter().map(|(truth, _)| truth).sum::<f64>() / n as f64;
    let ss_res: f64 = pairs
        .iter()
        .map(|(truth, estimate)| (truth - estimate) * (truth - estimate))
        .sum();
    let ss_tot: f64 = pairs
        .iter()
        .map(|(truth, _)| (truth - mean_truth) * (truth - mean_truth))
        .sum();
    let r_squared = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    EstimatorMetrics {
        coverage: covered as f64 / n as f64,
        q_hat: model.q_hat,
        r_squared,
        test_size: n,
    }
}
