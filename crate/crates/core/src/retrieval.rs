//! Embedding vectors and the thresholded observation function.
//!
//! Queries and passages are embedded into a shared vector space; a query
//! observes exactly the passages whose cosine similarity is *strictly*
//! greater than the index threshold. Similarity is computed in double
//! precision with an exact linear scan — per-document goal sets are small
//! enough that approximate indexes would only add noise.
//!
//! Two offline providers ship with the crate: [`DeterministicEmbedder`]
//! expands a seeded content hash into a unit vector (identical text, identical
//! vector), and [`FixtureEmbedder`] returns injected vectors for fixture-exact
//! tests. Remote providers implement the same [`Embedder`] trait in the
//! harness crate.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{normalize_whitespace, Document};
use crate::math;

/// Default similarity threshold for the observation function.
pub const DEFAULT_THETA: f64 = 0.65;

/// Default dimension of the deterministic test provider.
pub const DEFAULT_TEST_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("text is empty after whitespace normalization")]
    EmptyText,
    #[error("embedding vector has zero norm")]
    ZeroVector,
    #[error("embedding vector contains a non-finite value")]
    NonFiniteValue,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidTheta(f64),
    #[error("passage {passage_id} has no embeddable text")]
    EmptyPassage { passage_id: usize },
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
}

/// A fixed-length embedding with positive norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Validate and wrap raw values: non-empty, all finite, norm > 0.
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::ZeroVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFiniteValue);
        }
        let vector = EmbeddingVector { values };
        if vector.norm() == 0.0 {
            return Err(RetrievalError::ZeroVector);
        }
        Ok(vector)
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.values.iter().map(|v| v * v).sum())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = RetrievalError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

/// Cosine similarity of two vectors of equal dimension, clamped to [-1, 1].
///
/// Symmetric by construction; panics if the dimensions differ.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    assert_eq!(
        a.dimension(),
        b.dimension(),
        "cosine_similarity requires equal dimensions"
    );
    let dot: f64 = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| x * y)
        .sum();
    let sim = dot / (a.norm() * b.norm());
    if sim > 1.0 {
        1.0
    } else if sim < -1.0 {
        -1.0
    } else {
        sim
    }
}

/// Normalize text for embedding; empty results are an error.
pub fn prepare_text(text: &str) -> Result<String, RetrievalError> {
    let normalized = normalize_whitespace(text);
    if normalized.is_empty() {
        return Err(RetrievalError::EmptyText);
    }
    Ok(normalized)
}

/// An embedding provider. Implementations receive whitespace-normalized
/// text and must be deterministic for caching to be transparent.
pub trait Embedder {
    /// Stable identifier used in cache keys; distinct providers (or distinct
    /// configurations of one provider) must not collide.
    fn provider_id(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

/// Embed one text through the provider after whitespace normalization.
pub fn embed_text(text: &str, embedder: &dyn Embedder) -> Result<EmbeddingVector, RetrievalError> {
    let prepared = prepare_text(text)?;
    embedder.embed(&prepared)
}

/// One retrieved passage with its similarity to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub passage_id: usize,
    pub similarity: f64,
}

/// Immutable per-document index: one embedding per goal passage plus the
/// similarity threshold used by [`retrieve`].
#[derive(Debug, Clone)]
pub struct PassageIndex {
    doc_id: String,
    entries: Vec<(usize, EmbeddingVector)>,
    theta: f64,
}

impl PassageIndex {
    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dimension(&self) -> Option<usize> {
        self.entries.first().map(|(_, v)| v.dimension())
    }
}

/// Embed every passage of `doc` and build its index at threshold `theta`.
pub fn build_index(
    doc: &Document,
    embedder: &dyn Embedder,
    theta: f64,
) -> Result<PassageIndex, RetrievalError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(RetrievalError::InvalidTheta(theta));
    }
    let mut entries = Vec::with_capacity(doc.passages.len());
    let mut dimension = None;
    for passage in &doc.passages {
        let vector = embed_text(&passage.body, embedder).map_err(|e| match e {
            RetrievalError::EmptyText => RetrievalError::EmptyPassage {
                passage_id: passage.passage_id,
            },
            other => other,
        })?;
        match dimension {
            None => dimension = Some(vector.dimension()),
            Some(d) if d != vector.dimension() => {
                return Err(RetrievalError::DimensionMismatch {
                    expected: d,
                    got: vector.dimension(),
                })
            }
            _ => {}
        }
        entries.push((passage.passage_id, vector));
    }
    Ok(PassageIndex {
        doc_id: doc.doc_id.clone(),
        entries,
        theta,
    })
}

/// The observation function: all passages whose similarity to the query is
/// strictly greater than the index threshold, sorted by similarity
/// descending with ties broken by ascending passage id. Returns an empty
/// list when no passage is sufficiently similar.
pub fn retrieve(
    index: &PassageIndex,
    query: &str,
    embedder: &dyn Embedder,
) -> Result<Vec<RetrievalHit>, RetrievalError> {
    let query_vec = embed_text(query, embedder)?;
    if let Some(expected) = index.dimension() {
        if query_vec.dimension() != expected {
            return Err(RetrievalError::DimensionMismatch {
                expected,
                got: query_vec.dimension(),
            });
        }
    }
    let mut hits: Vec<RetrievalHit> = index
        .entries
        .iter()
        .map(|(passage_id, vector)| RetrievalHit {
            passage_id: *passage_id,
            similarity: cosine_similarity(&query_vec, vector),
        })
        .filter(|hit| hit.similarity > index.theta)
        .collect();
    hits.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .expect("similarities are finite")
            .then(a.passage_id.cmp(&b.passage_id))
    });
    Ok(hits)
}

/// Offline provider mapping text to a unit vector through a seeded
/// content-hash expansion: identical text always yields the identical
/// vector, and distinct texts land in effectively independent directions.
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    seed: u64,
    dimension: usize,
}

impl DeterministicEmbedder {
    pub fn new(seed: u64) -> Self {
        Self::with_dimension(seed, DEFAULT_TEST_DIMENSION)
    }

    pub fn with_dimension(seed: u64, dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        DeterministicEmbedder { seed, dimension }
    }
}

impl Embedder for DeterministicEmbedder {
    fn provider_id(&self) -> String {
        alloc::format!("test-hash-v1:d{}:s{}", self.dimension, self.seed)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let prepared = prepare_text(text)?;
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(prepared.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        loop {
            let values = gaussian_values(&mut rng, self.dimension);
            let norm = math::sqrt(values.iter().map(|v| v * v).sum());
            if norm > 0.0 {
                let unit = values.iter().map(|v| v / norm).collect();
                return EmbeddingVector::new(unit);
            }
        }
    }
}

fn gaussian_values(rng: &mut ChaCha8Rng, dimension: usize) -> Vec<f64> {
    // Box-Muller over the ChaCha stream keeps the expansion dependency-free
    // and bit-stable across platforms.
    let mut values = Vec::with_capacity(dimension);
    while values.len() < dimension {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        let radius = math::sqrt(-2.0 * math::ln(u1));
        let angle = 2.0 * core::f64::consts::PI * u2;
        values.push(radius * math::cos(angle));
        if values.len() < dimension {
            values.push(radius * math::sin(angle));
        }
    }
    values
}

/// Test provider returning pre-injected vectors, keyed by normalized text.
/// Unknown texts are an error so fixtures fail loudly.
#[derive(Debug, Clone, Default)]
pub struct FixtureEmbedder {
    vectors: BTreeMap<String, EmbeddingVector>,
}

impl FixtureEmbedder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, text: &str, values: Vec<f64>) -> Result<(), RetrievalError> {
        let key = prepare_text(text)?;
        self.vectors.insert(key, EmbeddingVector::new(values)?);
        Ok(())
    }
}

impl Embedder for FixtureEmbedder {
    fn provider_id(&self) -> String {
        String::from("fixture")
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let key = prepare_text(text)?;
        self.vectors.get(&key).cloned().ok_or_else(|| {
            RetrievalError::ProviderUnavailable(alloc::format!("no fixture vector for {key:?}"))
        })
    }
}

/// Basis vector `e_axis` of the given dimension; handy for constructing
/// exactly-orthogonal fixtures.
pub fn basis_vector(dimension: usize, axis: usize) -> Vec<f64> {
    let mut v = alloc::vec![0.0; dimension];
    v[axis] = 1.0;
    v
}

/// A vector whose cosine against `e_0` is `target` (up to one ulp): the
/// planted similarity construction used by threshold fixtures.
pub fn planted_similarity_vector(dimension: usize, target: f64) -> Vec<f64> {
    assert!(dimension >= 2 && target.abs() < 1.0);
    let mut v = alloc::vec![0.0; dimension];
    v[0] = target;
    v[1] = math::sqrt(1.0 - target * target);
    v
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;
    use alloc::vec::Vec;

    use crate::corpus::{Document, Passage};

    pub(crate) fn doc_with_bodies(doc_id: &str, bodies: &[&str]) -> Document {
        let passages = bodies
            .iter()
            .enumerate()
            .map(|(i, body)| Passage {
                passage_id: i,
                section_name: format!("S{}", i),
                body: body.to_string(),
                token_estimate: crate::corpus::estimate_tokens(body),
            })
            .collect();
        Document {
            doc_id: doc_id.into(),
            topic: doc_id.into(),
            abstract_text: "abstract".into(),
            topic_group: "T".into(),
            inbound_citations: 0,
            outbound_references: 0,
            passages,
        }
    }

    /// Fixture reproducing the worked threshold example: one query with
    /// planted similarities {0.697, 0.628, 0.600} against three passages.
    /// The lowest is planted a hair above 0.600 so the strict comparison at
    /// theta = 0.60 keeps it, while staying within 1e-9 of the nominal value.
    pub(crate) fn threshold_fixture() -> (Document, FixtureEmbedder, &'static str) {
        let query = "Maserati MC12 0-60 mph acceleration time and curb weight";
        let bodies = [
            "The car accelerates from 0 to 100 km/h in 3.8 seconds.",
            "The body is a two-door coupe with a targa top roof.",
            "The engine is a 5,998 cc V12 producing 630 PS.",
        ];
        let doc = doc_with_bodies("mc12", &bodies);
        let mut embedder = FixtureEmbedder::new();
        let dim = 8;
        embedder
            .insert(query, basis_vector(dim, 0))
            .unwrap();
        for (body, sim) in bodies.iter().zip([0.697, 0.628, 0.600 + 1e-10]) {
            embedder
                .insert(body, planted_similarity_vector(dim, sim))
                .unwrap();
        }
        (doc, embedder, query)
    }

    #[test]
    fn deterministic_embedder_is_deterministic() {
        let embedder = DeterministicEmbedder::new(7);
        let a = embedder.embed("the quick brown fox").unwrap();
        let b = embedder.embed("the quick brown fox").unwrap();
        assert_eq!(a, b);

        let again = DeterministicEmbedder::new(7);
        assert_eq!(again.embed("the quick brown fox").unwrap(), a);

        let other_seed = DeterministicEmbedder::new(8);
        assert_ne!(other_seed.embed("the quick brown fox").unwrap(), a);
    }

    #[test]
    fn deterministic_embedder_yields_unit_vectors() {
        let embedder = DeterministicEmbedder::new(3);
        let v = embedder.embed("any text at all").unwrap();
        assert_eq!(v.dimension(), DEFAULT_TEST_DIMENSION);
        assert!((v.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distinct_texts_are_not_parallel() {
        let embedder = DeterministicEmbedder::new(3);
        let a = embedder.embed("alpha").unwrap();
        let b = embedder.embed("beta").unwrap();
        // Oracle: direct dot product of the unit vectors.
        let dot: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x * y)
            .sum();
        assert!(dot < 1.0 - 1e-6);
        assert!((cosine_similarity(&a, &b) - dot).abs() < 1e-12);
    }

    #[test]
    fn identical_text_has_similarity_one() {
        let embedder = DeterministicEmbedder::new(3);
        let a = embedder.embed("same words").unwrap();
        let b = embedder.embed("same  words ").unwrap();
        assert!((cosine_similarity(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_rejected() {
        let embedder = DeterministicEmbedder::new(3);
        assert_eq!(
            embed_text("   \n", &embedder),
            Err(RetrievalError::EmptyText)
        );
        assert_eq!(embedder.embed(""), Err(RetrievalError::EmptyText));
    }

    #[test]
    fn zero_vectors_are_rejected_at_construction() {
        assert_eq!(
            EmbeddingVector::new(vec![0.0, 0.0]),
            Err(RetrievalError::ZeroVector)
        );
        assert_eq!(EmbeddingVector::new(vec![]), Err(RetrievalError::ZeroVector));
        assert_eq!(
            EmbeddingVector::new(vec![f64::NAN]),
            Err(RetrievalError::NonFiniteValue)
        );
    }

    #[test]
    fn threshold_fixture_counts_match_worked_example() {
        let (doc, embedder, query) = threshold_fixture();
        let expectations = [(0.60, 3usize), (0.65, 1), (0.70, 0)];
        for (theta, count) in expectations {
            let index = build_index(&doc, &embedder, theta).unwrap();
            let hits = retrieve(&index, query, &embedder).unwrap();
            assert_eq!(hits.len(), count, "theta = {theta}");
        }
        let index = build_index(&doc, &embedder, 0.60).unwrap();
        let hits = retrieve(&index, query, &embedder).unwrap();
        let sims: Vec<f64> = hits.iter().map(|h| h.similarity).collect();
        assert!((sims[0] - 0.697).abs() < 1e-9);
        assert!((sims[1] - 0.628).abs() < 1e-9);
        assert!((sims[2] - 0.600).abs() < 1e-9);
        assert_eq!(
            hits.iter().map(|h| h.passage_id).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn exact_threshold_is_excluded() {
        // Query [3,4] against passage e0: cosine is exactly 3/5 = 0.6, which
        // must NOT be retrieved at theta = 0.6 (strict inequality).
        let doc = doc_with_bodies("d", &["the only passage"]);
        let mut embedder = FixtureEmbedder::new();
        embedder.insert("the only passage", vec![1.0, 0.0]).unwrap();
        embedder.insert("boundary query", vec![3.0, 4.0]).unwrap();

        let index = build_index(&doc, &embedder, 0.6).unwrap();
        let hits = retrieve(&index, "boundary query", &embedder).unwrap();
        assert!(hits.is_empty());

        let index = build_index(&doc, &embedder, 0.59).unwrap();
        let hits = retrieve(&index, "boundary query", &embedder).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].similarity, 0.6);
    }

    #[test]
    fn verbatim_body_query_retrieves_its_passage_with_similarity_one() {
        let embedder = DeterministicEmbedder::new(11);
        let doc = doc_with_bodies("d", &["first passage text", "second passage text"]);
        let index = build_index(&doc, &embedder, DEFAULT_THETA).unwrap();
        let hits = retrieve(&index, "second passage text", &embedder).unwrap();
        assert_eq!(hits[0].passage_id, 1);
        assert!((hits[0].similarity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_query_yields_empty_observation() {
        let mut embedder = FixtureEmbedder::new();
        let dim = 4;
        embedder.insert("p one", basis_vector(dim, 0)).unwrap();
        embedder.insert("p two", basis_vector(dim, 1)).unwrap();
        embedder.insert("outside query", basis_vector(dim, 3)).unwrap();
        let doc = doc_with_bodies("d", &["p one", "p two"]);
        let index = build_index(&doc, &embedder, DEFAULT_THETA).unwrap();
        let hits = retrieve(&index, "outside query", &embedder).unwrap();
        // Oracle: every dot product is exactly zero by construction.
        assert!(hits.is_empty());
    }

    #[test]
    fn build_index_has_one_entry_per_passage() {
        let embedder = DeterministicEmbedder::with_dimension(5, 32);
        let bodies: Vec<String> = (0..46).map(|i| format!("passage number {i}")).collect();
        let refs: Vec<&str> = bodies.iter().map(|s| s.as_str()).collect();
        let doc = doc_with_bodies("d", &refs);
        let index = build_index(&doc, &embedder, DEFAULT_THETA).unwrap();
        assert_eq!(index.len(), 46);
    }

    #[test]
    fn build_index_rejects_out_of_range_theta() {
        let embedder = DeterministicEmbedder::new(1);
        let doc = doc_with_bodies("d", &["body"]);
        assert_eq!(
            build_index(&doc, &embedder, 1.5).unwrap_err(),
            RetrievalError::InvalidTheta(1.5)
        );
        assert_eq!(
            build_index(&doc, &embedder, 0.0).unwrap_err(),
            RetrievalError::InvalidTheta(0.0)
        );
    }

    #[test]
    fn ties_break_by_ascending_passage_id() {
        let mut embedder = FixtureEmbedder::new();
        let v = planted_similarity_vector(4, 0.9);
        embedder.insert("a", v.clone()).unwrap();
        embedder.insert("b", v.clone()).unwrap();
        embedder.insert("q", basis_vector(4, 0)).unwrap();
        let doc = doc_with_bodies("d", &["a", "b"]);
        let index = build_index(&doc, &embedder, 0.5).unwrap();
        let hits = retrieve(&index, "q", &embedder).unwrap();
        assert_eq!(
            hits.iter().map(|h| h.passage_id).collect::<Vec<_>>(),
            vec![0, 1]
        );
    }
}
