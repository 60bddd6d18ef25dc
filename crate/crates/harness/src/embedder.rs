//! Remote embedding provider speaking the de-facto embeddings endpoint
//! shape: `POST {base}/embeddings` with `{model, input: [text]}` returning
//! `{data: [{embedding: [...]}]}`.

use serde::{Deserialize, Serialize};

use infoseek_core::retrieval::{prepare_text, Embedder, EmbeddingVector, RetrievalError};

use crate::http::{api_key_from_env, post_json_with_retries, HttpError, RetryPolicy};

pub const DEFAULT_EMBEDDER_API_KEY_ENV: &str = "INFOSEEK_API_KEY";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    /// Endpoint base, e.g. `https://api.example.com/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl Default for RemoteEmbedderConfig {
    fn default() -> Self {
        RemoteEmbedderConfig {
            base_url: String::new(),
            model: String::new(),
            api_key_env: DEFAULT_EMBEDDER_API_KEY_ENV.into(),
            retry: RetryPolicy::default(),
        }
    }
}

pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Result<Self, RetrievalError> {
        if config.base_url.is_empty() || config.model.is_empty() {
            return Err(RetrievalError::ProviderUnavailable(
                "remote embedder needs base_url and model".into(),
            ));
        }
        let api_key = api_key_from_env(&config.api_key_env);
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| RetrievalError::ProviderUnavailable(e.to_string()))?;
        Ok(RemoteEmbedder {
            config,
            client,
            api_key,
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl Embedder for RemoteEmbedder {
    fn provider_id(&self) -> String {
        format!("remote:{}@{}", self.config.model, self.config.base_url)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let prepared = prepare_text(text)?;
        let url = format!("{}/embeddings", self.config.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.config.model,
            "input": [prepared],
        });
        let response = post_json_with_retries(
            &self.client,
            &url,
            self.api_key.as_deref(),
            &body,
            &self.config.retry,
        )
        .map_err(|e| match e {
            HttpError::Unavailable { .. } => RetrievalError::ProviderUnavailable(e.to_string()),
            HttpError::Status { status, body } => RetrievalError::ProviderUnavailable(format!(
                "embeddings endpoint rejected the request ({status}): {body}"
            )),
        })?;
        let parsed: EmbeddingResponse = serde_json::from_value(response)
            .map_err(|e| RetrievalError::ProviderUnavailable(format!("bad response shape: {e}")))?;
        let datum = parsed.data.into_iter().next().ok_or_else(|| {
            RetrievalError::ProviderUnavailable("embeddings response had no data".into())
        })?;
        EmbeddingVector::new(datum.embedding)
    }
}
