//! Remote chat adapter: the LLM-backed agent and completeness estimator.
//!
//! Wire contract: `POST {base}/chat/completions` with model, messages,
//! temperature, max_tokens, and (when structured output is on) a JSON-schema
//! response format. Content-filter refusals are not failures — they come
//! back as blocked batches so the episode keeps its budget accounting.
//! Token usage is read from the response `usage` block; absent fields count
//! as zero with a warning.

use serde::{Deserialize, Serialize};

use infoseek_core::agents::{
    parse_freeform_queries, parse_structured_queries, Agent, AgentConfig, AgentError, QueryBatch,
    TokenUsage,
};
use infoseek_core::belief::{render_completeness_prompt, BeliefText, PromptPair};
use infoseek_core::calibration::{parse_completeness_reply, CompletenessEstimator, EstimatorError};
use infoseek_core::corpus::Document;

use crate::http::{api_key_from_env, post_json_with_retries, HttpError, RetryPolicy};

pub const DEFAULT_CHAT_API_KEY_ENV: &str = "INFOSEEK_API_KEY";

/// Everything needed to talk to one chat endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatProviderConfig {
    pub agent: AgentConfig,
    pub api_key_env: String,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl Default for ChatProviderConfig {
    fn default() -> Self {
        ChatProviderConfig {
            agent: AgentConfig::default(),
            api_key_env: DEFAULT_CHAT_API_KEY_ENV.into(),
            retry: RetryPolicy::default(),
        }
    }
}

/// The outcome of one chat call.
#[derive(Debug, Clone)]
pub struct ChatOutcome {
    pub content: String,
    pub usage: TokenUsage,
    pub blocked: bool,
}

#[derive(Clone)]
pub struct ChatClient {
    config: ChatProviderConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<UsageBlock>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBlock {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
    #[serde(default)]
    reasoning_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens_details: Option<CompletionDetails>,
}

#[derive(Deserialize)]
struct CompletionDetails {
    #[serde(default)]
    reasoning_tokens: Option<u64>,
}

fn looks_like_content_filter(text: &str) -> bool {
    let lower = text.to_ascii_lowercase();
    lower.contains("inappropriate content")
        || lower.contains("content_filter")
        || lower.contains("data_inspection_failed")
}

impl ChatClient {
    pub fn new(config: ChatProviderConfig) -> Result<Self, AgentError> {
        if config.agent.endpoint_url.is_empty() || config.agent.model_name.is_empty() {
            return Err(AgentError::InvalidConfig(
                "chat provider needs endpoint_url and model_name".into(),
            ));
        }
        if config.agent.temperature < 0.0 {
            return Err(AgentError::InvalidConfig(format!(
                "temperature must be nonnegative, got {}",
                config.agent.temperature
            )));
        }
        let api_key = api_key_from_env(&config.api_key_env);
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| AgentError::ProviderUnavailable(e.to_string()))?;
        Ok(ChatClient {
            config,
            client,
            api_key,
        })
    }

    pub fn agent_config(&self) -> &AgentConfig {
        &self.config.agent
    }

    /// One chat completion. Content-filter refusals (an error body naming
    /// inappropriate content, or a `content_filter` finish reason) come back
    /// as a blocked outcome instead of an error.
    pub fn chat(
        &self,
        prompt: &PromptPair,
        response_format: Option<serde_json::Value>,
    ) -> Result<ChatOutcome, AgentError> {
        let agent = &self.config.agent;
        let url = format!(
            "{}/chat/completions",
            agent.endpoint_url.trim_end_matches('/')
        );
        let mut body = serde_json::json!({
            "model": agent.model_name,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": agent.temperature,
            "max_tokens": agent.max_output_tokens,
        });
        if let Some(format) = response_format {
            body["response_format"] = format;
        }
        if let Some(effort) = &agent.reasoning_effort {
            body["reasoning_effort"] = serde_json::Value::String(effort.clone());
        }

        let response = match post_json_with_retries(
            &self.client,
            &url,
            self.api_key.as_deref(),
            &body,
            &self.config.retry,
        ) {
            Ok(response) => response,
            Err(HttpError::Status { status, body }) if looks_like_content_filter(&body) => {
                return Ok(ChatOutcome {
                    content: format!("provider refused ({status}): {body}"),
                    usage: TokenUsage::default(),
                    blocked: true,
                });
            }
            Err(e) => return Err(AgentError::ProviderUnavailable(e.to_string())),
        };

        let parsed: ChatResponse = serde_json::from_value(response)
            .map_err(|e| AgentError::UnparseableOutput(format!("bad response shape: {e}")))?;
        let usage = match parsed.usage {
            Some(block) => TokenUsage {
                prompt_tokens: block.prompt_tokens.unwrap_or(0),
                completion_tokens: block.completion_tokens.unwrap_or(0),
                reasoning_tokens: block
                    .completion_tokens_details
                    .and_then(|d| d.reasoning_tokens)
                    .or(block.reasoning_tokens)
                    .unwrap_or(0),
            },
            None => {
                log::warn!("chat response carried no usage block; counting zero tokens");
                TokenUsage::default()
            }
        };
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| AgentError::UnparseableOutput("response had no choices".into()))?;
        let blocked = choice
            .finish_reason
            .as_deref()
            .is_some_and(|r| r == "content_filter");
        Ok(ChatOutcome {
            content: choice.message.content.unwrap_or_default(),
            usage,
            blocked,
        })
    }
}

fn queries_response_format() -> serde_json::Value {
    serde_json::json!({
        "type": "json_schema",
        "json_schema": {
            "name": "query_batch",
            "schema": {
                "type": "object",
                "properties": {
                    "queries": {"type": "array", "items": {"type": "string"}}
                },
                "required": ["queries"],
                "additionalProperties": false
            },
            "strict": true
        }
    })
}

fn completeness_response_format() -> serde_json::Value {
    serde_json::json!({
        "type": "json_schema",
        "json_schema": {
            "name": "completeness_estimate",
            "schema": {
                "type": "object",
                "properties": {
                    "predicted_completeness": {"type": "number"}
                },
                "required": ["predicted_completeness"],
                "additionalProperties": false
            },
            "strict": true
        }
    })
}

/// Chat-backed query generator.
pub struct LlmAgent {
    client: ChatClient,
}

impl LlmAgent {
    pub fn new(client: ChatClient) -> Self {
        LlmAgent { client }
    }
}

impl Agent for LlmAgent {
    fn generate_queries(
        &mut self,
        prompt: &PromptPair,
        _num_queries: usize,
    ) -> Result<QueryBatch, AgentError> {
        let structured = self.client.agent_config().structured_output;
        let format = structured.then(queries_response_format);
        let outcome = self.client.chat(prompt, format)?;
        if outcome.blocked {
            let mut batch = QueryBatch::blocked(outcome.content);
            batch.usage = outcome.usage;
            return Ok(batch);
        }
        let queries = if structured {
            parse_structured_queries(&outcome.content)?
        } else {
            let queries = parse_freeform_queries(&outcome.content);
            if queries.is_empty() {
                return Err(AgentError::UnparseableOutput(outcome.content));
            }
            queries
        };
        Ok(QueryBatch {
            queries,
            raw_model_output: outcome.content,
            blocked: false,
            usage: outcome.usage,
        })
    }
}

/// Chat-backed completeness estimator. Always prompts over the deduplicated
/// rendering; replies must carry `predicted_completeness`.
pub struct LlmEstimator {
    client: ChatClient,
    last_usage: TokenUsage,
}

impl LlmEstimator {
    pub fn new(client: ChatClient) -> Self {
        LlmEstimator {
            client,
            last_usage: TokenUsage::default(),
        }
    }
}

impl CompletenessEstimator for LlmEstimator {
    fn estimate(&mut self, belief: &BeliefText, doc: &Document) -> Result<f64, EstimatorError> {
        let prompt = render_completeness_prompt(belief, doc)?;
        let format = self
            .client
            .agent_config()
            .structured_output
            .then(completeness_response_format);
        let outcome = self.client.chat(&prompt, format).map_err(|e| match e {
            AgentError::ProviderUnavailable(msg) => EstimatorError::ProviderUnavailable(msg),
            other => EstimatorError::UnparseableOutput(other.to_string()),
        })?;
        if outcome.blocked {
            return Err(EstimatorError::ProviderUnavailable(
                "estimator call hit a content filter".into(),
            ));
        }
        self.last_usage = outcome.usage;
        parse_completeness_reply(&outcome.content)
    }

    fn last_usage(&self) -> TokenUsage {
        self.last_usage
    }
}
