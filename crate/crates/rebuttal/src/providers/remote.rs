//! HTTP provider speaking the common chat-completions / embeddings shape.
//!
//! `POST {base_url}/chat/completions` and `POST {base_url}/embeddings`,
//! bearer token read from the environment variable named in
//! [`ProviderConfig::api_key_env`]. Payload construction and response
//! parsing are free functions so they stay testable without a server.

use serde_json::{json, Value};

use super::{ChatProvider, EmbedProvider, EmbeddingVector, GenerationRequest, ProviderConfig};
use crate::error::{Error, Result};

pub struct RemoteProvider {
    config: ProviderConfig,
    embed_model: String,
    embed_dim: usize,
    embed_batch_limit: usize,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    pub fn new(config: ProviderConfig, embed_model: impl Into<String>, embed_dim: usize) -> Result<Self> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::provider(format!("http client init: {e}")))?;
        Ok(RemoteProvider {
            config,
            embed_model: embed_model.into(),
            embed_dim,
            embed_batch_limit: 64,
            client,
        })
    }

    fn api_key(&self) -> Result<String> {
        std::env::var(&self.config.api_key_env).map_err(|_| {
            Error::Config(format!(
                "environment variable {} not set",
                self.config.api_key_env
            ))
        })
    }

    fn post(&self, path: &str, payload: &Value) -> Result<Value> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let response = self
            .client
            .post(&url)
            .bearer_auth(self.api_key()?)
            .json(payload)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Error::Timeout(self.config.timeout_ms)
                } else {
                    Error::provider_transient(format!("request to {url}: {e}"))
                }
            })?;
        let status = response.status();
        let body: Value = response
            .json()
            .map_err(|e| Error::provider(format!("non-JSON response from {url}: {e}")))?;
        if !status.is_success() {
            let message = format!("{url} returned {status}: {body}");
            // Rate limits and server faults are worth retrying; auth and
            // validation failures are not.
            return Err(if status.as_u16() == 429 || status.is_server_error() {
                Error::provider_transient(message)
            } else {
                Error::provider(message)
            });
        }
        Ok(body)
    }
}

pub fn chat_payload(req: &GenerationRequest) -> Value {
    json!({
        "model": req.model_name,
        "messages": [
            {"role": "system", "content": req.system_prompt},
            {"role": "user", "content": req.user_prompt},
        ],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    })
}

pub fn parse_chat_response(body: &Value) -> Result<String> {
    body["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::provider(format!("malformed chat response: {body}")))
}

pub fn embeddings_payload(model: &str, texts: &[String]) -> Value {
    json!({ "model": model, "input": texts })
}

pub fn parse_embeddings_response(
    body: &Value,
    expected_dim: usize,
    expected_count: usize,
) -> Result<Vec<EmbeddingVector>> {
    let data = body["data"]
        .as_array()
        .ok_or_else(|| Error::provider(format!("malformed embeddings response: {body}")))?;
    if data.len() != expected_count {
        return Err(Error::provider(format!(
            "embeddings response has {} rows, expected {expected_count}",
            data.len()
        )));
    }
    // Rows may arrive out of order; "index" restores input order.
    let mut out: Vec<Option<EmbeddingVector>> = vec![None; expected_count];
    for row in data {
        let index = row["index"]
            .as_u64()
            .ok_or_else(|| Error::provider("embeddings row missing index"))? as usize;
        let values: Vec<f64> = row["embedding"]
            .as_array()
            .ok_or_else(|| Error::provider("embeddings row missing embedding"))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| Error::provider("non-numeric embedding entry")))
            .collect::<Result<_>>()?;
        if values.len() != expected_dim {
            return Err(Error::DimensionMismatch {
                expected: expected_dim,
                actual: values.len(),
            });
        }
        if index >= expected_count {
            return Err(Error::IndexOutOfRange {
                index,
                len: expected_count,
            });
        }
        out[index] = Some(EmbeddingVector::new(values));
    }
    out.into_iter()
        .map(|v| v.ok_or_else(|| Error::provider("embeddings response skipped an index")))
        .collect()
}

impl ChatProvider for RemoteProvider {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        req.validate()?;
        let body = self.post("chat/completions", &chat_payload(req))?;
        parse_chat_response(&body)
    }
}

impl EmbedProvider for RemoteProvider {
    fn dim(&self) -> usize {
        self.embed_dim
    }

    fn name(&self) -> String {
        self.embed_model.clone()
    }

    fn batch_limit(&self) -> usize {
        self.embed_batch_limit
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let body = self.post("embeddings", &embeddings_payload(&self.embed_model, texts))?;
        parse_embeddings_response(&body, self.embed_dim, texts.len())
    }
}
