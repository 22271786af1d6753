//! Chat and embedding provider abstraction.
//!
//! Every generation or embedding call in the crate goes through the two
//! traits here. [`mock`] supplies the deterministic offline backend used
//! by all tests and examples; [`remote`] speaks the common
//! chat-completions / embeddings HTTP shape.

pub mod mock;
pub mod remote;

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use crate::error::{Error, Result};

/// One chat-completion call.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_name: String,
}

impl GenerationRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        GenerationRequest {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: 0.0,
            max_tokens: 2048,
            model_name: "default".to_string(),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_model(mut self, model_name: impl Into<String>) -> Self {
        self.model_name = model_name.into();
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(Error::Config("generation request with blank prompt".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// A dense text embedding. Width is implied by `values`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("embedding contains non-finite entry".into()));
        }
        Ok(())
    }

    pub fn dot(&self, other: &EmbeddingVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Connection and throttling settings for a provider backend.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
#[serde(default)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub max_concurrent: usize,
    pub retry_limit: u32,
    pub timeout_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: "http://localhost:8000/v1".to_string(),
            api_key_env: "REBUTTAL_API_KEY".to_string(),
            max_concurrent: 4,
            retry_limit: 3,
            timeout_ms: 60_000,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_concurrent == 0 {
            return Err(Error::Config("max_concurrent must be >= 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout_ms must be >= 1".into()));
        }
        Ok(())
    }
}

pub trait ChatProvider: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String>;
}

pub trait EmbedProvider: Send + Sync {
    /// Width of every vector this provider returns.
    fn dim(&self) -> usize;

    /// Encoder name, used to key on-disk index caches.
    fn name(&self) -> String {
        format!("embed-{}d", self.dim())
    }

    /// Largest batch the backend accepts in one call.
    fn batch_limit(&self) -> usize {
        64
    }

    /// Embeds at most `batch_limit` texts, one vector per text, in order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    /// Embeds any number of texts by chunking into backend-sized batches.
    /// Order-preserving; every output has width `dim()`.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_limit().max(1)) {
            let vectors = self.embed_batch(chunk)?;
            if vectors.len() != chunk.len() {
                return Err(Error::provider(format!(
                    "embedding backend returned {} vectors for {} inputs",
                    vectors.len(),
                    chunk.len()
                )));
            }
            for v in &vectors {
                if v.dim() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim(),
                        actual: v.dim(),
                    });
                }
            }
            out.extend(vectors);
        }
        Ok(out)
    }

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        let out = self.embed(std::slice::from_ref(&text.to_string()))?;
        out.into_iter()
            .next()
            .ok_or_else(|| Error::provider("embedding backend returned nothing"))
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for &P {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        (**self).generate(req)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        (**self).generate(req)
    }
}

/// Counting semaphore; `std::sync` has no native one.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.semaphore.permits.lock().unwrap() += 1;
        self.semaphore.available.notify_one();
    }
}

/// Retry schedule for transient failures: exponential backoff with
/// deterministic per-attempt jitter.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub retry_limit: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retry_limit: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): base * 2^(attempt-1),
    /// capped, with up to 25% deterministic jitter.
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << (attempt - 1).min(16));
        let capped = exp.min(self.max_delay_ms);
        let jitter = capped / 4 * (attempt as u64 % 2);
        Duration::from_millis(capped + jitter)
    }
}

/// Wraps a provider with a concurrency cap and transient-failure retries.
pub struct Limited<P> {
    inner: P,
    semaphore: Semaphore,
    retry: RetryPolicy,
}

impl<P> Limited<P> {
    pub fn new(inner: P, max_concurrent: usize, retry: RetryPolicy) -> Self {
        Limited {
            inner,
            semaphore: Semaphore::new(max_concurrent.max(1)),
            retry,
        }
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T>) -> Result<T> {
        let mut attempt = 0u32;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt < self.retry.retry_limit => {
                    attempt += 1;
                    log::warn!("transient provider failure, retry {attempt}: {e}");
                    std::thread::sleep(self.retry.delay(attempt));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl<P: ChatProvider> ChatProvider for Limited<P> {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        let _permit = self.semaphore.acquire();
        self.with_retries(|| self.inner.generate(req))
    }
}

impl<P: EmbedProvider> EmbedProvider for Limited<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn name(&self) -> String {
        self.inner.name()
    }

    fn batch_limit(&self) -> usize {
        self.inner.batch_limit()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let _permit = self.semaphore.acquire();
        self.with_retries(|| self.inner.embed_batch(texts))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::providers::mock::ScriptedChat;

    fn fast_retry(limit: u32) -> RetryPolicy {
        RetryPolicy {
            retry_limit: limit,
            base_delay_ms: 1,
            max_delay_ms: 4,
        }
    }

    fn req() -> GenerationRequest {
        GenerationRequest::new("sys", "user")
    }

    #[test]
    fn transient_failures_retried_to_success() {
        let chat = Limited::new(
            ScriptedChat::new(vec![
                Err(Error::provider_transient("hiccup")),
                Err(Error::provider_transient("hiccup")),
                Ok("ok".into()),
            ]),
            1,
            fast_retry(3),
        );
        assert_eq!(chat.generate(&req()).unwrap(), "ok");
        assert_eq!(chat.inner.calls(), 3);
    }

    #[test]
    fn zero_retry_limit_fails_immediately() {
        let chat = Limited::new(
            ScriptedChat::new(vec![Err(Error::provider_transient("hiccup")), Ok("ok".into())]),
            1,
            fast_retry(0),
        );
        assert!(chat.generate(&req()).is_err());
        assert_eq!(chat.inner.calls(), 1);
    }

    #[test]
    fn permanent_failures_not_retried() {
        let chat = Limited::new(
            ScriptedChat::new(vec![Err(Error::provider("bad key")), Ok("ok".into())]),
            1,
            fast_retry(3),
        );
        assert!(chat.generate(&req()).is_err());
        assert_eq!(chat.inner.calls(), 1);
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        struct SlowChat {
            in_flight: AtomicUsize,
            peak: AtomicUsize,
        }
        impl ChatProvider for SlowChat {
            fn generate(&self, _req: &GenerationRequest) -> Result<String> {
                let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                self.in_flight.fetch_sub(1, Ordering::SeqCst);
                Ok("ok".into())
            }
        }
        let chat = Limited::new(
            SlowChat {
                in_flight: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
            },
            2,
            fast_retry(0),
        );
        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| chat.generate(&req()).unwrap());
            }
        });
        assert!(chat.inner.peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn request_validation() {
        assert!(GenerationRequest::new(" ", "user").validate().is_err());
        assert!(req().with_temperature(f64::NAN).validate().is_err());
        assert!(req().validate().is_ok());
    }

    #[test]
    fn backoff_delays_grow_and_cap() {
        let policy = RetryPolicy {
            retry_limit: 10,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        };
        assert!(policy.delay(1) >= Duration::from_millis(500));
        assert!(policy.delay(4) >= policy.delay(2));
        assert!(policy.delay(10) <= Duration::from_millis(10_000));
    }
}
