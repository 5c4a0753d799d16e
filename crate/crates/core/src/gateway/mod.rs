//! Completion dispatch with an on-disk response cache.
//!
//! [`LlmGateway`] hashes each prompt, serves repeats from the cache and sends
//! the rest to a [`Backend`]: the HTTP chat-completion client in [`live`] or
//! the offline threshold oracle in [`mock`].

mod cache;
pub mod live;
pub mod mock;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
pub use live::LiveBackend;
pub use mock::{mock_oracle_complete, mock_oracle_response, MockOracle, OracleConfig, OracleRule, MOCK_MODEL_NAME};

use crate::prompt::PromptBundle;

pub const DEFAULT_API_KEY_ENV_VAR: &str = "LLM_API_KEY";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("mock oracle: {0}")]
    Oracle(String),
    #[error("gateway config: {0}")]
    Config(String),
    #[error("response cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env_var: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout_s: f64,
    pub max_retries: usize,
    pub retry_base_delay_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ModelEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4o".into(),
            api_key_env_var: DEFAULT_API_KEY_ENV_VAR.into(),
            temperature: 0.0,
            max_output_tokens: 512,
            request_timeout_s: 60.0,
            max_retries: 3,
            retry_base_delay_ms: 500,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

impl ModelEndpointConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::Config(m.to_string()));
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be >= 0");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive");
        }
        if !(self.request_timeout_s.is_finite() && self.request_timeout_s > 0.0) {
            return bad("request_timeout_s must be positive");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be positive");
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name must not be empty");
        }
        if self.api_key_env_var.trim().is_empty() {
            return bad("api_key_env_var must name an environment variable");
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransportStatus {
    Ok,
    Retried,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_hash: String,
    pub response_text: String,
    pub latency_ms: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub transport_status: TransportStatus,
}

/// sha256 (hex) of the canonical JSON of the prompt text, model name and
/// temperature.
pub fn prompt_hash(rendered_text: &str, model_name: &str, temperature: f64) -> String {
    // serde_json's default map is ordered, so key order is fixed.
    let canonical = serde_json::json!({
        "model_name": model_name,
        "rendered_text": rendered_text,
        "temperature": temperature,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Failure of a single backend attempt.
#[derive(Debug)]
pub enum BackendError {
    /// Worth retrying: connection problems, timeouts, 408, 429 and 5xx.
    Retryable(String),
    Endpoint { status: u16, body: String },
    Oracle(String),
}

pub trait Backend: Send + Sync {
    fn send(&self, bundle: &PromptBundle, config: &ModelEndpointConfig) -> Result<String, BackendError>;

    /// Whether `send` talks to the network.
    fn is_network(&self) -> bool;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub cache_hits: usize,
    pub backend_calls: usize,
    pub network_requests: usize,
}

#[derive(Default)]
struct Counters {
    cache_hits: AtomicUsize,
    backend_calls: AtomicUsize,
    network_requests: AtomicUsize,
}

pub struct LlmGateway {
    config: ModelEndpointConfig,
    backend: Box<dyn Backend>,
    cache: Option<ResponseCache>,
    counters: Counters,
    in_progress: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl LlmGateway {
    pub fn new(
        config: ModelEndpointConfig,
        backend: Box<dyn Backend>,
        cache: Option<ResponseCache>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Self {
            config,
            backend,
            cache,
            counters: Counters::default(),
            in_progress: Mutex::new(HashMap::new()),
        })
    }

    /// Gateway around the mock oracle. The model name is fixed so mock
    /// responses never share cache entries with a live model.
    pub fn mock(oracle: OracleConfig, cache: Option<ResponseCache>) -> Result<Self, GatewayError> {
        let config = ModelEndpointConfig {
            model_name: MOCK_MODEL_NAME.into(),
            ..Default::default()
        };
        Self::new(config, Box::new(MockOracle::new(oracle)), cache)
    }

    pub fn config(&self) -> &ModelEndpointConfig {
        &self.config
    }

    pub fn is_offline(&self) -> bool {
        !self.backend.is_network()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            cache_hits: self.counters.cache_hits.load(Ordering::SeqCst),
            backend_calls: self.counters.backend_calls.load(Ordering::SeqCst),
            network_requests: self.counters.network_requests.load(Ordering::SeqCst),
        }
    }

    pub fn hash_of(&self, bundle: &PromptBundle) -> String {
        prompt_hash(&bundle.rendered_text, &self.config.model_name, self.config.temperature)
    }

    /// Whether a response for `bundle` is already cached.
    pub fn is_cached(&self, bundle: &PromptBundle) -> bool {
        let hash = self.hash_of(bundle);
        self.cache.as_ref().is_some_and(|c| c.get(&hash).is_some())
    }

    pub fn complete(&self, bundle: &PromptBundle) -> Result<CompletionRecord, GatewayError> {
        let hash = self.hash_of(bundle);
        // One request per hash even when identical prompts race.
        let guard = {
            let mut map = self.in_progress.lock().unwrap();
            map.entry(hash.clone()).or_default().clone()
        };
        let _held = guard.lock().unwrap();

        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&hash)) {
            self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }

        let started = Instant::now();
        let mut attempt = 0;
        let response_text = loop {
            self.counters.backend_calls.fetch_add(1, Ordering::SeqCst);
            if self.backend.is_network() {
                self.counters.network_requests.fetch_add(1, Ordering::SeqCst);
            }
            match self.backend.send(bundle, &self.config) {
                Ok(text) => break text,
                Err(BackendError::Retryable(message)) => {
                    if attempt >= self.config.max_retries {
                        return Err(GatewayError::Transport {
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    let delay = self.config.retry_base_delay_ms.saturating_mul(1 << attempt.min(16));
                    tracing::warn!(attempt, delay_ms = delay, "retrying completion: {message}");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(BackendError::Endpoint { status, body }) => {
                    return Err(GatewayError::Endpoint { status, body })
                }
                Err(BackendError::Oracle(m)) => return Err(GatewayError::Oracle(m)),
            }
        };
        let record = CompletionRecord {
            prompt_hash: hash,
            response_text,
            latency_ms: started.elapsed().as_millis() as u64,
            timestamp: now_millis(),
            transport_status: if attempt == 0 {
                TransportStatus::Ok
            } else {
                TransportStatus::Retried
            },
        };
        if let Some(cache) = &self.cache {
            cache.insert(&record)?;
        }
        Ok(record)
    }

    /// Completes every bundle with at most `max_in_flight` requests running
    /// at once. Results keep input order.
    pub fn complete_many(&self, bundles: &[PromptBundle]) -> Vec<Result<CompletionRecord, GatewayError>> {
        let workers = self.config.max_in_flight.min(bundles.len());
        if workers <= 1 {
            return bundles.iter().map(|b| self.complete(b)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<CompletionRecord, GatewayError>>>> =
            bundles.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(b) = bundles.get(i) else { break };
                    *slots[i].lock().unwrap() = Some(self.complete(b));
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every slot is filled"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_deterministic_and_input_sensitive() {
        let h = prompt_hash("abc", "m", 0.0);
        assert_eq!(h, prompt_hash("abc", "m", 0.0));
        assert_eq!(h.len(), 64);
        assert_ne!(h, prompt_hash("abd", "m", 0.0));
        assert_ne!(h, prompt_hash("abc", "n", 0.0));
        assert_ne!(h, prompt_hash("abc", "m", 0.5));
    }

    #[test]
    fn config_defaults() {
        let c = ModelEndpointConfig::default();
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.max_retries, 3);
        assert_eq!(c.api_key_env_var, "LLM_API_KEY");
        c.validate().unwrap();
        let c: ModelEndpointConfig = toml::from_str("model_name = \"x\"\ntemperature = 0.2").unwrap();
        assert_eq!(c.model_name, "x");
        assert_eq!(c.max_in_flight, DEFAULT_MAX_IN_FLIGHT);
        let bad = ModelEndpointConfig {
            temperature: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
