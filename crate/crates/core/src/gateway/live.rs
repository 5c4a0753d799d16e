//! HTTP chat-completion backend.

use serde_json::{json, Value};

use super::{Backend, BackendError, GatewayError, ModelEndpointConfig};
use crate::prompt::PromptBundle;

const BODY_EXCERPT: usize = 500;

pub struct LiveBackend {
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend").finish_non_exhaustive()
    }
}

impl LiveBackend {
    /// Reads the bearer token from the variable named by
    /// `config.api_key_env_var`.
    pub fn from_env(config: &ModelEndpointConfig) -> Result<Self, GatewayError> {
        let key = std::env::var(&config.api_key_env_var).map_err(|_| {
            GatewayError::Config(format!(
                "environment variable {} is not set",
                config.api_key_env_var
            ))
        })?;
        Ok(Self::with_key(config, key))
    }

    pub fn with_key(config: &ModelEndpointConfig, api_key: String) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(config.request_timeout())
            .build();
        Self { api_key, agent }
    }
}

fn excerpt(s: &str) -> String {
    s.chars().take(BODY_EXCERPT).collect()
}

fn is_retryable(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

pub fn request_body(bundle: &PromptBundle, config: &ModelEndpointConfig) -> Value {
    json!({
        "model": config.model_name,
        "messages": [{"role": "user", "content": bundle.rendered_text}],
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    })
}

/// Extracts `choices[0].message.content` from a response body.
pub fn response_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.pointer("/choices/0/message/content")?
        .as_str()
        .map(str::to_string)
}

impl Backend for LiveBackend {
    fn send(&self, bundle: &PromptBundle, config: &ModelEndpointConfig) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        let result = self
            .agent
            .post(&url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .set("Content-Type", "application/json")
            .send_string(&request_body(bundle, config).to_string());
        match result {
            Ok(resp) => {
                let body = resp
                    .into_string()
                    .map_err(|e| BackendError::Retryable(format!("reading body: {e}")))?;
                response_content(&body).ok_or_else(|| BackendError::Endpoint {
                    status: 200,
                    body: excerpt(&body),
                })
            }
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                if is_retryable(status) {
                    Err(BackendError::Retryable(format!("HTTP {status}: {}", excerpt(&body))))
                } else {
                    Err(BackendError::Endpoint {
                        status,
                        body: excerpt(&body),
                    })
                }
            }
            Err(ureq::Error::Transport(t)) => Err(BackendError::Retryable(t.to_string())),
        }
    }

    fn is_network(&self) -> bool {
        true
    }
}
