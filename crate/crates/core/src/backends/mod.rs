//! Model completion backends.
//!
//! Three implementations share the [`Backend`] trait: an HTTP client for the
//! chat-completions wire format, a seeded mock model with configurable
//! stereotype rates, and a replay backend serving responses recorded in a run
//! log.

#[cfg(feature = "http")]
mod http;
mod mock;
mod replay;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::Trial;

#[cfg(feature = "http")]
pub use http::{HttpBackend, RetryPolicy};
pub use mock::{mock_complete, MockBackend, MockSpec};
pub use replay::{record_replay, ReplayBackend};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("no recorded transcript for trial {trial_id} attempt {attempt}")]
    MissingTranscript { trial_id: String, attempt: u32 },
    #[error("endpoint misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    Http,
    Mock,
    Replay,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    1000
}

/// Where completions come from. Credentials are referenced by environment
/// variable name only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub kind: EndpointKind,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_source: Option<PathBuf>,
}

impl ModelEndpoint {
    fn base(kind: EndpointKind, model_name: &str) -> Self {
        ModelEndpoint {
            kind,
            model_name: model_name.to_string(),
            base_url: None,
            auth_env: None,
            request_timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_base_ms: default_backoff_ms(),
            mock: None,
            replay_source: None,
        }
    }

    pub fn mock(model_name: &str, spec: MockSpec) -> Self {
        ModelEndpoint {
            mock: Some(spec),
            ..Self::base(EndpointKind::Mock, model_name)
        }
    }

    pub fn http(model_name: &str, base_url: &str, auth_env: Option<&str>) -> Self {
        ModelEndpoint {
            base_url: Some(base_url.to_string()),
            auth_env: auth_env.map(str::to_string),
            ..Self::base(EndpointKind::Http, model_name)
        }
    }

    pub fn replay(model_name: &str, source: impl Into<PathBuf>) -> Self {
        ModelEndpoint {
            replay_source: Some(source.into()),
            ..Self::base(EndpointKind::Replay, model_name)
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::Config(m.to_string()));
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty");
        }
        match self.kind {
            EndpointKind::Http => {
                if self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                    return bad("http endpoint needs base_url");
                }
            }
            EndpointKind::Mock => match &self.mock {
                None => return bad("mock endpoint needs a [mock] table"),
                Some(spec) => spec.validate()?,
            },
            EndpointKind::Replay => {
                if self.replay_source.is_none() {
                    return bad("replay endpoint needs replay_source");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

/// One request/response pair. The response is stored verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response: String,
    pub latency_ms: u64,
    /// Transport attempts used, counting the first.
    pub attempts: u32,
    pub timestamp_ms: u64,
}

/// A completion call for one trial. `attempt` is 0 for the first prompt and
/// increments for each format reminder.
pub struct CompletionRequest<'a> {
    pub trial: &'a Trial,
    pub attempt: u32,
    pub messages: Vec<Message>,
    pub temperature: f64,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<ChatExchange, BackendError>;
}

/// Milliseconds since the Unix epoch, or 0 where no clock is available.
pub fn now_ms() -> u64 {
    #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
    {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
    #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
    {
        0
    }
}

/// Opens a backend for `endpoint`.
pub fn connect(endpoint: &ModelEndpoint) -> Result<Box<dyn Backend>, BackendError> {
    endpoint.validate()?;
    match endpoint.kind {
        EndpointKind::Mock => Ok(Box::new(MockBackend::new(
            &endpoint.model_name,
            endpoint.mock.clone().expect("validated"),
        ))),
        EndpointKind::Replay => {
            let path = endpoint.replay_source.as_ref().expect("validated");
            Ok(Box::new(ReplayBackend::from_log_file(&endpoint.model_name, path)?))
        }
        #[cfg(feature = "http")]
        EndpointKind::Http => Ok(Box::new(HttpBackend::new(endpoint)?)),
        #[cfg(not(feature = "http"))]
        EndpointKind::Http => Err(BackendError::Config(
            "built without the `http` feature".into(),
        )),
    }
}
