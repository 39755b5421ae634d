//! Blocking chat-completions client.
//!
//! `POST {base_url}/chat/completions` with `{model, messages, temperature}`;
//! the completion is read from `choices[0].message.content`. Transient
//! failures (connection errors, timeouts, 5xx) and 429s are retried with
//! exponential backoff plus jitter; a `Retry-After` header, when present,
//! sets the minimum wait.

use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::{json, Value};

use super::{now_ms, Backend, BackendError, ChatExchange, ChatRequest, CompletionRequest, ModelEndpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): base · 2^retry, ±25 % jitter.
    pub fn delay(&self, retry: u32) -> Duration {
        let base = self.base_delay.saturating_mul(1u32 << retry.min(16));
        let jitter = 0.75 + rand::rng().random::<f64>() * 0.5;
        base.mul_f64(jitter).min(self.max_delay)
    }
}

pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    token: Option<String>,
    retry: RetryPolicy,
}

enum Failure {
    Retryable { message: String, retry_after: Option<Duration>, rate_limited: bool },
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(endpoint: &ModelEndpoint) -> Result<Self, BackendError> {
        let base = endpoint
            .base_url
            .as_deref()
            .ok_or_else(|| BackendError::Config("http endpoint needs base_url".into()))?;
        let token = match &endpoint.auth_env {
            None => None,
            Some(var) => match std::env::var(var) {
                Ok(v) if !v.trim().is_empty() => Some(v),
                _ => {
                    return Err(BackendError::Auth(format!(
                        "environment variable {var} is not set"
                    )))
                }
            },
        };
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(endpoint.request_timeout_secs.max(1))))
            .http_status_as_error(false)
            .build();
        Ok(HttpBackend {
            agent: ureq::Agent::new_with_config(config),
            url: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: endpoint.model_name.clone(),
            token,
            retry: RetryPolicy {
                max_retries: endpoint.max_retries,
                base_delay: Duration::from_millis(endpoint.backoff_base_ms),
                ..RetryPolicy::default()
            },
        })
    }

    fn attempt(&self, body: &str) -> Result<String, Failure> {
        let mut req = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e) => {
                return Err(Failure::Retryable {
                    message: e.to_string(),
                    retry_after: None,
                    rate_limited: false,
                })
            }
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let text = resp.body_mut().read_to_string().map_err(|e| Failure::Retryable {
            message: format!("reading body: {e}"),
            retry_after: None,
            rate_limited: false,
        })?;
        match status {
            200..=299 => {
                let v: Value = serde_json::from_str(&text).map_err(|e| {
                    Failure::Fatal(BackendError::Transport {
                        attempts: 1,
                        message: format!("response is not JSON: {e}"),
                    })
                })?;
                v.pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| {
                        Failure::Fatal(BackendError::Transport {
                            attempts: 1,
                            message: "response lacks choices[0].message.content".into(),
                        })
                    })
            }
            401 | 403 => Err(Failure::Fatal(BackendError::Auth(format!("HTTP {status}: {text}")))),
            429 => Err(Failure::Retryable {
                message: "HTTP 429".into(),
                retry_after,
                rate_limited: true,
            }),
            408 | 500..=599 => Err(Failure::Retryable {
                message: format!("HTTP {status}: {text}"),
                retry_after,
                rate_limited: false,
            }),
            _ => Err(Failure::Fatal(BackendError::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {text}"),
            })),
        }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<ChatExchange, BackendError> {
        // Prompt text goes out byte-for-byte as built.
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
        })
        .to_string();
        let started = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(response) => {
                    return Ok(ChatExchange {
                        request: ChatRequest {
                            model: self.model.clone(),
                            messages: request.messages.clone(),
                            temperature: request.temperature,
                        },
                        response,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts,
                        timestamp_ms: now_ms(),
                    })
                }
                Err(Failure::Fatal(BackendError::Transport { message, .. })) => {
                    return Err(BackendError::Transport { attempts, message })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable {
                    message,
                    retry_after,
                    rate_limited,
                }) => {
                    if attempts > self.retry.max_retries {
                        return Err(if rate_limited {
                            BackendError::RateLimited { attempts }
                        } else {
                            BackendError::Transport { attempts, message }
                        });
                    }
                    let mut wait = self.retry.delay(attempts - 1);
                    if let Some(ra) = retry_after {
                        wait = wait.max(ra);
                    }
                    std::thread::sleep(wait);
                }
            }
        }
    }
}
