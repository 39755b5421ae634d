use std::collections::HashMap;
use std::path::Path;

use super::{now_ms, Backend, BackendError, ChatExchange, ChatRequest, CompletionRequest};
use crate::runner::log::{read_log, RecordBody, RunLogRecord};

/// Serves responses recorded in a run log, keyed by (trial id, attempt).
pub struct ReplayBackend {
    model: String,
    responses: HashMap<(String, u32), String>,
}

/// Builds a replay backend from log records. Later exchanges for the same
/// key replace earlier ones.
pub fn record_replay(model: &str, records: &[RunLogRecord]) -> ReplayBackend {
    let mut responses = HashMap::new();
    for r in records {
        if let RecordBody::Exchange { attempt, exchange } = &r.body {
            if let Some(id) = &r.trial_id {
                responses.insert((id.clone(), *attempt), exchange.response.clone());
            }
        }
    }
    ReplayBackend {
        model: model.to_string(),
        responses,
    }
}

impl ReplayBackend {
    pub fn from_log_file(model: &str, path: &Path) -> Result<Self, BackendError> {
        let log = read_log(path)
            .map_err(|e| BackendError::Config(format!("reading replay log {}: {e}", path.display())))?;
        Ok(record_replay(model, &log.records))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<ChatExchange, BackendError> {
        let key = (request.trial.trial_id().to_string(), request.attempt);
        let response = self
            .responses
            .get(&key)
            .cloned()
            .ok_or_else(|| BackendError::MissingTranscript {
                trial_id: key.0.clone(),
                attempt: key.1,
            })?;
        Ok(ChatExchange {
            request: ChatRequest {
                model: self.model.clone(),
                messages: request.messages.clone(),
                temperature: request.temperature,
            },
            response,
            latency_ms: 0,
            attempts: 1,
            timestamp_ms: now_ms(),
        })
    }
}
