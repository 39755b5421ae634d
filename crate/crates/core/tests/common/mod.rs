//! Shared helpers for the integration tests.
#![allow(dead_code)]

pub mod oracle;

use bias_probe::backends::{MockSpec, ModelEndpoint};
use bias_probe::protocol::RunConfig;

pub fn mock_config(run_id: &str, implicit: f64, explicit: f64, invalid: f64) -> RunConfig {
    RunConfig::new(run_id, ModelEndpoint::mock("mock", MockSpec::uniform(implicit, explicit, invalid)))
}
