//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export is a thin wrapper over a plain function that returns JSON or
//! SVG text, so the logic is testable on the host.

use bias_probe::analysis::confidence_interval;
use bias_probe::backends::{connect, MockSpec, ModelEndpoint};
use bias_probe::catalog::builtin_catalog;
use bias_probe::protocol::{Phase, RunConfig, TrialBuilder, TrialDescriptor};
use bias_probe::runner::report::{averages, svg};
use bias_probe::runner::score::matrix_markdown;
use bias_probe::runner::{run_in_memory, score_log, RunOptions, ScoreFilter};
use bias_probe::templates::{standard_templates, InstructionSet};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Category ids and template ids available to the page.
pub fn catalog_json() -> String {
    let cats: Vec<_> = builtin_catalog()
        .iter()
        .map(|c| json!({"id": c.id, "name": c.name}))
        .collect();
    let templates: Vec<String> = standard_templates().iter().map(|t| t.id.to_string()).collect();
    json!({"categories": cats, "templates": templates}).to_string()
}

/// One fully rendered trial as JSON.
pub fn trial_json(category: &str, phase: &str, template: &str, rep: u32, seed: u32) -> Result<String, String> {
    let cats = builtin_catalog();
    let phase: Phase = phase.parse().map_err(|e| format!("{e}"))?;
    let template = template.parse().map_err(|e| format!("{e}"))?;
    let builder = TrialBuilder::new(&cats, &InstructionSet::builtin(), "v1").map_err(|e| e.to_string())?;
    let d = TrialDescriptor::new("demo", seed as u64, category, phase, template, rep);
    let trial = builder.build(&d).map_err(|e| e.to_string())?;
    serde_json::to_string(&trial).map_err(|e| e.to_string())
}

/// Runs the full protocol against the mock model and returns scores, gaps,
/// the category matrix and an SVG of per-phase averages.
pub fn simulate_json(implicit: f64, explicit: f64, invalid_rate: f64, seed: u32, reps: u32) -> Result<String, String> {
    let spec = MockSpec::uniform(implicit, explicit, invalid_rate);
    let mut config = RunConfig::new("demo", ModelEndpoint::mock("mock", spec));
    config.master_seed = seed as u64;
    config.reps_per_template = reps;
    let backend = connect(&config.endpoint).map_err(|e| e.to_string())?;
    let cats = builtin_catalog();
    let (log, summary) = run_in_memory(&config, &cats, backend.as_ref(), &RunOptions::default()).map_err(|e| e.to_string())?;
    let set = score_log(&log, &ScoreFilter::default()).map_err(|e| e.to_string())?;
    let exchanges = summary.new_exchanges;
    let avgs = averages(&set.reports);
    let groups: Vec<(String, Vec<f64>)> = set
        .reports
        .iter()
        .filter(|r| r.phase == Phase::Implicit)
        .map(|imp| {
            let exp = set
                .reports
                .iter()
                .find(|r| r.phase == Phase::Explicit && r.category == imp.category)
                .map_or(0.0, |r| r.sc);
            (imp.category.clone(), vec![imp.sc, exp])
        })
        .collect();
    Ok(json!({
        "trials": summary.planned,
        "exchanges": exchanges,
        "scores": set.reports,
        "gaps": set.gaps,
        "averages": avgs,
        "matrix": matrix_markdown(&set.reports),
        "svg": svg::bar_chart("SC by category", &["implicit", "explicit"], &groups),
    })
    .to_string())
}

/// Wilson interval as `[low, high]`.
pub fn wilson_interval(k: u32, n: u32, level: f64) -> Result<[f64; 2], String> {
    confidence_interval(k as usize, n as usize, level)
        .map(|(lo, hi)| [lo, hi])
        .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn catalog() -> String {
    catalog_json()
}

#[wasm_bindgen]
pub fn render_trial(category: &str, phase: &str, template: &str, rep: u32, seed: u32) -> Result<String, JsError> {
    trial_json(category, phase, template, rep, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(implicit: f64, explicit: f64, invalid_rate: f64, seed: u32, reps: u32) -> Result<String, JsError> {
    simulate_json(implicit, explicit, invalid_rate, seed, reps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn wilson(k: u32, n: u32, level: f64) -> Result<Vec<f64>, JsError> {
    wilson_interval(k, n, level).map(|v| v.to_vec()).map_err(|e| JsError::new(&e))
}
