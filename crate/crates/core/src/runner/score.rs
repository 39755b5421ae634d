use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::log::RunLog;
use super::RunnerError;
use crate::analysis::{compute_gap, format_sc, score_cell, Classification, GapReport, ScoreReport};
use crate::protocol::{planned_descriptors, Phase};

/// Optional narrowing of what gets scored. `None` means everything in the log.
#[derive(Debug, Clone, Default)]
pub struct ScoreFilter {
    pub categories: Option<Vec<String>>,
    pub phases: Option<Vec<Phase>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub reports: Vec<ScoreReport>,
    pub gaps: Vec<GapReport>,
}

/// Scores a complete log. Every planned trial in the selected cells must have
/// an outcome.
pub fn score_log(log: &RunLog, filter: &ScoreFilter) -> Result<ScoreSet, RunnerError> {
    let config = log
        .meta()
        .ok_or_else(|| RunnerError::ConfigMismatch("log has no meta record".into()))?;
    let categories: Vec<String> = match &filter.categories {
        Some(c) if c.is_empty() => return Err(RunnerError::EmptyFilter("categories")),
        Some(c) => c.clone(),
        None => config.categories.clone(),
    };
    let phases: Vec<Phase> = match &filter.phases {
        Some(p) if p.is_empty() => return Err(RunnerError::EmptyFilter("phases")),
        Some(p) => p.clone(),
        None => config.sorted_phases(),
    };
    for c in &categories {
        if !config.categories.contains(c) {
            return Err(RunnerError::NotInLog(format!("category {c:?}")));
        }
    }
    for p in &phases {
        if !config.phases.contains(p) {
            return Err(RunnerError::NotInLog(format!("phase {p}")));
        }
    }

    let outcomes = log.outcomes();
    let mut cells: BTreeMap<(&str, Phase), Vec<(&str, &Classification)>> = BTreeMap::new();
    let mut missing = Vec::new();
    for d in planned_descriptors(config) {
        if !categories.contains(&d.category_id) || !phases.contains(&d.phase) {
            continue;
        }
        let Some((id, o)) = outcomes.get_key_value(d.trial_id.as_str()) else {
            missing.push(d.trial_id);
            continue;
        };
        let cat = categories.iter().find(|c| **c == d.category_id).unwrap();
        cells.entry((cat.as_str(), d.phase)).or_default().push((id, &o.classification));
    }
    if !missing.is_empty() {
        return Err(RunnerError::IncompleteLog { missing });
    }

    let model = config.model_tag();
    let mut set = ScoreSet::default();
    for cat in &categories {
        let mut by_phase = BTreeMap::new();
        for phase in config.sorted_phases().into_iter().filter(|p| phases.contains(p)) {
            let mut entries = cells.remove(&(cat.as_str(), phase)).unwrap_or_default();
            // Canonical order so collection order never matters.
            entries.sort_by_key(|(id, _)| *id);
            let labels: Vec<Classification> = entries.into_iter().map(|(_, c)| c.clone()).collect();
            let r = score_cell(model, cat, phase, &labels)?;
            by_phase.insert(phase, set.reports.len());
            set.reports.push(r);
        }
        if let (Some(&i), Some(&e)) = (by_phase.get(&Phase::Implicit), by_phase.get(&Phase::Explicit)) {
            set.gaps.push(compute_gap(&set.reports[i], &set.reports[e])?);
        }
    }
    Ok(set)
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    model_tag: String,
    category: String,
    phase: Phase,
    n_total: usize,
    n_stereotype: usize,
    n_invalid: usize,
    sc: f64,
    ci_low: f64,
    ci_high: f64,
}

pub const SCORE_COLUMNS: [&str; 9] = [
    "model_tag",
    "category",
    "phase",
    "n_total",
    "n_stereotype",
    "n_invalid",
    "sc",
    "ci_low",
    "ci_high",
];

impl From<&ScoreReport> for ScoreRow {
    fn from(r: &ScoreReport) -> Self {
        ScoreRow {
            model_tag: r.model_tag.clone(),
            category: r.category.clone(),
            phase: r.phase,
            n_total: r.n_total,
            n_stereotype: r.n_stereotype,
            n_invalid: r.n_invalid,
            sc: r.sc,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
        }
    }
}

impl From<ScoreRow> for ScoreReport {
    fn from(r: ScoreRow) -> Self {
        ScoreReport {
            model_tag: r.model_tag,
            category: r.category,
            phase: r.phase,
            n_total: r.n_total,
            n_stereotype: r.n_stereotype,
            n_invalid: r.n_invalid,
            sc: r.sc,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
        }
    }
}

pub(crate) fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn scores_csv(reports: &[ScoreReport]) -> String {
    to_csv(reports.iter().map(ScoreRow::from))
}

pub fn gaps_csv(gaps: &[GapReport]) -> String {
    to_csv(gaps)
}

/// Reads a score CSV, insisting on the exact column layout.
pub fn read_scores_csv(text: &str) -> Result<Vec<ScoreReport>, RunnerError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| RunnerError::SchemaMismatch(e.to_string()))?;
    let found: Vec<&str> = headers.iter().collect();
    if found != SCORE_COLUMNS {
        return Err(RunnerError::SchemaMismatch(format!(
            "expected columns {SCORE_COLUMNS:?}, found {found:?}"
        )));
    }
    r.deserialize::<ScoreRow>()
        .map(|row| row.map(ScoreReport::from).map_err(|e| RunnerError::SchemaMismatch(e.to_string())))
        .collect()
}

/// Category columns, one Imp. and one Exp. row per model, SC to two decimals.
pub fn matrix_markdown(reports: &[ScoreReport]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut cats: Vec<&str> = Vec::new();
    for r in reports {
        if !models.contains(&r.model_tag.as_str()) {
            models.push(&r.model_tag);
        }
        if !cats.contains(&r.category.as_str()) {
            cats.push(&r.category);
        }
    }
    let cell = |m: &str, c: &str, p: Phase| {
        reports
            .iter()
            .find(|r| r.model_tag == m && r.category == c && r.phase == p)
            .map(|r| format_sc(r.sc))
            .unwrap_or_else(|| "-".into())
    };
    let mut out = format!("| Model | Bias | {} |\n", cats.join(" | "));
    out.push_str(&format!("|---|---|{}\n", "---|".repeat(cats.len())));
    for m in models {
        for (p, label) in [(Phase::Implicit, "Imp."), (Phase::Explicit, "Exp.")] {
            let cells: Vec<String> = cats.iter().map(|c| cell(m, c, p)).collect();
            if cells.iter().all(|c| c == "-") {
                continue;
            }
            out.push_str(&format!("| {m} | {label} | {} |\n", cells.join(" | ")));
        }
    }
    out
}
