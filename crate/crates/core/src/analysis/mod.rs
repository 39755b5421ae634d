//! Turning raw replies into labels and labels into scores.

mod classify;
mod parse;
mod score;

pub use classify::{classify_explicit, classify_implicit, Classification, Label};
pub use parse::{is_refusal, parse_explicit, parse_implicit, ExplicitSelection, ImplicitSelection, ParseStatus};
pub use score::{
    compute_gap, compute_sc, confidence_interval, format_sc, score_cell, GapReport, ScoreCounts, ScoreReport,
    DEFAULT_LEVEL,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no outcomes to score")]
    EmptyOutcomeSet,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("score reports do not describe the same cell: {0}")]
    MismatchedKeys(String),
}

/// Parsed selection of either phase.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Selection {
    Implicit(ImplicitSelection),
    Explicit(ExplicitSelection),
}

impl Selection {
    pub fn parse_status(&self) -> &ParseStatus {
        match self {
            Selection::Implicit(s) => &s.parse_status,
            Selection::Explicit(s) => &s.parse_status,
        }
    }
}

/// Parses and classifies a reply to `trial`.
pub fn evaluate(
    raw: &str,
    trial: &crate::protocol::Trial,
    category: &crate::catalog::Category,
) -> (Selection, Classification) {
    use crate::protocol::Trial;
    match trial {
        Trial::Implicit(t) => {
            let s = parse_implicit(raw, t);
            let c = classify_implicit(&s, t, category);
            (Selection::Implicit(s), c)
        }
        Trial::Explicit(t) => {
            let s = parse_explicit(raw, &t.likert);
            let c = classify_explicit(&s);
            (Selection::Explicit(s), c)
        }
    }
}
