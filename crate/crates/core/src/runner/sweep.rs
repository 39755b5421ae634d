//! Evaluating a series of checkpoints along one factor axis.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::execute::{run_to_file, RunOptions};
use super::log::RunLog;
use super::report::svg;
use super::score::{score_log, to_csv, ScoreFilter};
use super::RunnerError;
use crate::backends::{connect, ModelEndpoint};
use crate::catalog::Category;
use crate::protocol::{FactorTags, Phase, RunConfig};
use crate::templates::InstructionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorAxis {
    Parameters,
    PretrainTokens,
    AlignmentStep,
}

impl FactorAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            FactorAxis::Parameters => "parameters",
            FactorAxis::PretrainTokens => "pretrain_tokens",
            FactorAxis::AlignmentStep => "alignment_step",
        }
    }

    pub fn value(self, tags: &FactorTags) -> Option<f64> {
        match self {
            FactorAxis::Parameters => tags.parameters,
            FactorAxis::PretrainTokens => tags.pretrain_tokens,
            FactorAxis::AlignmentStep => tags.alignment_step,
        }
    }
}

impl fmt::Display for FactorAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub endpoint: ModelEndpoint,
    pub factor_tags: FactorTags,
    /// Report label; defaults to `<model>@<axis>=<value>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_tag: Option<String>,
}

/// Shared run settings plus the checkpoints to compare.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: FactorAxis,
    /// Its endpoint and factor tags are replaced per point.
    pub base: RunConfig,
    pub points: Vec<SweepPoint>,
}

#[derive(Deserialize)]
struct SweepFile {
    axis: FactorAxis,
    base: toml::Table,
    points: Vec<SweepPoint>,
}

impl SweepSpec {
    /// Reads `axis`, a `[base]` run table (its `endpoint` may be omitted) and
    /// `[[points]]`.
    pub fn from_toml(text: &str) -> Result<Self, RunnerError> {
        let file: SweepFile = toml::from_str(text).map_err(|e| RunnerError::Sweep(e.to_string()))?;
        let mut base = file.base;
        if !base.contains_key("endpoint") {
            let first = file
                .points
                .first()
                .ok_or_else(|| RunnerError::Sweep("sweep has no points".into()))?;
            let ep = toml::Table::try_from(&first.endpoint).map_err(|e| RunnerError::Sweep(e.to_string()))?;
            base.insert("endpoint".into(), toml::Value::Table(ep));
        }
        let base: RunConfig = base.try_into().map_err(|e: toml::de::Error| RunnerError::Sweep(e.to_string()))?;
        let spec = SweepSpec {
            axis: file.axis,
            base,
            points: file.points,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        if self.points.is_empty() {
            return Err(RunnerError::Sweep("sweep has no points".into()));
        }
        let mut seen: Vec<f64> = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            let v = self
                .axis
                .value(&p.factor_tags)
                .ok_or_else(|| RunnerError::Sweep(format!("point {i} has no {} tag", self.axis)))?;
            if seen.contains(&v) {
                return Err(RunnerError::Sweep(format!("{} value {v} appears twice", self.axis)));
            }
            seen.push(v);
        }
        Ok(())
    }

    /// Run config for point `i`.
    pub fn point_config(&self, i: usize) -> RunConfig {
        let p = &self.points[i];
        let v = self.axis.value(&p.factor_tags).unwrap_or(f64::NAN);
        let mut c = self.base.clone();
        c.run_id = format!("{}-{}", self.base.run_id, i);
        c.endpoint = p.endpoint.clone();
        c.factor_tags = p.factor_tags.clone();
        c.model_tag = Some(
            p.model_tag
                .clone()
                .unwrap_or_else(|| format!("{}@{}={v}", p.endpoint.model_name, self.axis)),
        );
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model_tag: String,
    pub category: String,
    pub phase: Phase,
    pub n_total: usize,
    pub n_stereotype: usize,
    pub n_invalid: usize,
    pub sc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub factor_axis: FactorAxis,
    pub factor_value: f64,
}

/// Unweighted mean over categories at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAverage {
    pub factor_axis: FactorAxis,
    pub factor_value: f64,
    pub model_tag: String,
    pub phase: Phase,
    pub mean_sc: f64,
}

#[derive(Debug, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub averages: Vec<SweepAverage>,
    /// (point index, error) for points that could not be scored.
    pub failures: Vec<(usize, String)>,
}

impl SweepResult {
    pub fn rows_csv(&self) -> String {
        to_csv(&self.rows)
    }

    pub fn averages_csv(&self) -> String {
        to_csv(&self.averages)
    }

    /// Average SC per phase against the factor value.
    pub fn svg(&self, axis: FactorAxis) -> String {
        let mut xs: Vec<f64> = self.averages.iter().map(|a| a.factor_value).collect();
        xs.dedup();
        let curve = |p: Phase| -> Vec<f64> {
            self.averages.iter().filter(|a| a.phase == p).map(|a| a.mean_sc).collect()
        };
        svg::line_chart(
            &format!("Average SC by {axis}"),
            &xs,
            &[("implicit", curve(Phase::Implicit)), ("explicit", curve(Phase::Explicit))],
        )
    }

    /// Mean SC per point for one phase, in point order.
    pub fn curve(&self, phase: Phase) -> Vec<(f64, f64)> {
        self.averages
            .iter()
            .filter(|a| a.phase == phase)
            .map(|a| (a.factor_value, a.mean_sc))
            .collect()
    }
}

/// Runs every point and collects long-format scores. A point that fails is
/// recorded and does not stop the others. With `log_dir`, each point logs to
/// `point-<i>.jsonl` there and resumes from it.
pub fn run_sweep(
    spec: &SweepSpec,
    catalog: &[Category],
    instructions: &InstructionSet,
    log_dir: Option<&Path>,
    opts: &RunOptions,
) -> Result<SweepResult, RunnerError> {
    spec.validate()?;
    let mut order: Vec<usize> = (0..spec.points.len()).collect();
    order.sort_by(|a, b| {
        let v = |i: usize| spec.axis.value(&spec.points[i].factor_tags).unwrap_or(f64::NAN);
        v(*a).total_cmp(&v(*b))
    });
    let mut result = SweepResult::default();
    for i in order {
        let config = spec.point_config(i);
        let value = spec.axis.value(&config.factor_tags).unwrap_or(f64::NAN);
        match run_point(&config, catalog, instructions, log_dir.map(|d| d.join(format!("point-{i}.jsonl"))), opts) {
            Ok(set) => {
                for phase in config.sorted_phases() {
                    let scs: Vec<f64> = set.reports.iter().filter(|r| r.phase == phase).map(|r| r.sc).collect();
                    if !scs.is_empty() {
                        result.averages.push(SweepAverage {
                            factor_axis: spec.axis,
                            factor_value: value,
                            model_tag: config.model_tag().to_string(),
                            phase,
                            mean_sc: scs.iter().sum::<f64>() / scs.len() as f64,
                        });
                    }
                }
                result.rows.extend(set.reports.into_iter().map(|r| SweepRow {
                    model_tag: r.model_tag,
                    category: r.category,
                    phase: r.phase,
                    n_total: r.n_total,
                    n_stereotype: r.n_stereotype,
                    n_invalid: r.n_invalid,
                    sc: r.sc,
                    ci_low: r.ci_low,
                    ci_high: r.ci_high,
                    factor_axis: spec.axis,
                    factor_value: value,
                }));
            }
            Err(e) => result.failures.push((i, e.to_string())),
        }
    }
    Ok(result)
}

fn run_point(
    config: &RunConfig,
    catalog: &[Category],
    instructions: &InstructionSet,
    log_path: Option<std::path::PathBuf>,
    opts: &RunOptions,
) -> Result<super::score::ScoreSet, RunnerError> {
    let backend = connect(&config.endpoint)?;
    let log = match log_path {
        Some(path) => {
            run_to_file(config, catalog, instructions, backend.as_ref(), &path, opts)?;
            super::log::read_log(&path)?
        }
        None => {
            let mut records = Vec::new();
            super::execute::execute(
                config,
                catalog,
                instructions,
                backend.as_ref(),
                &RunLog::default(),
                &mut records,
                opts,
            )?;
            RunLog {
                records,
                ..RunLog::default()
            }
        }
    };
    score_log(&log, &ScoreFilter::default())
}
