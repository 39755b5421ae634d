use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use super::log::{read_log, LogWriter, OutcomeRecord, RecordBody, RecordSink, RunLog, RunLogRecord};
use super::RunnerError;
use crate::analysis::{evaluate, Label};
use crate::backends::{Backend, BackendError, CompletionRequest, Message};
use crate::catalog::{self, Category};
use crate::protocol::{plan_run, Phase, RunConfig, TrialBuilder, TrialDescriptor};
use crate::templates::InstructionSet;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Upper bound on trials in flight.
    pub concurrency: usize,
    /// Stop after this many work units have been written. Used to simulate
    /// an interrupted run.
    pub max_units: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            concurrency: 1,
            max_units: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub planned: usize,
    /// Trials that already had outcomes before this invocation.
    pub resumed: usize,
    pub new_outcomes: usize,
    pub new_exchanges: usize,
    /// Planned trials still without an outcome, in plan order.
    pub missing: Vec<String>,
    /// (trial id, message) for trials that failed in this invocation.
    pub errors: Vec<(String, String)>,
    /// Set when a fatal endpoint error stopped the run early.
    pub aborted: Option<String>,
}

impl RunSummary {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

/// The fields that decide which trials a log contains.
fn plan_key(c: &RunConfig) -> impl PartialEq + std::fmt::Debug + '_ {
    (
        &c.run_id,
        c.master_seed,
        c.reps_per_template,
        &c.categories,
        c.sorted_phases(),
        c.linked_context,
        &c.instruction_version,
        c.temperature.to_bits(),
    )
}

/// A unit of work: usually one trial, or an implicit/explicit pair when the
/// explicit question is asked inside the implicit conversation.
enum Unit {
    Single(TrialDescriptor),
    Linked {
        implicit: Option<TrialDescriptor>,
        explicit: TrialDescriptor,
        /// Earlier implicit exchange, when the implicit half is already done.
        prior: Option<(String, String)>,
    },
}

fn make_units(plan: &[TrialDescriptor], done: &BTreeMap<String, (String, String)>, linked: bool) -> Vec<Unit> {
    let pending = |d: &&TrialDescriptor| !done.contains_key(&d.trial_id);
    if !linked {
        return plan.iter().filter(pending).cloned().map(Unit::Single).collect();
    }
    let key = |d: &TrialDescriptor| (d.category_id.clone(), d.template_id, d.rep_index);
    let implicit: BTreeMap<_, &TrialDescriptor> = plan
        .iter()
        .filter(|d| d.phase == Phase::Implicit)
        .map(|d| (key(d), d))
        .collect();
    let mut paired = BTreeSet::new();
    let mut units = Vec::new();
    for d in plan.iter().filter(|d| d.phase == Phase::Explicit) {
        let Some(imp) = implicit.get(&key(d)) else {
            if !done.contains_key(&d.trial_id) {
                units.push(Unit::Single(d.clone()));
            }
            continue;
        };
        paired.insert(imp.trial_id.clone());
        if done.contains_key(&d.trial_id) {
            if !done.contains_key(&imp.trial_id) {
                units.push(Unit::Single((*imp).clone()));
            }
            continue;
        }
        units.push(Unit::Linked {
            implicit: (!done.contains_key(&imp.trial_id)).then(|| (*imp).clone()),
            explicit: d.clone(),
            prior: done.get(&imp.trial_id).cloned(),
        });
    }
    for d in plan.iter().filter(pending) {
        if d.phase == Phase::Implicit && !paired.contains(&d.trial_id) {
            units.push(Unit::Single(d.clone()));
        }
    }
    units
}

struct Ctx<'a> {
    builder: TrialBuilder<'a>,
    backend: &'a dyn Backend,
    temperature: f64,
}

struct TrialRun {
    records: Vec<RunLogRecord>,
    /// Scored (prompt, reply), when the trial completed.
    result: Option<(String, String)>,
    fatal: Option<String>,
}

fn category<'a>(ctx: &Ctx<'a>, id: &str) -> &'a Category {
    catalog::find(ctx.builder.catalog(), id).expect("plan only uses catalog categories")
}

fn run_trial(ctx: &Ctx<'_>, d: &TrialDescriptor, history: Vec<Message>) -> TrialRun {
    let mut run = TrialRun {
        records: Vec::new(),
        result: None,
        fatal: None,
    };
    let id = d.trial_id.as_str();
    let trial = match ctx.builder.build(d) {
        Ok(t) => t,
        Err(e) => {
            run.records.push(RunLogRecord::new(Some(id), RecordBody::Error { attempt: 0, message: e.to_string() }));
            return run;
        }
    };
    run.records.push(RunLogRecord::new(Some(id), RecordBody::Trial { trial: trial.clone() }));
    let cat = category(ctx, trial.category_id());
    let mut messages = history;
    messages.push(Message::user(trial.prompt()));

    let mut attempt = 0;
    loop {
        let req = CompletionRequest {
            trial: &trial,
            attempt,
            messages: messages.clone(),
            temperature: ctx.temperature,
        };
        let exchange = match ctx.backend.complete(&req) {
            Ok(x) => x,
            Err(e) => {
                if matches!(e, BackendError::Auth(_) | BackendError::Config(_)) {
                    run.fatal = Some(e.to_string());
                }
                run.records.push(RunLogRecord::new(Some(id), RecordBody::Error { attempt, message: e.to_string() }));
                return run;
            }
        };
        let response = exchange.response.clone();
        run.records.push(RunLogRecord::new(Some(id), RecordBody::Exchange { attempt, exchange }));
        let (selection, classification) = evaluate(&response, &trial, cat);
        if classification.label == Label::Invalid && attempt == 0 {
            let reminder = ctx
                .builder
                .instruction(trial.phase())
                .map(|i| i.reminder.clone())
                .unwrap_or_default();
            messages.push(Message::assistant(response));
            messages.push(Message::user(reminder));
            attempt += 1;
            continue;
        }
        let outcome = OutcomeRecord {
            category: d.category_id.clone(),
            phase: d.phase,
            template_id: d.template_id,
            rep_index: d.rep_index,
            attempts: attempt + 1,
            response: response.clone(),
            selection,
            classification,
        };
        run.records.push(RunLogRecord::new(Some(id), RecordBody::Outcome(outcome)));
        run.result = Some((trial.prompt().to_string(), response));
        return run;
    }
}

fn run_unit(ctx: &Ctx<'_>, unit: &Unit) -> (Vec<RunLogRecord>, Option<String>) {
    match unit {
        Unit::Single(d) => {
            let r = run_trial(ctx, d, Vec::new());
            (r.records, r.fatal)
        }
        Unit::Linked { implicit, explicit, prior } => {
            let mut records = Vec::new();
            let context = match (implicit, prior) {
                (Some(d), _) => {
                    let r = run_trial(ctx, d, Vec::new());
                    records.extend(r.records);
                    if r.fatal.is_some() {
                        return (records, r.fatal);
                    }
                    r.result
                }
                (None, p) => p.clone(),
            };
            // The explicit half waits for its implicit context.
            let Some((prompt, reply)) = context else {
                return (records, None);
            };
            let r = run_trial(ctx, explicit, vec![Message::user(prompt), Message::assistant(reply)]);
            records.extend(r.records);
            (records, r.fatal)
        }
    }
}

/// Executes every planned trial without an outcome in `existing`, sending
/// records to `sink`. Records of one trial are written together.
pub fn execute(
    config: &RunConfig,
    catalog: &[Category],
    instructions: &InstructionSet,
    backend: &dyn Backend,
    existing: &RunLog,
    sink: &mut dyn RecordSink,
    opts: &RunOptions,
) -> Result<RunSummary, RunnerError> {
    let plan = plan_run(catalog, config)?;
    let builder = TrialBuilder::new(catalog, instructions, &config.instruction_version)?;
    for phase in config.sorted_phases() {
        builder.instruction(phase)?;
    }

    match existing.meta() {
        Some(prev) if plan_key(prev) != plan_key(config) => {
            return Err(RunnerError::ConfigMismatch(format!(
                "log was written for {:?}, config asks for {:?}",
                plan_key(prev),
                plan_key(config)
            )))
        }
        Some(_) => {}
        None if !existing.records.is_empty() => {
            return Err(RunnerError::ConfigMismatch("log has no meta record".into()))
        }
        None => sink.append(&RunLogRecord::new(
            None,
            RecordBody::Meta {
                config: config.clone(),
                planned_trials: plan.len(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        ))?,
    }

    // Completed trials with the exchange that was scored.
    let mut prompts: BTreeMap<&str, &str> = BTreeMap::new();
    for r in &existing.records {
        if let (RecordBody::Trial { trial }, Some(id)) = (&r.body, &r.trial_id) {
            prompts.insert(id, trial.prompt());
        }
    }
    let done: BTreeMap<String, (String, String)> = existing
        .outcomes()
        .into_iter()
        .map(|(id, o)| {
            let prompt = prompts.get(id).copied().unwrap_or_default().to_string();
            (id.to_string(), (prompt, o.response.clone()))
        })
        .collect();

    let mut summary = RunSummary {
        planned: plan.len(),
        resumed: plan.trials.iter().filter(|d| done.contains_key(&d.trial_id)).count(),
        ..RunSummary::default()
    };
    let mut units = make_units(&plan.trials, &done, config.linked_context);
    if let Some(n) = opts.max_units {
        units.truncate(n);
    }

    let ctx = Ctx {
        builder,
        backend,
        temperature: config.temperature,
    };
    let mut completed: BTreeSet<String> = done.keys().cloned().collect();
    let mut write = |records: Vec<RunLogRecord>, summary: &mut RunSummary| -> Result<(), RunnerError> {
        for r in &records {
            sink.append(r)?;
            let id = r.trial_id.clone().unwrap_or_default();
            match &r.body {
                RecordBody::Exchange { .. } => summary.new_exchanges += 1,
                RecordBody::Outcome(_) => {
                    summary.new_outcomes += 1;
                    completed.insert(id);
                }
                RecordBody::Error { message, .. } => summary.errors.push((id, message.clone())),
                _ => {}
            }
        }
        Ok(())
    };

    let workers = opts.concurrency.max(1).min(units.len().max(1));
    if workers == 1 {
        for unit in &units {
            let (records, fatal) = run_unit(&ctx, unit);
            write(records, &mut summary)?;
            if let Some(f) = fatal {
                summary.aborted = Some(f);
                break;
            }
        }
    } else {
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let (tx, rx) = mpsc::channel::<(Vec<RunLogRecord>, Option<String>)>();
        std::thread::scope(|s| -> Result<(), RunnerError> {
            for _ in 0..workers {
                let tx = tx.clone();
                let (ctx, units, next, stop) = (&ctx, &units, &next, &stop);
                s.spawn(move || loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(unit) = units.get(i) else { break };
                    let out = run_unit(ctx, unit);
                    if out.1.is_some() {
                        stop.store(true, Ordering::SeqCst);
                    }
                    if tx.send(out).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for (records, fatal) in rx {
                if let Err(e) = write(records, &mut summary) {
                    stop.store(true, Ordering::SeqCst);
                    return Err(e);
                }
                if let Some(f) = fatal {
                    summary.aborted.get_or_insert(f);
                }
            }
            Ok(())
        })?;
    }

    summary.missing = plan
        .trials
        .iter()
        .filter(|d| !completed.contains(&d.trial_id))
        .map(|d| d.trial_id.clone())
        .collect();
    Ok(summary)
}

/// Runs `config` against `backend`, appending to the log at `path` and
/// resuming from whatever it already holds.
pub fn run_to_file(
    config: &RunConfig,
    catalog: &[Category],
    instructions: &InstructionSet,
    backend: &dyn Backend,
    path: &Path,
    opts: &RunOptions,
) -> Result<RunSummary, RunnerError> {
    let existing = if path.exists() { read_log(path)? } else { RunLog::default() };
    let mut writer = LogWriter::open(path, Some(existing.valid_len))?;
    execute(config, catalog, instructions, backend, &existing, &mut writer, opts)
}

/// Convenience used by tests and the browser demo: run into memory.
pub fn run_in_memory(
    config: &RunConfig,
    catalog: &[Category],
    backend: &dyn Backend,
    opts: &RunOptions,
) -> Result<(RunLog, RunSummary), RunnerError> {
    let mut records = Vec::new();
    let summary = execute(
        config,
        catalog,
        &InstructionSet::builtin(),
        backend,
        &RunLog::default(),
        &mut records,
        opts,
    )?;
    Ok((
        RunLog {
            records,
            ..RunLog::default()
        },
        summary,
    ))
}
