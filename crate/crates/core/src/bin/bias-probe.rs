use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bias_probe::backends::{connect, ModelEndpoint};
use bias_probe::catalog::{builtin_catalog, load_catalog, Category};
use bias_probe::protocol::{Phase, RunConfig};
use bias_probe::runner::{
    build_report, log::read_log, read_scores_csv, run_sweep, run_to_file, score::gaps_csv, score::matrix_markdown,
    score_log, scores_csv, RunOptions, ScoreFilter, SweepSpec,
};
use bias_probe::templates::InstructionSet;

#[derive(Parser)]
#[command(name = "bias-probe", version, about = "Implicit/explicit stereotype probes for chat models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute (or resume) a run and append to its JSONL log.
    Run(RunArgs),
    /// Score a finished run log.
    Score(ScoreArgs),
    /// Run and score a series of checkpoints along one factor axis.
    Sweep(SweepArgs),
    /// Combine score CSVs into a markdown report and plot data.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Category file whose entries are added to (or replace) the built-in ones.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Instruction assets file.
    #[arg(long)]
    instructions: Option<PathBuf>,
    /// Maximum number of trials in flight.
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
}

#[derive(Args)]
struct RunArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Endpoint description (TOML); replaces the one in the config.
    #[arg(long)]
    endpoint: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u32>,
    /// Comma-separated category ids.
    #[arg(long)]
    categories: Option<String>,
    /// Comma-separated phases (implicit, explicit).
    #[arg(long)]
    phases: Option<String>,
    /// Ask the explicit question in the conversation of the implicit trial.
    #[arg(long)]
    linked_context: bool,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    allow_nonzero_temperature: bool,
    /// Log path. Defaults to `runs/<run_id>.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScoreArgs {
    /// Run log to score.
    log: PathBuf,
    #[arg(long)]
    categories: Option<String>,
    #[arg(long)]
    phases: Option<String>,
    /// Directory for scores.csv and gaps.csv. Without it, CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; per-point logs go to `<out>/logs`.
    #[arg(long, default_value = "sweep-out")]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReportArgs {
    /// Score CSV files.
    #[arg(required = true)]
    scores: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn parse_phases(s: &str) -> Result<Vec<Phase>> {
    split_list(s).iter().map(|p| p.parse().map_err(anyhow::Error::from)).collect()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn catalog(common: &Common) -> Result<Vec<Category>> {
    let mut cats = builtin_catalog();
    if let Some(path) = &common.catalog {
        for c in load_catalog(&read(path)?).with_context(|| format!("loading {}", path.display()))? {
            match cats.iter_mut().find(|b| b.id == c.id) {
                Some(slot) => *slot = c,
                None => cats.push(c),
            }
        }
    }
    Ok(cats)
}

fn instructions(common: &Common) -> Result<InstructionSet> {
    match &common.instructions {
        Some(path) => Ok(InstructionSet::parse(&read(path)?)?),
        None => Ok(InstructionSet::builtin()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let endpoint: Option<ModelEndpoint> = match &a.endpoint {
        Some(p) => Some(toml::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => None,
    };
    let mut config: RunConfig = match (&a.config, endpoint.clone()) {
        (Some(p), _) => toml::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        (None, Some(ep)) => RunConfig::new("run", ep),
        (None, None) => bail!("need --config or --endpoint"),
    };
    if let Some(ep) = endpoint {
        config.endpoint = ep;
    }
    if let Some(v) = a.run_id {
        config.run_id = v;
    }
    if let Some(v) = a.seed {
        config.master_seed = v;
    }
    if let Some(v) = a.reps {
        config.reps_per_template = v;
    }
    if let Some(v) = &a.categories {
        config.categories = split_list(v);
    }
    if let Some(v) = &a.phases {
        config.phases = parse_phases(v)?;
    }
    if let Some(v) = a.temperature {
        config.temperature = v;
    }
    config.linked_context |= a.linked_context;
    config.allow_nonzero_temperature |= a.allow_nonzero_temperature;
    config.validate()?;

    let cats = catalog(&a.common)?;
    let instr = instructions(&a.common)?;
    let backend = connect(&config.endpoint)?;
    let out = a.out.unwrap_or_else(|| PathBuf::from(format!("runs/{}.jsonl", config.run_id)));
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    let opts = RunOptions {
        concurrency: a.common.concurrency,
        max_units: None,
    };
    let s = run_to_file(&config, &cats, &instr, backend.as_ref(), &out, &opts)?;
    eprintln!(
        "{}: {} planned, {} already done, {} new outcomes, {} exchanges, {} errors",
        out.display(),
        s.planned,
        s.resumed,
        s.new_outcomes,
        s.new_exchanges,
        s.errors.len()
    );
    if let Some(reason) = &s.aborted {
        eprintln!("stopped early: {reason}");
    }
    if s.is_complete() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("{} trial(s) have no outcome; rerun the same command to resume", s.missing.len());
    for id in s.missing.iter().take(10) {
        eprintln!("  missing {id}");
    }
    Ok(ExitCode::from(2))
}

fn cmd_score(a: ScoreArgs) -> Result<ExitCode> {
    let log = read_log(&a.log)?;
    let filter = ScoreFilter {
        categories: a.categories.as_deref().map(split_list),
        phases: a.phases.as_deref().map(parse_phases).transpose()?,
    };
    let set = score_log(&log, &filter)?;
    let scores = scores_csv(&set.reports);
    match &a.out {
        Some(dir) => {
            write(&dir.join("scores.csv"), &scores)?;
            write(&dir.join("gaps.csv"), &gaps_csv(&set.gaps))?;
            print!("{}", matrix_markdown(&set.reports));
        }
        None => print!("{scores}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: SweepArgs) -> Result<ExitCode> {
    let spec = SweepSpec::from_toml(&read(&a.config)?)?;
    let cats = catalog(&a.common)?;
    let instr = instructions(&a.common)?;
    let logs = a.out.join("logs");
    fs::create_dir_all(&logs)?;
    let opts = RunOptions {
        concurrency: a.common.concurrency,
        max_units: None,
    };
    let r = run_sweep(&spec, &cats, &instr, Some(&logs), &opts)?;
    write(&a.out.join("sweep.csv"), &r.rows_csv())?;
    write(&a.out.join("sweep_averages.csv"), &r.averages_csv())?;
    write(&a.out.join("sweep.svg"), &r.svg(spec.axis))?;
    for (i, e) in &r.failures {
        eprintln!("point {i} failed: {e}");
    }
    eprintln!("{} rows written to {}", r.rows.len(), a.out.display());
    Ok(if r.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode> {
    let mut rows = Vec::new();
    for p in &a.scores {
        rows.extend(read_scores_csv(&read(p)?).with_context(|| format!("reading {}", p.display()))?);
    }
    let r = build_report(&rows);
    write(&a.out.join("report.md"), &r.markdown)?;
    write(&a.out.join("averages.csv"), &r.averages_csv)?;
    write(&a.out.join("gaps.csv"), &r.gaps_csv)?;
    write(&a.out.join("averages.svg"), &r.averages_svg)?;
    print!("{}", r.markdown);
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(a) => cmd_run(a),
        Command::Score(a) => cmd_score(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    }
}
