//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints exactly one PASS or FAIL line.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use bias_probe::analysis::{
    classify_explicit, classify_implicit, compute_sc, format_sc, parse_explicit, parse_implicit, Classification,
    ExplicitSelection, Label, ParseStatus,
};
use bias_probe::backends::{
    Backend, BackendError, ChatExchange, ChatRequest, CompletionRequest, MockSpec, ModelEndpoint, ReplayBackend,
};
use bias_probe::catalog::{builtin_catalog, find, Attribute, StereotypeMap, Target};
use bias_probe::protocol::{plan_run, ImplicitTrial, Phase, Trial, TrialBuilder, TrialDescriptor};
use bias_probe::runner::log::read_log;
use bias_probe::runner::sweep::SweepPoint;
use bias_probe::runner::{
    run_in_memory, run_sweep, run_to_file, score_log, scores_csv, FactorAxis, RunOptions, ScoreFilter, SweepSpec,
};
use bias_probe::templates::{base_templates, expand_templates, InstructionSet, LikertOption, LikertScale, Orientation};
use common::{mock_config, oracle};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn criterion_1() -> Outcome {
    let cats = builtin_catalog();
    let config = mock_config("acc-1", 0.5, 0.5, 0.0);
    let plan = plan_run(&cats, &config).map_err(|e| e.to_string())?;
    ensure(plan.len() == 2400, format!("{} trials", plan.len()))?;
    let mut cells: BTreeMap<(String, Phase), usize> = BTreeMap::new();
    for d in &plan.trials {
        *cells.entry((d.category_id.clone(), d.phase)).or_default() += 1;
    }
    ensure(cells.len() == 12, format!("{} cells", cells.len()))?;
    ensure(cells.values().all(|n| *n == 200), format!("cell sizes {cells:?}"))?;
    Ok("2400 trials, 200 per category and phase".into())
}

fn criterion_2() -> Outcome {
    let bases = base_templates();
    let all = expand_templates(&bases).map_err(|e| e.to_string())?;
    ensure(bases.len() == 5 && all.len() == 10, format!("{} bases, {} variants", bases.len(), all.len()))?;
    for b in &bases {
        let s = all
            .iter()
            .find(|t| t.id.base == b.id.base && t.id.orientation == Orientation::Swapped)
            .ok_or("missing swapped variant")?;
        let expected = b
            .body
            .replace("{attr_x}", "\u{1}")
            .replace("{attr_y}", "{attr_x}")
            .replace('\u{1}', "{attr_y}");
        ensure(s.body == expected, format!("{}: {:?} vs {:?}", s.id, s.body, expected))?;
        ensure(s.body != b.body, format!("{} equals its base", s.id))?;
        // Outside the two attribute slots the strings are identical.
        let strip = |t: &str| t.replace("{attr_x}", "").replace("{attr_y}", "");
        ensure(strip(&s.body) == strip(&b.body), format!("{} differs outside the slots", s.id))?;
    }
    Ok("5 bases, 10 variants, swaps touch only the attribute slots".into())
}

/// Stereotype counts frozen from the oracle for master seed 42.
const FROZEN_42: [(&str, usize, usize); 6] = [
    ("age", 161, 18),
    ("disability", 169, 24),
    ("gender_career", 162, 12),
    ("gender_occupation", 149, 23),
    ("race", 166, 26),
    ("science", 158, 19),
];

fn criterion_3() -> Outcome {
    let cats = builtin_catalog();
    let config = mock_config("acc-3", 0.8, 0.1, 0.02);
    let backend = bias_probe::backends::connect(&config.endpoint).map_err(|e| e.to_string())?;
    let (log, summary) = run_in_memory(&config, &cats, backend.as_ref(), &RunOptions::default()).map_err(|e| e.to_string())?;
    ensure(summary.is_complete(), "run incomplete")?;
    let set = score_log(&log, &ScoreFilter::default()).map_err(|e| e.to_string())?;
    for r in &set.reports {
        let p = if r.phase == Phase::Implicit { 0.8 } else { 0.1 };
        let k = oracle::stereotype_count(42, &r.category, r.phase.as_str(), 20, p);
        let oracle_sc = k as f64 / 200.0;
        ensure(
            r.sc.to_bits() == oracle_sc.to_bits(),
            format!("{} {}: pipeline {} vs oracle {}", r.category, r.phase, r.sc, oracle_sc),
        )?;
        let (_, imp, exp) = FROZEN_42.iter().find(|(c, _, _)| *c == r.category).ok_or("unknown category")?;
        let frozen = if r.phase == Phase::Implicit { *imp } else { *exp };
        ensure(k == frozen, format!("{} {}: oracle {k} vs frozen {frozen}", r.category, r.phase))?;
    }
    Ok(format!("{} cells bitwise equal to the seed-replay oracle", set.reports.len()))
}

/// 99% central binomial intervals for n = 200, frozen from a reference
/// statistics package.
fn envelope(p: f64) -> (usize, usize) {
    if p == 0.8 {
        (145, 174)
    } else if p == 0.1 {
        (10, 32)
    } else {
        panic!("no frozen envelope for p = {p}")
    }
}

fn criterion_4() -> Outcome {
    let cats = builtin_catalog();
    let mut inside: BTreeMap<(String, Phase), usize> = BTreeMap::new();
    let opts = RunOptions {
        concurrency: 8,
        max_units: None,
    };
    for seed in 1..=50u64 {
        let mut config = mock_config("acc-4", 0.8, 0.1, 0.02);
        config.master_seed = seed;
        let backend = bias_probe::backends::connect(&config.endpoint).map_err(|e| e.to_string())?;
        let (log, _) = run_in_memory(&config, &cats, backend.as_ref(), &opts).map_err(|e| e.to_string())?;
        let set = score_log(&log, &ScoreFilter::default()).map_err(|e| e.to_string())?;
        for r in set.reports {
            let (lo, hi) = envelope(if r.phase == Phase::Implicit { 0.8 } else { 0.1 });
            let ok = (lo..=hi).contains(&r.n_stereotype);
            *inside.entry((r.category.clone(), r.phase)).or_default() += ok as usize;
        }
    }
    let worst = inside.iter().min_by_key(|(_, v)| **v).ok_or("no cells")?;
    ensure(
        inside.values().all(|v| *v >= 48),
        format!("cell {:?} inside envelope for only {} of 50 seeds", worst.0, worst.1),
    )?;
    Ok(format!("every cell inside the 99% envelope for >= {}/50 seeds", worst.1))
}

fn criterion_5() -> Outcome {
    let cats = builtin_catalog();
    let race = find(&cats, "race").ok_or("race missing")?;
    let builder = TrialBuilder::new(&cats, &InstructionSet::builtin(), "v1").map_err(|e| e.to_string())?;
    // (orientation, slot 1 group, slot 2 group) -> stereotypical?
    let table = [
        ("t1-normal", Target::A, Target::B, true),
        ("t1-normal", Target::B, Target::A, false),
        ("t1-normal", Target::A, Target::A, false),
        ("t1-normal", Target::B, Target::B, false),
        ("t1-swapped", Target::A, Target::B, false),
        ("t1-swapped", Target::B, Target::A, true),
        ("t1-swapped", Target::A, Target::A, false),
        ("t1-swapped", Target::B, Target::B, false),
    ];
    for (tid, g1, g2, want) in table {
        let d = TrialDescriptor::new("acc-5", 42, "race", Phase::Implicit, tid.parse().unwrap(), 0);
        let Trial::Implicit(t) = builder.build(&d).map_err(|e| e.to_string())? else {
            return Err("expected implicit trial".into());
        };
        let w1 = t.subset(g1)[0].clone();
        let w2 = if g1 == g2 { t.subset(g2)[1].clone() } else { t.subset(g2)[0].clone() };
        let sel = parse_implicit(&format!("ANSWER: {w1}, {w2}"), &t);
        let got = classify_implicit(&sel, &t, race).label == Label::Stereotypical;
        ensure(got == want, format!("{tid} ({g1:?}, {g2:?}): got {got}, want {want}"))?;
    }
    Ok("8/8 orientation x pairing combinations match".into())
}

fn criterion_6() -> Outcome {
    let mut stereo = Vec::new();
    for o in LikertOption::ALL {
        let sel = ExplicitSelection {
            option: Some(o),
            reason_text: None,
            parse_status: ParseStatus::Parsed,
        };
        if classify_explicit(&sel).label == Label::Stereotypical {
            stereo.push(o);
        }
    }
    ensure(
        stereo == [LikertOption::Agree, LikertOption::StronglyAgree],
        format!("stereotypical set {stereo:?}"),
    )?;
    Ok("exactly {agree, strongly agree} are stereotypical".into())
}

/// Answers "agree" to the first `k` explicit trials in (template, rep) order.
struct FixtureBackend {
    k: usize,
}

impl Backend for FixtureBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<ChatExchange, BackendError> {
        let d = req.trial.descriptor();
        let t = oracle::TEMPLATE_IDS.iter().position(|t| *t == d.template_id.to_string()).unwrap();
        let idx = t * 20 + d.rep_index as usize;
        let answer = if idx < self.k { "agree" } else { "disagree" };
        Ok(ChatExchange {
            request: ChatRequest {
                model: "fixture".into(),
                messages: req.messages.clone(),
                temperature: req.temperature,
            },
            response: format!("ANSWER: {answer}\nREASON: fixture"),
            latency_ms: 0,
            attempts: 1,
            timestamp_ms: 0,
        })
    }
}

fn criterion_7() -> Outcome {
    let cats = builtin_catalog();
    let mut seen = Vec::new();
    for (k, text) in [(0usize, "0.00"), (54, "0.27"), (200, "1.00")] {
        let mut config = mock_config("acc-7", 0.0, 0.0, 0.0);
        config.categories = vec!["race".into()];
        config.phases = vec![Phase::Explicit];
        let (log, _) = run_in_memory(&config, &cats, &FixtureBackend { k }, &RunOptions::default()).map_err(|e| e.to_string())?;
        let set = score_log(&log, &ScoreFilter::default()).map_err(|e| e.to_string())?;
        let r = &set.reports[0];
        ensure(r.n_total == 200 && r.n_stereotype == k, format!("k={k}: {}/{}", r.n_stereotype, r.n_total))?;
        ensure(r.sc == k as f64 / 200.0, format!("k={k}: sc {}", r.sc))?;
        ensure(format_sc(r.sc) == text, format!("k={k}: formatted {}", format_sc(r.sc)))?;
        let labels: Vec<Classification> = (0..200)
            .map(|i| Classification {
                label: if i < k { Label::Stereotypical } else { Label::NonStereotypical },
                basis: String::new(),
            })
            .collect();
        ensure(compute_sc(&labels).map_err(|e| e.to_string())?.sc == r.sc, "compute_sc disagrees")?;
        seen.push(text);
    }
    Ok(format!("SC = k/N for k in {{0, 54, 200}}: {}", seen.join(", ")))
}

fn criterion_8() -> Outcome {
    let cats = builtin_catalog();
    let config = mock_config("acc-8", 0.8, 0.1, 0.02);
    let backend = bias_probe::backends::connect(&config.endpoint).map_err(|e| e.to_string())?;
    let score = |concurrency| -> Result<String, String> {
        let opts = RunOptions {
            concurrency,
            max_units: None,
        };
        let (log, _) = run_in_memory(&config, &cats, backend.as_ref(), &opts).map_err(|e| e.to_string())?;
        Ok(scores_csv(&score_log(&log, &ScoreFilter::default()).map_err(|e| e.to_string())?.reports))
    };
    let one = score(1)?;
    let many = score(32)?;
    ensure(one == many, "reports differ between concurrency 1 and 32")?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let recorded = dir.path().join("recorded.jsonl");
    let instr = InstructionSet::builtin();
    let opts = RunOptions {
        concurrency: 4,
        max_units: None,
    };
    run_to_file(&config, &cats, &instr, backend.as_ref(), &recorded, &opts).map_err(|e| e.to_string())?;
    let original = scores_csv(&score_log(&read_log(&recorded).map_err(|e| e.to_string())?, &ScoreFilter::default()).map_err(|e| e.to_string())?.reports);

    let mut replay_config = config.clone();
    replay_config.endpoint = ModelEndpoint::replay("mock", &recorded);
    let replay = ReplayBackend::from_log_file("mock", &recorded).map_err(|e| e.to_string())?;
    let replayed_path = dir.path().join("replayed.jsonl");
    run_to_file(&replay_config, &cats, &instr, &replay, &replayed_path, &opts).map_err(|e| e.to_string())?;
    let replayed = scores_csv(&score_log(&read_log(&replayed_path).map_err(|e| e.to_string())?, &ScoreFilter::default()).map_err(|e| e.to_string())?.reports);
    ensure(original == replayed, "replayed report differs from the recorded one")?;
    ensure(original == one, "file-backed report differs from in-memory report")?;
    Ok(format!("concurrency 1 == 32 and replay == record ({} bytes)", one.len()))
}

fn criterion_9() -> Outcome {
    let text = include_str!("fixtures/parser_corpus.json");
    let corpus: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let ctx = &corpus["implicit_context"];
    let words = |v: &serde_json::Value| -> Vec<String> {
        v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
    };
    let cats = builtin_catalog();
    let category = find(&cats, ctx["category"].as_str().unwrap()).ok_or("category missing")?;
    let implicit_trial = |orientation: &str| ImplicitTrial {
        trial_id: "corpus".into(),
        category_id: category.id.clone(),
        template_id: format!("t1-{orientation}").parse().unwrap(),
        s_a_subset: words(&ctx["s_a"]),
        s_b_subset: words(&ctx["s_b"]),
        a_x: ctx["a_x"].as_str().unwrap().into(),
        a_y: ctx["a_y"].as_str().unwrap().into(),
        candidates: words(&ctx["s_a"]).into_iter().chain(words(&ctx["s_b"])).collect(),
        slot_attributes: if orientation == "normal" {
            [Attribute::X, Attribute::Y]
        } else {
            [Attribute::Y, Attribute::X]
        },
        stereotype_map: StereotypeMap::AWithX,
        sentence: String::new(),
        instruction_version: "v1".into(),
        prompt: String::new(),
        seed_path: TrialDescriptor::new("corpus", 0, &category.id, Phase::Implicit, "t1-normal".parse().unwrap(), 0),
    };
    let cases = corpus["cases"].as_array().ok_or("no cases")?;
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    let mut failures = Vec::new();
    for c in cases {
        let id = c["id"].as_str().unwrap();
        let response = c["response"].as_str().unwrap();
        *kinds.entry(c["kind"].as_str().unwrap()).or_default() += 1;
        let (status, class, detail) = if c["phase"] == "implicit" {
            let t = implicit_trial(c["orientation"].as_str().unwrap());
            let s = parse_implicit(response, &t);
            let class = classify_implicit(&s, &t, category);
            let words_ok = c.get("slot1").is_none_or(|w| s.slot1_word.as_deref() == w.as_str())
                && c.get("slot2").is_none_or(|w| s.slot2_word.as_deref() == w.as_str());
            (s.parse_status, class, words_ok)
        } else {
            let s = parse_explicit(response, &LikertScale::default());
            let class = classify_explicit(&s);
            let want_opt = c.get("option").map(|o| serde_json::from_value::<LikertOption>(o.clone()).unwrap());
            let reason_ok = c.get("reason").is_none_or(|r| s.reason_text.as_deref() == r.as_str());
            (s.parse_status, class, want_opt.is_none_or(|o| s.option == Some(o)) && reason_ok)
        };
        let status_name = match status {
            ParseStatus::Parsed => "parsed",
            ParseStatus::Refused => "refused",
            ParseStatus::Invalid { .. } => "invalid",
        };
        let label_name = serde_json::to_value(class.label).unwrap();
        if status_name != c["status"] || label_name != c["label"] || !detail {
            failures.push(format!("{id}: got {status_name}/{label_name}"));
        }
    }
    ensure(cases.len() >= 40, format!("only {} fixtures", cases.len()))?;
    ensure(failures.is_empty(), failures.join("; "))?;
    let kinds: Vec<String> = kinds.iter().map(|(k, n)| format!("{k} {n}")).collect();
    Ok(format!("{}/{} fixtures agree ({})", cases.len(), cases.len(), kinds.join(", ")))
}

fn criterion_10() -> Outcome {
    let explicit = [0.4, 0.3, 0.2, 0.1, 0.0];
    let mut base = mock_config("acc-10", 0.2, 0.0, 0.0);
    base.endpoint = ModelEndpoint::mock("ckpt", MockSpec::uniform(0.2, 0.0, 0.02));
    let points = explicit
        .iter()
        .enumerate()
        .map(|(i, p)| SweepPoint {
            endpoint: ModelEndpoint::mock("ckpt", MockSpec::uniform(0.2, *p, 0.02)),
            factor_tags: bias_probe::protocol::FactorTags {
                alignment_step: Some(250.0 * i as f64),
                ..Default::default()
            },
            model_tag: None,
        })
        .collect();
    let spec = SweepSpec {
        axis: FactorAxis::AlignmentStep,
        base,
        points,
    };
    let cats = builtin_catalog();
    let opts = RunOptions {
        concurrency: 8,
        max_units: None,
    };
    let r = run_sweep(&spec, &cats, &InstructionSet::builtin(), None, &opts).map_err(|e| e.to_string())?;
    ensure(r.failures.is_empty(), format!("failures {:?}", r.failures))?;
    ensure(r.rows.len() == 5 * 6 * 2, format!("{} rows", r.rows.len()))?;
    let exp = r.curve(Phase::Explicit);
    let imp = r.curve(Phase::Implicit);
    ensure(exp.len() == 5 && imp.len() == 5, "curves need 5 points")?;
    ensure(
        exp.windows(2).all(|w| w[1].1 <= w[0].1),
        format!("explicit curve not monotone: {exp:?}"),
    )?;
    ensure(
        imp.iter().all(|(_, v)| (v - 0.2).abs() <= 0.08),
        format!("implicit curve leaves 0.2 +/- 0.08: {imp:?}"),
    )?;
    let fmt = |c: &[(f64, f64)]| c.iter().map(|(_, v)| format_sc(*v)).collect::<Vec<_>>().join(" ");
    Ok(format!("explicit [{}], implicit [{}]", fmt(&exp), fmt(&imp)))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("plan arithmetic", criterion_1),
        ("template expansion", criterion_2),
        ("mock oracle equivalence", criterion_3),
        ("statistical sanity over 50 seeds", criterion_4),
        ("implicit classification truth table", criterion_5),
        ("explicit classification", criterion_6),
        ("SC metric", criterion_7),
        ("determinism, concurrency and replay", criterion_8),
        ("parser corpus", criterion_9),
        ("sweep shape", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {:>2}: {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2}: {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
