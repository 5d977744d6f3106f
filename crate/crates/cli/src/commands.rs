use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::{anyhow, bail, Context, Result};
use ladderforge_core::analytics::{aggregate_csv, agreement_csv, AnalyticsSnapshot};
use ladderforge_core::generator::{
    generate_ladder, Completer, FeedbackLadder, MockCompleter, OpenAiCompleter, API_KEY_ENV,
};
use ladderforge_core::model::{Problem, ProblemId, Submission, SubmissionId, Value};
use ladderforge_core::runner::{Compilation, RunStatus, Runner, Toolchain};
use ladderforge_core::storage::{ingest_problems, ingest_submissions, select_study_set, Store, SubmissionColumns};
use ladderforge_core::study::{CalibrationItem, EligibilityTask, Metric, StudyDefinition, StudyProblem};
use ladderforge_core::validator::{validate_ladder, FlagCode, ValidationReport};
use serde::Deserialize;

use crate::cli::{Cli, Command};

/// Runs one subcommand and returns the process exit status.
pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Ingest {
            problems,
            submissions,
            columns,
        } => ingest(cli, problems.as_deref(), submissions.as_deref(), columns.as_deref()),
        Command::Grade { all, ids, jobs } => grade(cli, *all, ids, *jobs),
        Command::Select => select(cli),
        Command::Generate { mock, ids, force, jobs } => generate(cli, mock.as_deref(), ids, *force, *jobs),
        Command::Validate { ids } => validate(cli, ids),
        Command::Analyze { out } => {
            let out = out.clone().unwrap_or_else(|| cli.data_dir.join("exports"));
            analyze(cli, &out)
        }
        Command::Serve { port, host } => crate::api::serve_blocking(open_store(cli)?, (*host, *port).into()),
        Command::StudyInit { template } => study_init(cli, template),
    }
}

fn open_store(cli: &Cli) -> Result<Store> {
    Store::open(&cli.data_dir).with_context(|| format!("cannot open store at {}", cli.data_dir.display()))
}

fn runner(cli: &Cli) -> Result<Runner> {
    let cache = cli.data_dir.join("cache").join("programs");
    Ok(Runner::new(Toolchain::resolve(&cli.toolchain)?).with_cache_dir(cache))
}

/// Maps `f` over `items` on up to `jobs` threads, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new(items.iter().map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every item ran"))
        .collect()
}

fn problem_map(store: &Store) -> Result<HashMap<ProblemId, Problem>> {
    Ok(store.problems()?.into_iter().map(|p| (p.id.clone(), p)).collect())
}

fn lookup_submissions(store: &Store, ids: &[String]) -> Result<Vec<Submission>> {
    ids.iter()
        .map(|raw| {
            let id = SubmissionId::new(raw.as_str()).map_err(|e| anyhow!("bad submission id {raw}: {e}"))?;
            store.submission(&id)?.ok_or_else(|| anyhow!("unknown submission {id}"))
        })
        .collect()
}

fn ingest(cli: &Cli, problems: Option<&Path>, submissions: Option<&Path>, columns: Option<&Path>) -> Result<u8> {
    if problems.is_none() && submissions.is_none() {
        bail!("nothing to ingest: pass --problems and/or --submissions");
    }
    let store = open_store(cli)?;
    if let Some(path) = problems {
        let n = ingest_problems(&store, path)?;
        println!("ingested {n} problem(s)");
    }
    if let Some(path) = submissions {
        let cols: SubmissionColumns = match columns {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
                .with_context(|| format!("bad column mapping {}", p.display()))?,
            None => SubmissionColumns::default(),
        };
        let report = ingest_submissions(&store, path, &cols)?;
        println!(
            "ingested {} submission(s), rejected {}",
            report.accepted,
            report.rejected.len()
        );
        for r in &report.rejected {
            eprintln!("row {}: {}", r.row, r.reason);
        }
    }
    Ok(0)
}

fn grade(cli: &Cli, all: bool, ids: &[String], jobs: usize) -> Result<u8> {
    let store = open_store(cli)?;
    let runner = runner(cli)?;
    let problems = problem_map(&store)?;
    let targets: Vec<Submission> = if all {
        store.submissions()?
    } else if !ids.is_empty() {
        lookup_submissions(&store, ids)?
    } else {
        store
            .submissions()?
            .into_iter()
            .filter(|s| store.grade(&s.id).ok().flatten().is_none())
            .collect()
    };

    let mut results = Vec::with_capacity(targets.len());
    // Chunks keep precompiled programs within the runner's in-memory cache.
    for chunk in targets.chunks(32) {
        let jobs_for: Vec<_> = chunk
            .iter()
            .filter_map(|s| problems.get(&s.problem_id).map(|p| (p, s.code.as_str())))
            .collect();
        runner.precompile(&jobs_for)?;
        results.extend(parallel_map(chunk, jobs, |s| {
            let problem = problems
                .get(&s.problem_id)
                .ok_or_else(|| anyhow!("unknown problem {}", s.problem_id))?;
            let report = runner.grade(s, problem)?;
            store.save_grade(&report)?;
            Ok::<_, anyhow::Error>(report)
        }));
    }
    let mut failed = 0;
    for (s, r) in targets.iter().zip(results) {
        match r {
            Ok(g) if g.compiled => {
                let bucket = g.bucket().map(|b| b.to_string()).unwrap_or_default();
                println!(
                    "{:<14} {:<14} {:>3}/{:<3} {bucket}",
                    s.id.as_str(),
                    s.problem_id.as_str(),
                    g.passes,
                    g.total
                );
            }
            Ok(_) => println!("{:<14} {:<14} compile error", s.id.as_str(), s.problem_id.as_str()),
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e:#}", s.id);
            }
        }
    }
    println!("graded {} submission(s)", targets.len() - failed);
    Ok(u8::from(failed > 0))
}

fn select(cli: &Cli) -> Result<u8> {
    let store = open_store(cli)?;
    let ids: Vec<ProblemId> = store.problems()?.into_iter().map(|p| p.id).collect();
    let selection = select_study_set(&ids, &store.submissions()?, &store.grades()?)?;
    store.save_selection(&selection)?;
    println!("{:<14} {:<14} {:<14} high", "problem", "low", "mid");
    for (problem, picks) in &selection {
        println!(
            "{:<14} {:<14} {:<14} {}",
            problem.as_str(),
            picks.low.as_str(),
            picks.mid.as_str(),
            picks.high
        );
    }
    Ok(0)
}

fn generate(cli: &Cli, mock: Option<&Path>, ids: &[String], force: bool, jobs: usize) -> Result<u8> {
    let params = cli.generation_params();
    params.validate()?;
    let completer: Box<dyn Completer> = match mock {
        Some(dir) => Box::new(MockCompleter::from_dir(dir)?),
        None => {
            if std::env::var(API_KEY_ENV).map_or(true, |k| k.trim().is_empty()) {
                bail!("missing API credential: set {API_KEY_ENV} or pass --mock <dir>");
            }
            Box::new(OpenAiCompleter::from_env())
        }
    };
    let store = open_store(cli)?;
    let problems = problem_map(&store)?;
    let candidates: Vec<Submission> = if !ids.is_empty() {
        lookup_submissions(&store, ids)?
    } else if let Some(selection) = store.selection()? {
        let ids: Vec<String> = selection
            .values()
            .flat_map(|p| p.iter().map(|(_, id)| id.to_string()))
            .collect();
        lookup_submissions(&store, &ids)?
    } else {
        store
            .submissions()?
            .into_iter()
            .filter(|s| {
                store
                    .grade(&s.id)
                    .ok()
                    .flatten()
                    .is_some_and(|g| g.compiled && !g.is_perfect())
            })
            .collect()
    };
    let targets: Vec<Submission> = candidates
        .into_iter()
        .filter(|s| {
            let keep = force || !store.has_ladder(&s.id);
            if !keep {
                println!("{:<14} ladder exists, skipped", s.id.as_str());
            }
            keep
        })
        .collect();

    let results = parallel_map(&targets, jobs, |s| -> Result<FeedbackLadder> {
        let problem = problems
            .get(&s.problem_id)
            .ok_or_else(|| anyhow!("unknown problem {}", s.problem_id))?;
        let grade = store
            .grade(&s.id)?
            .ok_or_else(|| anyhow!("not graded; run `grade` first"))?;
        let ladder = generate_ladder(problem, s, &grade, &params, &*completer)?;
        store.save_ladder(&ladder)?;
        Ok(ladder)
    });
    let mut failed = 0;
    for (s, r) in targets.iter().zip(results) {
        match r {
            Ok(l) => println!(
                "{:<14} generated in {} attempt(s){}",
                s.id.as_str(),
                l.attempts,
                if l.truncated { ", truncated" } else { "" }
            ),
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e:#}", s.id);
            }
        }
    }
    Ok(u8::from(failed > 0))
}

fn validate(cli: &Cli, ids: &[String]) -> Result<u8> {
    let store = open_store(cli)?;
    let runner = runner(cli)?;
    let problems = problem_map(&store)?;
    let ladders: Vec<FeedbackLadder> = if ids.is_empty() {
        store.ladders()?
    } else {
        lookup_submissions(&store, ids)?
            .iter()
            .map(|s| store.ladder(&s.id)?.ok_or_else(|| anyhow!("no ladder for {}", s.id)))
            .collect::<Result<_>>()?
    };
    if ladders.is_empty() {
        bail!("no ladders to validate");
    }

    let mut programs = Vec::new();
    for l in &ladders {
        if let (Some(problem), Some(sub)) = (problems.get(&l.problem_id), store.submission(&l.submission_id)?) {
            programs.push((problem, sub.code));
            if let Some(reference) = &problem.reference_solution {
                programs.push((problem, reference.clone()));
            }
        }
    }
    let jobs_for: Vec<_> = programs.iter().map(|(p, code)| (*p, code.as_str())).collect();
    runner.precompile(&jobs_for)?;

    let results = parallel_map(&ladders, 4, |l| -> Result<ValidationReport> {
        let problem = problems
            .get(&l.problem_id)
            .ok_or_else(|| anyhow!("unknown problem {}", l.problem_id))?;
        let sub = store
            .submission(&l.submission_id)?
            .ok_or_else(|| anyhow!("unknown submission"))?;
        let grade = store.grade(&l.submission_id)?.ok_or_else(|| anyhow!("not graded"))?;
        let report = validate_ladder(l, problem, &sub, &grade, &runner)?;
        store.save_validation(&report)?;
        Ok(report)
    });

    let mut counts: BTreeMap<FlagCode, usize> = BTreeMap::new();
    let (mut failed, mut with_errors) = (0, 0);
    for (l, r) in ladders.iter().zip(results) {
        match r {
            Ok(report) => {
                with_errors += usize::from(report.has_errors());
                let flags: Vec<String> = report
                    .flags
                    .iter()
                    .map(|f| match f.level {
                        Some(level) => format!("{}@L{}", f.code.as_str(), level.index()),
                        None => f.code.as_str().to_string(),
                    })
                    .collect();
                for f in &report.flags {
                    *counts.entry(f.code).or_default() += 1;
                }
                println!(
                    "{:<14} {}",
                    l.submission_id.as_str(),
                    if flags.is_empty() { "ok".into() } else { flags.join(" ") }
                );
            }
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e:#}", l.submission_id);
            }
        }
    }
    println!();
    println!("{:<26} {:<9} count", "flag", "severity");
    for code in FlagCode::ALL {
        println!(
            "{:<26} {:<9} {}",
            code.as_str(),
            code.severity().to_string(),
            counts.get(&code).copied().unwrap_or(0)
        );
    }
    println!(
        "{} ladder(s) checked, {} with errors",
        ladders.len() - failed,
        with_errors
    );
    Ok(u8::from(failed > 0 || with_errors > 0))
}

fn analyze(cli: &Cli, out: &Path) -> Result<u8> {
    let store = open_store(cli)?;
    let snapshot = AnalyticsSnapshot::load(&store)?;
    if snapshot.ratings.is_empty() {
        bail!("no ratings to analyze");
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = out.join(name);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    };

    let mut status = 0;
    match snapshot.agreement::<f64>() {
        Ok(m) => {
            for note in &m.notes {
                eprintln!("note: {note}");
            }
            write("agreement.csv", agreement_csv(&m))?;
        }
        Err(e) => {
            eprintln!("agreement: {e}");
            status = 1;
        }
    }
    for metric in Metric::ALL {
        for (name, agg) in [
            ("fig1", snapshot.question_level::<f64>(metric)),
            ("fig2", snapshot.bucket_level::<f64>(metric)),
        ] {
            for note in &agg.notes {
                eprintln!("note: {note}");
            }
            write(&format!("{name}_{metric}.csv"), aggregate_csv(&agg))?;
        }
    }
    Ok(status)
}

/// Study definition template: everything except the selected submissions
/// and the runner-computed eligibility outputs.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StudyTemplate {
    /// Presentation order; defaults to problem id order.
    #[serde(default)]
    pub problem_order: Vec<ProblemId>,
    pub eligibility: EligibilityTemplate,
    pub calibration: Vec<CalibrationItem>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EligibilityTemplate {
    pub problem_id: ProblemId,
    pub code: String,
    pub inputs: Vec<Vec<Value>>,
}

fn study_init(cli: &Cli, template: &Path) -> Result<u8> {
    let text = fs::read_to_string(template).with_context(|| format!("cannot read {}", template.display()))?;
    let template: StudyTemplate =
        serde_json::from_str(&text).with_context(|| format!("bad study template {}", template.display()))?;
    let store = open_store(cli)?;
    let selection = store
        .selection()?
        .ok_or_else(|| anyhow!("no selection; run `select` first"))?;
    let order: Vec<ProblemId> = if template.problem_order.is_empty() {
        selection.keys().cloned().collect()
    } else {
        template.problem_order.clone()
    };
    let problems = order
        .iter()
        .map(|id| {
            let picks = selection
                .get(id)
                .ok_or_else(|| anyhow!("problem {id} is not in the selection"))?;
            Ok(StudyProblem {
                problem_id: id.clone(),
                picks: picks.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let e = &template.eligibility;
    let problem = store
        .problem(&e.problem_id)?
        .ok_or_else(|| anyhow!("unknown problem {}", e.problem_id))?;
    for (i, args) in e.inputs.iter().enumerate() {
        problem.signature.check_arguments(i, args)?;
    }
    let program = match runner(cli)?.compile(&problem, &e.code)? {
        Compilation::Compiled(p) => p,
        Compilation::Failed { diagnostics } => bail!("eligibility program does not compile:\n{diagnostics}"),
    };
    let mut expected = Vec::new();
    for args in &e.inputs {
        let outcome = program.run(args)?;
        if outcome.status != RunStatus::Output {
            bail!("eligibility program fails on {args:?}: {}", outcome.observed());
        }
        expected.push(outcome.stdout.trim().to_string());
    }

    let definition = StudyDefinition {
        problems,
        eligibility: EligibilityTask {
            problem_id: e.problem_id.clone(),
            code: e.code.clone(),
            inputs: e.inputs.clone(),
            expected_outputs: expected,
        },
        calibration: template.calibration,
    };
    definition.validate()?;
    store.save_study_definition(&definition)?;
    let missing: Vec<String> = definition
        .items()
        .into_iter()
        .filter(|i| !store.has_ladder(&i.submission_id))
        .map(|i| i.submission_id.to_string())
        .collect();
    if !missing.is_empty() {
        eprintln!("warning: no ladder yet for {}", missing.join(", "));
    }
    println!(
        "study with {} item(s), {} calibration question(s)",
        definition.items().len(),
        definition.calibration.len()
    );
    Ok(0)
}
