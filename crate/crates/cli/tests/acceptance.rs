//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the report reads top to bottom; exits non-zero on any failure.
//!
//! `LADDERFORGE_BLESS=1` rewrites the golden exports instead of comparing.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, ensure, Result};
use common::*;
use ladderforge_core::analytics::{pcc, AgreementMatrix};
use ladderforge_core::generator::parse_ladder;
use ladderforge_core::model::{bucket_of, AnnotatorId, FeedbackLevel, ScoreBucket, Value};
use ladderforge_core::runner::{RunStatus, Runner, Toolchain};
use ladderforge_core::storage::{ingest_problems, ingest_submissions, load_problem_bundle, Store, SubmissionColumns};
use ladderforge_core::study::{Metric, NextItem, Phase, RatingInput, Role, Study};
use ladderforge_core::validator::{validate_ladder, FlagCode};
use ladderforge_core::Score;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

struct Criterion {
    number: u32,
    name: &'static str,
    budget: Duration,
    check: fn() -> Result<String>,
}

const CRITERIA: [Criterion; 7] = [
    Criterion {
        number: 1,
        name: "grading oracle",
        budget: Duration::from_secs(30),
        check: grading_oracle,
    },
    Criterion {
        number: 2,
        name: "parser fidelity",
        budget: Duration::from_secs(1),
        check: parser_fidelity,
    },
    Criterion {
        number: 3,
        name: "validation",
        budget: Duration::from_secs(30),
        check: validation,
    },
    Criterion {
        number: 4,
        name: "agreement arithmetic",
        budget: Duration::from_secs(5),
        check: arithmetic,
    },
    Criterion {
        number: 5,
        name: "deterministic pipeline",
        budget: Duration::from_secs(120),
        check: pipeline,
    },
    Criterion {
        number: 6,
        name: "study state machine",
        budget: Duration::from_secs(10),
        check: state_machine,
    },
    Criterion {
        number: 7,
        name: "bucket boundaries",
        budget: Duration::from_secs(1),
        check: buckets,
    },
];

fn main() -> ExitCode {
    let mut failed = 0;
    for c in &CRITERIA {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(c.check))
            .unwrap_or_else(|p| Err(anyhow!("panicked: {}", panic_message(&p))));
        let elapsed = start.elapsed();
        let verdict = match result {
            Ok(detail) if elapsed <= c.budget => Ok(detail),
            Ok(detail) => Err(format!("{detail}; over budget of {}s", c.budget.as_secs())),
            Err(e) => Err(format!("{e:#}")),
        };
        let secs = elapsed.as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS criterion {}: {} ({detail}) [{secs:.2}s]", c.number, c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {} ({why}) [{secs:.2}s]", c.number, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

/// Problems and submissions only, as after `ingest`.
fn ingested(dir: &Path) -> Result<Store> {
    let store = Store::open(dir)?;
    ingest_problems(&store, &fixtures().join("problems"))?;
    ingest_submissions(
        &store,
        &fixtures().join("submissions.csv"),
        &SubmissionColumns::default(),
    )?;
    Ok(store)
}

fn java() -> Result<Runner> {
    Ok(Runner::new(Toolchain::resolve("java")?))
}

fn grading_oracle() -> Result<String> {
    let dir = TempDir::new()?;
    let store = ingested(dir.path())?;
    let runner = java()?;

    // Only (5, 6) fails: the guard `a + b <= 10 && a + b >= 20` never holds.
    let suite = load_problem_bundle(&fixtures().join("suites/sortaSum-3"))?;
    let s02 = store.submission(&sid("s02"))?.ok_or_else(|| anyhow!("s02 missing"))?;
    let grade = runner.grade(&s02, &suite)?;
    ensure!(
        (grade.passes, grade.total) == (2, 3),
        "s02 scored {}/{}",
        grade.passes,
        grade.total
    );

    // s04 reads nums[4] (`i <= nums.length`); s06 reads nums[i + 1] at the last i.
    let problem = store
        .problem(&pid("isEverywhere"))?
        .ok_or_else(|| anyhow!("isEverywhere missing"))?;
    let args = ["[1, 2, 1, 3]", "1"]
        .iter()
        .zip(&problem.signature.params)
        .map(|(lit, p)| Value::parse_as(lit, p.value_type))
        .collect::<Result<Vec<_>, _>>()?;
    for id in ["s04", "s06"] {
        let sub = store.submission(&sid(id))?.ok_or_else(|| anyhow!("{id} missing"))?;
        let out = runner.run_single(&sub, &problem, &args)?;
        ensure!(
            out.status == RunStatus::RuntimeError,
            "{id}: {:?} {:?}",
            out.status,
            out.stdout
        );
        ensure!(out.stderr.contains("ArrayIndexOutOfBounds"), "{id}: {}", out.stderr);
    }
    Ok("s02 2/3; s04, s06 index out of bounds".into())
}

fn parser_fidelity() -> Result<String> {
    let response = fs::read_to_string(fixtures().join("responses/s02.txt"))?;
    let levels = parse_ladder(&response)?;
    ensure!(levels.len() == 5, "{} levels", levels.len());
    ensure!(
        levels[&FeedbackLevel::L0] == "Incorrect",
        "L0 = {:?}",
        levels[&FeedbackLevel::L0]
    );
    ensure!(
        levels[&FeedbackLevel::L4].contains("a + b >= 10"),
        "L4 = {:?}",
        levels[&FeedbackLevel::L4]
    );
    for level in FeedbackLevel::ALL {
        let heading = format!("Level {}:", level.index());
        ensure!(response.contains(&heading), "no heading {heading}");
        let cut = response.replacen(&heading, "", 1);
        match parse_ladder(&cut) {
            Err(e) if e.missing == [level] => {}
            Err(e) => bail!("without {heading}: missing {:?}", e.missing),
            Ok(_) => bail!("parsed without {heading}"),
        }
    }
    Ok("5 levels; each removed heading is named".into())
}

fn validation() -> Result<String> {
    let dir = TempDir::new()?;
    let store = fixture_store(dir.path());
    let runner = java()?;
    let mut codes = Vec::new();
    for id in ["s06", "s02"] {
        let sub = store.submission(&sid(id))?.ok_or_else(|| anyhow!("{id} missing"))?;
        let problem = store
            .problem(&sub.problem_id)?
            .ok_or_else(|| anyhow!("problem missing"))?;
        let grade = runner.grade(&sub, &problem)?;
        let report = validate_ladder(&fixture_ladder(&store, id), &problem, &sub, &grade, &runner)?;
        codes.push(report.codes());
        match id {
            "s06" => ensure!(
                report.has(FlagCode::ClaimedOutputMismatch),
                "s06 flags: {:?}",
                report.codes()
            ),
            _ => ensure!(!report.has_errors(), "s02 flags: {:?}", report.flags),
        }
    }
    Ok(format!("s06 {:?}; s02 {:?}", codes[0], codes[1]))
}

const TABLE: [[f64; 10]; 10] = [
    [1.00, 0.65, 0.11, 0.04, 0.21, 0.59, 0.65, 0.18, 0.48, 0.18],
    [0.65, 1.00, 0.20, 0.13, 0.07, 0.53, 0.48, 0.14, 0.40, 0.27],
    [0.11, 0.20, 1.00, -0.05, -0.09, 0.03, 0.12, 0.37, 0.00, 0.48],
    [0.04, 0.13, -0.05, 1.00, 0.11, -0.10, 0.14, -0.06, -0.06, 0.09],
    [0.21, 0.07, -0.09, 0.11, 1.00, 0.17, 0.09, 0.06, 0.03, 0.10],
    [0.59, 0.53, 0.03, -0.10, 0.17, 1.00, 0.39, 0.23, 0.43, 0.19],
    [0.65, 0.48, 0.12, 0.14, 0.09, 0.39, 1.00, 0.01, 0.37, 0.28],
    [0.18, 0.14, 0.37, -0.06, 0.06, 0.23, 0.01, 1.00, 0.14, 0.25],
    [0.48, 0.40, 0.00, -0.06, 0.03, 0.43, 0.37, 0.14, 1.00, 0.05],
    [0.18, 0.27, 0.48, 0.09, 0.10, 0.19, 0.28, 0.25, 0.05, 1.00],
];

fn arithmetic() -> Result<String> {
    let ids = "ABCDEFGHIJ"
        .chars()
        .map(|c| AnnotatorId::new(c.to_string()).unwrap())
        .collect();
    let values = TABLE.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect();
    let m = AgreementMatrix::<f64>::from_values(ids, values, vec![]);
    let row_a = m.row_averages[0].ok_or_else(|| anyhow!("row A undefined"))?;
    let row_d = m.row_averages[3].ok_or_else(|| anyhow!("row D undefined"))?;
    let overall = m.overall_average.ok_or_else(|| anyhow!("overall undefined"))?;
    for (name, got, want) in [
        ("row A", row_a, 0.41),
        ("row D", row_d, 0.12),
        ("overall", overall, 0.28),
    ] {
        ensure!((got - want).abs() <= 0.005, "{name} = {got}, printed {want}");
    }

    let hand: f64 = pcc(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0])?;
    ensure!((hand - 0.6).abs() < 1e-12, "hand case gave {hand}");

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for trial in 0..1000 {
        let n = rng.gen_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let r = pcc(&x, &y)?;
        ensure!((r - pcc(&y, &x)?).abs() < 1e-12, "trial {trial}: not symmetric");
        let (a, b) = (rng.gen_range(0.01..100.0), rng.gen_range(-100.0..100.0));
        let (c, d) = (rng.gen_range(0.01..100.0), rng.gen_range(-100.0..100.0));
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let ys: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        let moved = pcc(&xs, &ys)?;
        ensure!(
            (r - moved).abs() < 1e-9,
            "trial {trial}: {r} vs {moved} after affine map"
        );
        ensure!((-1.0..=1.0).contains(&r), "trial {trial}: {r} out of range");
    }

    ensure!(
        pcc::<f64>(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]).is_err(),
        "constant x accepted"
    );
    ensure!(
        pcc::<f64>(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).is_err(),
        "constant y accepted"
    );
    Ok(format!(
        "A {row_a:.3}, D {row_d:.3}, overall {overall:.4}; pcc {hand}; 1000 trials"
    ))
}

const EXPORTS: [&str; 5] = [
    "agreement.csv",
    "fig1_relevance.csv",
    "fig1_effectiveness.csv",
    "fig2_relevance.csv",
    "fig2_effectiveness.csv",
];

const ANNOTATORS: usize = 10;
const SEED: u64 = 2024;

/// The whole pipeline through the binary; ratings come from seeded
/// simulated annotators between `study-init` and `analyze`.
fn run_pipeline(data: &Path) -> Result<Vec<Vec<u8>>> {
    let problems = fixtures().join("problems");
    let submissions = fixtures().join("submissions.csv");
    let responses = fixtures().join("responses");
    let template = fixtures().join("study.json");
    let out = data.join("exports");
    let steps: [(&[&str], i32); 6] = [
        (
            &[
                "ingest",
                "--problems",
                path(&problems),
                "--submissions",
                path(&submissions),
            ],
            0,
        ),
        (&["grade"], 0),
        (&["select"], 0),
        (&["generate", "--mock", path(&responses)], 0),
        // Several fixture ladders are flagged on purpose.
        (&["validate"], 1),
        (&["study-init", path(&template)], 0),
    ];
    for (args, code) in steps {
        ladderforge(data, args, code)?;
    }
    let study = Study::load(Store::open(data)?)?;
    for i in 0..ANNOTATORS {
        simulate_annotator(&study, i, SEED);
    }
    ladderforge(data, &["analyze", "--out", path(&out)], 0)?;
    EXPORTS.iter().map(|f| Ok(fs::read(out.join(f))?)).collect()
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn ladderforge(data: &Path, args: &[&str], expected: i32) -> Result<()> {
    let out = Command::new(env!("CARGO_BIN_EXE_ladderforge"))
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .env_remove("LADDERFORGE_API_KEY")
        .output()?;
    if out.status.code() != Some(expected) {
        bail!(
            "`{}` exited {:?}:\n{}{}",
            args[0],
            out.status.code(),
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    Ok(())
}

fn pipeline() -> Result<String> {
    let mut runs = Vec::new();
    let mut times = Vec::new();
    for _ in 0..2 {
        let dir = TempDir::new()?;
        let start = Instant::now();
        runs.push(run_pipeline(dir.path())?);
        times.push(start.elapsed().as_secs_f64());
    }
    for (name, (a, b)) in EXPORTS.iter().zip(runs[0].iter().zip(&runs[1])) {
        ensure!(a == b, "{name} differs between runs");
    }
    let golden = fixtures().join("golden");
    if std::env::var_os("LADDERFORGE_BLESS").is_some() {
        fs::create_dir_all(&golden)?;
        for (name, bytes) in EXPORTS.iter().zip(&runs[0]) {
            fs::write(golden.join(name), bytes)?;
        }
    }
    for (name, bytes) in EXPORTS.iter().zip(&runs[0]) {
        let want = fs::read(golden.join(name)).map_err(|e| anyhow!("golden {name}: {e}"))?;
        ensure!(&want == bytes, "{name} does not match the golden file");
    }
    Ok(format!(
        "{} exports match; runs took {:.1}s and {:.1}s",
        EXPORTS.len(),
        times[0],
        times[1]
    ))
}

fn state_machine() -> Result<String> {
    let dir = TempDir::new()?;
    let study = Study::load(fixture_store(dir.path()))?;
    let right = right_answers(&study);
    let eligible: Vec<String> = ELIGIBILITY_OUTPUTS.iter().map(|s| s.to_string()).collect();
    let aid = |s: &str| AnnotatorId::new(s).unwrap();

    let dq = aid("dq");
    study.register(dq.clone(), "dq", Role::Student)?;
    let wrong = vec!["false".to_string(); 3];
    ensure!(
        study.submit_eligibility(&dq, &wrong)?.phase == Phase::Disqualified,
        "not disqualified"
    );
    let rating = RatingInput {
        submission_id: sid("s01"),
        level: FeedbackLevel::L0,
        metric: Metric::Relevance,
        score: 3,
    };
    ensure!(study.submit_eligibility(&dq, &eligible).is_err(), "retook eligibility");
    ensure!(study.submit_calibration(&dq, &right).is_err(), "calibrated");
    ensure!(study.next_evaluation_item(&dq).is_err(), "served an item");
    ensure!(study.submit_rating(&dq, &rating).is_err(), "rated");
    ensure!(study.store().ratings_for(&dq)?.is_empty(), "ratings stored");
    ensure!(
        study.annotator(&dq)?.state.phase == Phase::Disqualified,
        "left Disqualified"
    );

    let retry = aid("retry");
    study.register(retry.clone(), "retry", Role::Student)?;
    study.submit_eligibility(&retry, &eligible)?;
    let mut miss = right.clone();
    miss[0] = (miss[0] + 1) % 5;
    for attempt in 1..=2 {
        let out = study.submit_calibration(&retry, &miss)?;
        ensure!(
            out.state.phase == Phase::Calibration,
            "attempt {attempt} left calibration"
        );
        ensure!(
            out.state.calibration_attempts == attempt,
            "attempts = {}",
            out.state.calibration_attempts
        );
    }
    ensure!(
        study.submit_calibration(&retry, &right)?.state.phase == Phase::Evaluation,
        "did not reach Evaluation"
    );

    let mut order = Vec::new();
    while let NextItem::Item(item) = study.next_evaluation_item(&retry)? {
        order.push((
            item.item.problem_id.to_string(),
            item.item.bucket,
            item.item.submission_id.to_string(),
        ));
        for level in FeedbackLevel::ALL {
            for metric in Metric::ALL {
                let input = RatingInput {
                    submission_id: item.item.submission_id.clone(),
                    level,
                    metric,
                    score: 4,
                };
                study.submit_rating(&retry, &input)?;
            }
        }
    }
    let expected: Vec<_> = PICKS
        .iter()
        .flat_map(|(p, ids)| {
            ScoreBucket::STUDY
                .iter()
                .zip(ids)
                .map(|(b, id)| (p.to_string(), *b, id.to_string()))
        })
        .collect();
    ensure!(order == expected, "served {order:?}");

    let n = study.store().ratings_for(&retry)?.len();
    ensure!(n == 150, "{n} ratings");
    ensure!(study.annotator(&retry)?.state.phase == Phase::Done, "not Done");
    ensure!(study.submit_rating(&retry, &rating).is_err(), "rated after Done");
    Ok("disqualified locked out; 2 misses then Evaluation; 150 ratings then Done".into())
}

fn buckets() -> Result<String> {
    use ScoreBucket::*;
    let r = |n, d| Score::new(n, d);
    let table: [(&str, f64, Score, ScoreBucket); 9] = [
        ("0.0", 0.0, r(0, 1), Low),
        ("0.19 recurring", 19.0 / 99.0, r(19, 99), Low),
        ("0.20", 0.20, r(1, 5), Other),
        ("0.40", 0.40, r(2, 5), Mid),
        ("0.60", 0.60, r(3, 5), Mid),
        ("0.61", 0.61, r(61, 100), Other),
        ("0.80", 0.80, r(4, 5), Other),
        ("0.81", 0.81, r(81, 100), High),
        ("1.0", 1.0, r(1, 1), Perfect),
    ];
    for (label, float, exact, want) in table {
        ensure!(bucket_of(float)? == want, "{label} as f64");
        ensure!(bucket_of(float as f32)? == want, "{label} as f32");
        ensure!(bucket_of(exact)? == want, "{label} as {exact}");
    }
    ensure!(bucket_of(0.199_999_999_999_f64)? == Low, "0.1999... as f64");
    ensure!(
        bucket_of(-0.01).is_err() && bucket_of(1.01).is_err() && bucket_of(f64::NAN).is_err(),
        "out of range accepted"
    );
    Ok("9 boundaries for f64, f32 and exact ratios".into())
}
