//! Fixture-backed stores for the integration tests. Nothing here runs Java:
//! ladders come straight from the fixture responses and the eligibility
//! outputs are hand-traced.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use ladderforge_cli::commands::StudyTemplate;
use ladderforge_core::generator::{build_prompt, parse_ladder, FeedbackLadder, GenerationParams, LadderLevels};
use ladderforge_core::model::{FeedbackLevel, ProblemId, SubmissionId};
use ladderforge_core::storage::{ingest_problems, ingest_submissions, BucketPicks, Store, SubmissionColumns};
use ladderforge_core::study::{
    EligibilityTask, Metric, NextItem, RatingInput, Role, Study, StudyDefinition, StudyProblem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixtures() -> PathBuf {
    repo().join("fixtures")
}

pub fn sid(s: &str) -> SubmissionId {
    SubmissionId::new(s).unwrap()
}

pub fn pid(s: &str) -> ProblemId {
    ProblemId::new(s).unwrap()
}

/// Low, Mid, High picks per fixture problem, in template order.
pub const PICKS: [(&str, [&str; 3]); 5] = [
    ("sortaSum", ["s01", "s02", "s03"]),
    ("isEverywhere", ["s04", "s05", "s06"]),
    ("doubleX", ["s07", "s08", "s09"]),
    ("countCode", ["s10", "s11", "s12"]),
    ("sum13", ["s13", "s14", "s15"]),
];

/// Outputs of the template's eligibility program, traced by hand.
pub const ELIGIBILITY_OUTPUTS: [&str; 3] = ["true", "false", "true"];

pub fn template() -> StudyTemplate {
    serde_json::from_str(&fs::read_to_string(fixtures().join("study.json")).unwrap()).unwrap()
}

pub fn fixture_ladder(store: &Store, id: &str) -> FeedbackLadder {
    let sub = store.submission(&sid(id)).unwrap().unwrap();
    let problem = store.problem(&sub.problem_id).unwrap().unwrap();
    let dir = fixtures().join("responses");
    let (path, truncated) = match dir.join(format!("{id}.txt")) {
        p if p.exists() => (p, false),
        _ => (dir.join(format!("{id}.truncated.txt")), true),
    };
    let raw = fs::read_to_string(path).unwrap();
    FeedbackLadder {
        submission_id: sub.id.clone(),
        problem_id: sub.problem_id.clone(),
        levels: LadderLevels::new(parse_ladder(&raw).unwrap()).unwrap(),
        prompt: build_prompt(&problem, &sub),
        raw_response: raw,
        params: GenerationParams::default(),
        created_at: Utc::now(),
        truncated,
        attempts: 1,
    }
}

/// Problems, submissions, ladders and the study definition, as the pipeline
/// would leave them.
pub fn fixture_store(dir: &Path) -> Store {
    let store = Store::open(dir).unwrap();
    ingest_problems(&store, &fixtures().join("problems")).unwrap();
    let report = ingest_submissions(
        &store,
        &fixtures().join("submissions.csv"),
        &SubmissionColumns::default(),
    )
    .unwrap();
    assert_eq!(report.accepted, 15);
    for (_, ids) in PICKS {
        for id in ids {
            store.save_ladder(&fixture_ladder(&store, id)).unwrap();
        }
    }
    let t = template();
    let definition = StudyDefinition {
        problems: PICKS
            .iter()
            .map(|(p, [low, mid, high])| StudyProblem {
                problem_id: pid(p),
                picks: BucketPicks {
                    low: sid(low),
                    mid: sid(mid),
                    high: sid(high),
                },
            })
            .collect(),
        eligibility: EligibilityTask {
            problem_id: t.eligibility.problem_id,
            code: t.eligibility.code,
            inputs: t.eligibility.inputs,
            expected_outputs: ELIGIBILITY_OUTPUTS.iter().map(|s| s.to_string()).collect(),
        },
        calibration: t.calibration,
    };
    store.save_study_definition(&definition).unwrap();
    store
}

pub fn right_answers(study: &Study) -> Vec<usize> {
    study
        .definition()
        .calibration
        .iter()
        .map(|c| c.correct_choice_index)
        .collect()
}

/// A seeded annotator who passes both gates and rates every item. Scores
/// fall with level and with bucket, plus noise, loosely like the study.
pub fn simulate_annotator(study: &Study, index: usize, seed: u64) {
    let id = ladderforge_core::model::AnnotatorId::new(format!("A{index:02}")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    study
        .register(id.clone(), &format!("Annotator {index}"), Role::Researcher)
        .unwrap();
    let outputs: Vec<String> = study.definition().eligibility.expected_outputs.clone();
    study.submit_eligibility(&id, &outputs).unwrap();
    study.submit_calibration(&id, &right_answers(study)).unwrap();
    while let NextItem::Item(item) = study.next_evaluation_item(&id).unwrap() {
        let bucket = item.item.index % 3;
        for level in FeedbackLevel::ALL {
            for metric in Metric::ALL {
                let base = 5.0 - 0.45 * level.index() as f64 - 0.4 * bucket as f64;
                let score = (base + rng.gen_range(-1.2..1.2)).round().clamp(1.0, 5.0) as u8;
                let input = RatingInput {
                    submission_id: item.item.submission_id.clone(),
                    level,
                    metric,
                    score,
                };
                study.submit_rating(&id, &input).unwrap();
            }
        }
    }
}
