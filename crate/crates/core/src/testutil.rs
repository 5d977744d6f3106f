//! Record builders shared by unit tests.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{DateTime, Duration, TimeZone, Utc};

use crate::generator::{parse_ladder, FeedbackLadder, GenerationParams, LadderLevels};
use crate::model::{
    Parameter, ParameterSignature, Problem, ProblemId, StudentId, Submission, SubmissionId, TestCase, Value, ValueType,
};
use crate::runner::{GradeReport, TestVerdict, Verdict};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn pid(s: &str) -> ProblemId {
    ProblemId::new(s).unwrap()
}

pub fn sid(s: &str) -> SubmissionId {
    SubmissionId::new(s).unwrap()
}

pub fn at(minutes: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2019, 3, 1, 12, 0, 0).unwrap() + Duration::minutes(minutes)
}

/// Shell-toolchain problem adding two integers.
pub fn add_problem(id: &str) -> Problem {
    let int = |name: &str| Parameter {
        name: name.into(),
        value_type: ValueType::Integer,
    };
    Problem {
        id: pid(id),
        title: id.into(),
        statement: "Add two integers.".into(),
        signature: ParameterSignature::new(vec![int("a"), int("b")], ValueType::Integer).unwrap(),
        driver_template: "{{SUBMISSION}}\nread a\nread b\nadd \"$a\" \"$b\"\n".into(),
        tests: vec![TestCase {
            args: vec![Value::Integer(1), Value::Integer(2)],
            expected: Value::Integer(3),
        }],
        reference_solution: Some("add() { echo $(( $1 + $2 )); }".into()),
        input_ranges: BTreeMap::new(),
    }
}

pub fn submission(id: &str, problem: &str, minutes: i64) -> Submission {
    Submission {
        id: sid(id),
        student_id: StudentId::new(format!("stu-{id}")).unwrap(),
        problem_id: pid(problem),
        code: format!("add() {{ echo {id}; }}\n"),
        timestamp: at(minutes),
    }
}

pub fn grade(sub: &Submission, passes: u32, total: u32) -> GradeReport {
    GradeReport {
        submission_id: sub.id.clone(),
        problem_id: sub.problem_id.clone(),
        compiled: true,
        diagnostics: None,
        verdicts: (0..total as usize)
            .map(|i| TestVerdict {
                test_index: i,
                verdict: if (i as u32) < passes {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                },
            })
            .collect(),
        passes,
        total,
        score: Some(passes as f64 / total as f64),
    }
}

pub fn ladder(sub: &Submission) -> FeedbackLadder {
    let text = format!(
        "Level 0: Incorrect\nLevel 1: Input: a = 1, b = 2\nExpected Output: 3\nYour Output: {id}\n\
         Level 2: hint for {id}\nLevel 3: location\nLevel 4: edit\n",
        id = sub.id
    );
    FeedbackLadder {
        submission_id: sub.id.clone(),
        problem_id: sub.problem_id.clone(),
        levels: LadderLevels::new(parse_ladder(&text).unwrap()).unwrap(),
        prompt: "prompt".into(),
        raw_response: text,
        params: GenerationParams::default(),
        created_at: at(0),
        truncated: false,
        attempts: 1,
    }
}
