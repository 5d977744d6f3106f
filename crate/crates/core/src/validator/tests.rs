use std::collections::BTreeMap;
use std::fs;

use chrono::{TimeZone, Utc};

use super::*;
use crate::generator::{parse_ladder, GenerationParams, LadderLevels};
use crate::model::{InputRange, Parameter, ParameterSignature, ProblemId, StudentId, TestCase};
use crate::runner::{TestVerdict, Toolchain, Verdict};

const TABLE1: &str = include_str!("../../../../fixtures/responses/s02.txt");
const TABLE3_HIGH: &str = include_str!("../../../../fixtures/responses/s06.txt");
const TABLE3_HIGH_CODE: &str = "public boolean isEverywhere(int[] nums, int val){

    int a = 0;
    for (int i = 0; i < nums.length; i++){
        if (nums[i] == val || nums[i + 1] == val){
            a = a + a;
        }
        else{
            a = a + 1;
        }
    }
    return a == 0;
}
";
const SORTA_SUM: &str = "public int sortaSum(int a, int b){
    if (a + b <= 10 && a + b >= 20)
        return 20;
    else return a + b;
}
";

/// Doubles instead of adding when `a > 5`; exits 3 on negative `a`.
const BUGGY_ADD: &str =
    r#"add() { [ "$1" -lt 0 ] && exit 3; if [ "$1" -gt 5 ]; then echo $(( $1 * $2 )); else echo $(( $1 + $2 )); fi; }"#;

fn add_problem() -> Problem {
    let int = |name: &str| Parameter {
        name: name.into(),
        value_type: ValueType::Integer,
    };
    Problem {
        id: ProblemId::new("add").unwrap(),
        title: "add".into(),
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

fn submission(problem: &str, code: &str) -> Submission {
    Submission {
        id: SubmissionId::new("s1").unwrap(),
        student_id: StudentId::new("u1").unwrap(),
        problem_id: ProblemId::new(problem).unwrap(),
        code: code.into(),
        timestamp: Utc.with_ymd_and_hms(2019, 3, 1, 12, 0, 0).unwrap(),
    }
}

fn ladder(problem: &str, text: &str) -> FeedbackLadder {
    FeedbackLadder {
        submission_id: SubmissionId::new("s1").unwrap(),
        problem_id: ProblemId::new(problem).unwrap(),
        levels: LadderLevels::new(parse_ladder(text).unwrap()).unwrap(),
        prompt: String::new(),
        raw_response: text.into(),
        params: GenerationParams::default(),
        created_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        truncated: false,
        attempts: 1,
    }
}

fn ladder_text(l0: &str, l1: &str, l2: &str, l3: &str, l4: &str) -> String {
    format!("Level 0: {l0}\nLevel 1:\n{l1}\nLevel 2: {l2}\nLevel 3: {l3}\nLevel 4: {l4}\n")
}

fn grade(passes: u32, total: u32) -> GradeReport {
    GradeReport {
        submission_id: SubmissionId::new("s1").unwrap(),
        problem_id: ProblemId::new("add").unwrap(),
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

fn runner() -> Runner {
    Runner::new(Toolchain::shell())
}

fn l1_flags(l1: &str) -> Vec<FlagCode> {
    let text = ladder_text("Incorrect", l1, "h", "l", "e");
    validate_level1(
        &ladder("add", &text),
        &add_problem(),
        &submission("add", BUGGY_ADD),
        &runner(),
    )
    .unwrap()
    .into_iter()
    .map(|f| f.code)
    .collect()
}

#[test]
fn severity_table() {
    use FlagCode::*;
    let errors = [
        VerdictInconsistent,
        ClaimedOutputMismatch,
        NotAFailingCase,
        WrongExpectedOutput,
        FullProgramListed,
    ];
    for code in FlagCode::ALL {
        let expected = if errors.contains(&code) {
            Severity::Error
        } else {
            Severity::Warning
        };
        assert_eq!(code.severity(), expected, "{code}");
        assert_eq!(serde_json::to_value(code).unwrap(), code.as_str());
    }
}

#[test]
fn correctness_claims() {
    for text in [
        "The code is correct.",
        "Correct",
        "Yes",
        "Yes, it works.",
        "This program is correct!",
    ] {
        assert!(asserts_correct(text), "{text}");
    }
    for text in [
        "Incorrect",
        "The code is incorrect.",
        "The code is not correct.",
        "No",
        "It isn't correct",
        "Wrong answer",
        "The program does not work correctly.",
        "",
    ] {
        assert!(!asserts_correct(text), "{text}");
    }
}

#[test]
fn level0_checks() {
    let make = |l0: &str| ladder("add", &ladder_text(l0, "x", "h", "l", "e"));
    assert!(validate_level0(&make("Incorrect"), &grade(2, 3)).is_none());
    let flag = validate_level0(&make("The code is correct."), &grade(1, 2)).unwrap();
    assert_eq!(flag.code, FlagCode::VerdictInconsistent);
    assert_eq!(flag.level, Some(FeedbackLevel::L0));
    assert!(validate_level0(&make("The code is incorrect."), &grade(0, 4)).is_none());
    assert!(validate_level0(&make("The code is correct."), &grade(4, 4)).is_none());
}

#[test]
fn consistent_claim_has_no_flags() {
    assert!(l1_flags("Input: a = 6, b = 2\nExpected Output: 8\nYour Output: 12").is_empty());
}

#[test]
fn wrong_claimed_output() {
    assert_eq!(
        l1_flags("Input: a = 6, b = 2\nExpected Output: 8\nYour Output: 9"),
        vec![FlagCode::ClaimedOutputMismatch]
    );
}

#[test]
fn passing_case_is_not_a_failing_case() {
    assert_eq!(
        l1_flags("Input: a = 5, b = 6\nExpected Output: 11\nYour Output: 11"),
        vec![FlagCode::NotAFailingCase]
    );
    assert_eq!(
        l1_flags("Input: a = 5, b = 6\nExpected Output: 11\nYour Output: 30"),
        vec![FlagCode::ClaimedOutputMismatch, FlagCode::NotAFailingCase]
    );
}

#[test]
fn expected_output_is_checked_against_reference() {
    assert_eq!(
        l1_flags("Input: a = 6, b = 2\nExpected Output: 7\nYour Output: 12"),
        vec![FlagCode::WrongExpectedOutput]
    );
}

#[test]
fn crashes_compare_as_marker() {
    assert!(l1_flags("Input: a = -1, b = 2\nExpected Output: 1\nYour Output: RuntimeException").is_empty());
    assert!(l1_flags("Input: a = -1, b = 2\nExpected Output: 1\nYour Output: the program throws an error").is_empty());
    assert_eq!(
        l1_flags("Input: a = -1, b = 2\nExpected Output: 1\nYour Output: false"),
        vec![FlagCode::ClaimedOutputMismatch]
    );
}

#[test]
fn unparseable_case_is_a_warning_without_execution() {
    let log = tempfile::NamedTempFile::new().unwrap();
    let code = format!("add() {{ echo run >> {}; echo $(( $1 + $2 )); }}", log.path().display());
    let text = ladder_text("Incorrect", "Try some big numbers.", "h", "l", "e");
    let flags = validate_level1(
        &ladder("add", &text),
        &add_problem(),
        &submission("add", &code),
        &runner(),
    )
    .unwrap();
    assert_eq!(flags.len(), 1);
    assert_eq!(flags[0].code, FlagCode::UnparseableTestCase);
    assert_eq!(flags[0].severity, Severity::Warning);
    assert_eq!(fs::read_to_string(log.path()).unwrap(), "");
}

#[test]
fn submission_runs_once_per_check() {
    let log = tempfile::NamedTempFile::new().unwrap();
    let code = format!("add() {{ echo run >> {}; echo $(( $1 + $2 )); }}", log.path().display());
    let text = ladder_text(
        "Incorrect",
        "Input: a = 1, b = 1\nExpected Output: 2\nYour Output: 3",
        "h",
        "l",
        "e",
    );
    validate_level1(
        &ladder("add", &text),
        &add_problem(),
        &submission("add", &code),
        &runner(),
    )
    .unwrap();
    assert_eq!(fs::read_to_string(log.path()).unwrap(), "run\n");
}

#[test]
fn declared_ranges_are_enforced() {
    let mut problem = add_problem();
    let text = ladder_text(
        "Incorrect",
        "Input: a = 600, b = 2\nExpected Output: 602\nYour Output: 1200",
        "h",
        "l",
        "e",
    );
    let run = |p: &Problem| {
        validate_level1(&ladder("add", &text), p, &submission("add", BUGGY_ADD), &runner())
            .unwrap()
            .into_iter()
            .map(|f| f.code)
            .collect::<Vec<_>>()
    };
    assert!(run(&problem).is_empty());
    problem.input_ranges.insert(
        "a".into(),
        InputRange {
            min: Some(-100),
            max: Some(100),
            max_length: None,
        },
    );
    assert_eq!(run(&problem), vec![FlagCode::OutOfRangeTestCase]);
}

#[test]
fn block_detection() {
    assert_eq!(code_block_sizes("Change `x` to `y`."), Vec::<usize>::new());
    assert_eq!(code_block_sizes("a;\nb;\nprose\nc;"), vec![2]);
    assert_eq!(code_block_sizes("```java\nx = 1;\n\ny = 2;\n```\n"), vec![2]);
    assert_eq!(code_block_sizes("```\nunterminated;\nmore;"), vec![2]);
    assert_eq!(code_block_sizes("`a = 1;`\n`b = 2;`"), vec![2]);
}

#[test]
fn table1_edit_is_not_a_full_listing() {
    let l = ladder("sortaSum", TABLE1);
    assert!(validate_level4(&l, &submission("sortaSum", SORTA_SUM)).is_empty());
}

#[test]
fn table3_rewrite_falls_below_threshold() {
    // 9 block lines against 12 non-blank program lines.
    let l = ladder("isEverywhere", TABLE3_HIGH);
    assert_eq!(code_block_sizes(l.level(FeedbackLevel::L4)), vec![9]);
    assert_eq!(non_blank_lines(TABLE3_HIGH_CODE).count(), 12);
    assert!(validate_level4(&l, &submission("isEverywhere", TABLE3_HIGH_CODE)).is_empty());
}

#[test]
fn whole_method_is_flagged() {
    let body = format!("Here it is:\n```java\n{SORTA_SUM}```");
    let l = ladder("sortaSum", &ladder_text("Incorrect", "x", "h", "l", &body));
    let flags = validate_level4(&l, &submission("sortaSum", SORTA_SUM));
    assert_eq!(flags.len(), 1);
    assert_eq!(flags[0].code, FlagCode::FullProgramListed);
    let none = ladder(
        "sortaSum",
        &ladder_text("Incorrect", "x", "h", "l", "Rename the variable."),
    );
    assert!(validate_level4(&none, &submission("sortaSum", SORTA_SUM)).is_empty());
}

#[test]
fn hint_purity() {
    let sub = submission("sortaSum", SORTA_SUM);
    assert!(validate_hint_purity(&ladder("sortaSum", TABLE1), &sub).is_empty());

    let copied = ladder_text(
        "Incorrect",
        "x",
        "Look at `if (a + b <= 10 && a + b >= 20)` again.",
        "l",
        "e",
    );
    let flags = validate_hint_purity(&ladder("sortaSum", &copied), &sub);
    assert_eq!(flags.len(), 1);
    assert_eq!(
        (flags[0].code, flags[0].level),
        (FlagCode::CodeInHint, Some(FeedbackLevel::L2))
    );

    let fenced = ladder_text("Incorrect", "x", "h", "Here:\n```\nreturn 20;\n```", "e");
    let flags = validate_hint_purity(&ladder("sortaSum", &fenced), &sub);
    assert_eq!(flags[0].level, Some(FeedbackLevel::L3));

    let location = ladder_text(
        "Incorrect",
        "x",
        "h",
        "modify the condition inside the if statement",
        "e",
    );
    assert!(validate_hint_purity(&ladder("sortaSum", &location), &sub).is_empty());
}

#[test]
fn full_report() {
    let problem = add_problem();
    let sub = submission("add", BUGGY_ADD);
    let text = ladder_text(
        "Incorrect",
        "Input: a = 6, b = 2\nExpected Output: 8\nYour Output: 12",
        "Numbers above five are treated differently.",
        "The if condition.",
        "Always add.",
    );
    let mut l = ladder("add", &text);
    let report = validate_ladder(&l, &problem, &sub, &grade(1, 2), &runner()).unwrap();
    assert!(report.flags.is_empty(), "{:?}", report.flags);
    assert!(!report.has_errors());

    l.truncated = true;
    let again = validate_ladder(&l, &problem, &sub, &grade(1, 2), &runner()).unwrap();
    assert_eq!(again.codes(), vec![FlagCode::TruncatedResponse]);
    assert!(!again.has_errors());

    let json = serde_json::to_string(&again).unwrap();
    assert_eq!(serde_json::from_str::<ValidationReport>(&json).unwrap(), again);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let l = ladder("add", &ladder_text("Incorrect", "x", "h", "l", "e"));
    let mut other = submission("add", BUGGY_ADD);
    other.id = SubmissionId::new("s2").unwrap();
    let err = validate_ladder(&l, &add_problem(), &other, &grade(1, 2), &runner()).unwrap_err();
    assert!(matches!(err, ValidateError::Mismatch(_)));
}
