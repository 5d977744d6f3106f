//! Execution-backed checks on generated ladders.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{parse_claimed_test_case, FeedbackLadder};
use crate::model::{FeedbackLevel, Problem, Submission, SubmissionId, Value, ValueType};
use crate::runner::{GradeReport, RunOutcome, RunStatus, Runner, RunnerError, RUNTIME_ERROR_MARKER, TIMEOUT_MARKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlagCode {
    VerdictInconsistent,
    UnparseableTestCase,
    ClaimedOutputMismatch,
    NotAFailingCase,
    WrongExpectedOutput,
    OutOfRangeTestCase,
    FullProgramListed,
    CodeInHint,
    TruncatedResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl FlagCode {
    pub const ALL: [FlagCode; 9] = [
        FlagCode::VerdictInconsistent,
        FlagCode::UnparseableTestCase,
        FlagCode::ClaimedOutputMismatch,
        FlagCode::NotAFailingCase,
        FlagCode::WrongExpectedOutput,
        FlagCode::OutOfRangeTestCase,
        FlagCode::FullProgramListed,
        FlagCode::CodeInHint,
        FlagCode::TruncatedResponse,
    ];

    pub fn severity(self) -> Severity {
        match self {
            FlagCode::VerdictInconsistent
            | FlagCode::ClaimedOutputMismatch
            | FlagCode::NotAFailingCase
            | FlagCode::WrongExpectedOutput
            | FlagCode::FullProgramListed => Severity::Error,
            FlagCode::UnparseableTestCase
            | FlagCode::OutOfRangeTestCase
            | FlagCode::CodeInHint
            | FlagCode::TruncatedResponse => Severity::Warning,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlagCode::VerdictInconsistent => "VERDICT_INCONSISTENT",
            FlagCode::UnparseableTestCase => "UNPARSEABLE_TEST_CASE",
            FlagCode::ClaimedOutputMismatch => "CLAIMED_OUTPUT_MISMATCH",
            FlagCode::NotAFailingCase => "NOT_A_FAILING_CASE",
            FlagCode::WrongExpectedOutput => "WRONG_EXPECTED_OUTPUT",
            FlagCode::OutOfRangeTestCase => "OUT_OF_RANGE_TEST_CASE",
            FlagCode::FullProgramListed => "FULL_PROGRAM_LISTED",
            FlagCode::CodeInHint => "CODE_IN_HINT",
            FlagCode::TruncatedResponse => "TRUNCATED_RESPONSE",
        }
    }
}

impl fmt::Display for FlagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationFlag {
    pub code: FlagCode,
    pub severity: Severity,
    /// The level the flag is about, when it concerns a single one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<FeedbackLevel>,
    pub detail: String,
}

impl ValidationFlag {
    pub fn new(code: FlagCode, level: Option<FeedbackLevel>, detail: impl Into<String>) -> Self {
        Self {
            code,
            severity: code.severity(),
            level,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationReport {
    /// Ladders are keyed by the submission they explain.
    pub ladder_id: SubmissionId,
    pub flags: Vec<ValidationFlag>,
    pub checked_at: DateTime<Utc>,
}

impl ValidationReport {
    pub fn has_errors(&self) -> bool {
        self.flags.iter().any(|f| f.severity == Severity::Error)
    }

    pub fn has(&self, code: FlagCode) -> bool {
        self.flags.iter().any(|f| f.code == code)
    }

    pub fn codes(&self) -> Vec<FlagCode> {
        self.flags.iter().map(|f| f.code).collect()
    }
}

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("ladder, submission and problem do not belong together: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Runner(#[from] RunnerError),
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

const NEGATORS: [&str; 7] = ["not", "isn't", "isnt", "never", "no", "nor", "hardly"];

/// Whether a level-0 text claims the program is correct.
pub fn asserts_correct(level0: &str) -> bool {
    let words = words(level0);
    if words.iter().any(|w| w == "incorrect" || w == "wrong") {
        return false;
    }
    if words.first().is_some_and(|w| w == "yes") {
        return true;
    }
    words.iter().enumerate().any(|(i, w)| {
        w == "correct"
            && !words[i.saturating_sub(3)..i]
                .iter()
                .any(|p| NEGATORS.contains(&p.as_str()))
    })
}

pub fn validate_level0(ladder: &FeedbackLadder, grade: &GradeReport) -> Option<ValidationFlag> {
    let text = ladder.level(FeedbackLevel::L0);
    (!grade.is_perfect() && asserts_correct(text)).then(|| {
        ValidationFlag::new(
            FlagCode::VerdictInconsistent,
            Some(FeedbackLevel::L0),
            format!(
                "level 0 says the program is correct but it passes {}/{} tests",
                grade.passes, grade.total
            ),
        )
    })
}

fn looks_like_timeout(lower: &str) -> bool {
    [
        "timeout",
        "time out",
        "timed out",
        "infinite loop",
        "never terminates",
        "does not terminate",
    ]
    .iter()
    .any(|w| lower.contains(w))
}

fn looks_like_crash(lower: &str) -> bool {
    ["exception", "error", "crash", "out of bounds", "outofbounds"]
        .iter()
        .any(|w| lower.contains(w))
}

/// Canonical form of a claimed or expected output for comparison: the
/// rendered literal when it parses as the return type, a marker when it
/// describes a crash or timeout, otherwise the trimmed text.
pub fn canonical_claim(text: &str, return_type: ValueType) -> String {
    let text = text.trim();
    if let Ok(v) = Value::parse_as(text, return_type) {
        return v.render();
    }
    let lower = text.to_lowercase();
    if looks_like_timeout(&lower) {
        return TIMEOUT_MARKER.into();
    }
    if looks_like_crash(&lower) {
        return RUNTIME_ERROR_MARKER.into();
    }
    if return_type == ValueType::Text {
        return Value::Text(text.to_string()).render();
    }
    text.to_string()
}

/// Canonical form of what a run produced.
pub fn canonical_outcome(outcome: &RunOutcome, return_type: ValueType) -> String {
    let observed = outcome.observed();
    match outcome.status {
        RunStatus::Output => Value::parse_as(observed, return_type)
            .map(|v| v.render())
            .unwrap_or_else(|_| observed.to_string()),
        _ => observed.to_string(),
    }
}

/// Runs the claimed failing case against the submission (once) and, when
/// present, the reference solution.
pub fn validate_level1(
    ladder: &FeedbackLadder,
    problem: &Problem,
    submission: &Submission,
    runner: &Runner,
) -> Result<Vec<ValidationFlag>, RunnerError> {
    let l1 = Some(FeedbackLevel::L1);
    let sig = &problem.signature;
    let claim = match parse_claimed_test_case(ladder.level(FeedbackLevel::L1), sig) {
        Ok(c) => c,
        Err(e) => {
            return Ok(vec![ValidationFlag::new(
                FlagCode::UnparseableTestCase,
                l1,
                e.to_string(),
            )])
        }
    };
    let args = claim.arguments(sig);
    if let Err(e) = sig.check_arguments(0, &args) {
        return Ok(vec![ValidationFlag::new(
            FlagCode::UnparseableTestCase,
            l1,
            e.to_string(),
        )]);
    }

    let mut flags = Vec::new();
    for (param, value) in sig.params.iter().zip(&args) {
        if let Some(range) = problem.input_ranges.get(&param.name) {
            if !range.admits(value) {
                flags.push(ValidationFlag::new(
                    FlagCode::OutOfRangeTestCase,
                    l1,
                    format!("{} = {} is outside the declared range", param.name, value.render()),
                ));
            }
        }
    }

    let ret = sig.return_type;
    let actual = canonical_outcome(&runner.run_single(submission, problem, &args)?, ret);
    let claimed = canonical_claim(&claim.claimed_output_text, ret);
    let expected = canonical_claim(&claim.expected_text, ret);
    if actual != claimed {
        flags.push(ValidationFlag::new(
            FlagCode::ClaimedOutputMismatch,
            l1,
            format!("claimed output {claimed} but the program gives {actual}"),
        ));
    }
    if actual == expected {
        flags.push(ValidationFlag::new(
            FlagCode::NotAFailingCase,
            l1,
            format!("the program already gives the expected output {expected}"),
        ));
    }
    if let Some(reference) = &problem.reference_solution {
        let correct = canonical_outcome(&runner.run_code(problem, reference, &args)?, ret);
        if correct != expected {
            flags.push(ValidationFlag::new(
                FlagCode::WrongExpectedOutput,
                l1,
                format!("expected output {expected} but the reference solution gives {correct}"),
            ));
        }
    }
    Ok(flags)
}

fn non_blank_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty())
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn ends_like_code(line: &str) -> bool {
    let line = line.trim().trim_matches('`').trim_end();
    line.ends_with(';') || line.ends_with('{') || line.ends_with('}')
}

/// Sizes (non-blank line counts) of the code-like blocks in a text: fenced
/// blocks, and runs of two or more lines ending in `;`, `{` or `}`.
pub fn code_block_sizes(text: &str) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut fenced: Option<usize> = None;
    let mut run = 0;
    let close_run = |run: &mut usize, sizes: &mut Vec<usize>| {
        if *run >= 2 {
            sizes.push(*run);
        }
        *run = 0;
    };
    for line in text.lines() {
        if is_fence(line) {
            close_run(&mut run, &mut sizes);
            match fenced.take() {
                Some(n) => sizes.push(n),
                None => fenced = Some(0),
            }
            continue;
        }
        if let Some(n) = fenced.as_mut() {
            if !line.trim().is_empty() {
                *n += 1;
            }
        } else if ends_like_code(line) {
            run += 1;
        } else if !line.trim().is_empty() {
            close_run(&mut run, &mut sizes);
        }
    }
    if let Some(n) = fenced {
        sizes.push(n);
    }
    close_run(&mut run, &mut sizes);
    sizes.retain(|&n| n > 0);
    sizes
}

pub fn validate_level4(ladder: &FeedbackLadder, submission: &Submission) -> Vec<ValidationFlag> {
    let program = non_blank_lines(&submission.code).count();
    if program == 0 {
        return Vec::new();
    }
    code_block_sizes(ladder.level(FeedbackLevel::L4))
        .into_iter()
        .filter(|&n| n * 5 >= program * 4)
        .max()
        .map(|n| {
            ValidationFlag::new(
                FlagCode::FullProgramListed,
                Some(FeedbackLevel::L4),
                format!("code block of {n} lines against a {program}-line submission"),
            )
        })
        .into_iter()
        .collect()
}

/// Flags level 2 and 3 texts that contain a fenced block or repeat a
/// submission line longer than 10 characters.
pub fn validate_hint_purity(ladder: &FeedbackLadder, submission: &Submission) -> Vec<ValidationFlag> {
    let copied: Vec<&str> = non_blank_lines(&submission.code)
        .filter(|l| l.chars().count() > 10)
        .collect();
    [FeedbackLevel::L2, FeedbackLevel::L3]
        .into_iter()
        .filter_map(|level| {
            let text = ladder.level(level);
            let detail = if text.lines().any(is_fence) {
                "contains a code block".to_string()
            } else {
                let line = copied.iter().find(|l| text.contains(**l))?;
                format!("repeats the submission line `{line}`")
            };
            Some(ValidationFlag::new(FlagCode::CodeInHint, Some(level), detail))
        })
        .collect()
}

/// Every check, in level order, plus a truncation warning.
pub fn validate_ladder(
    ladder: &FeedbackLadder,
    problem: &Problem,
    submission: &Submission,
    grade: &GradeReport,
    runner: &Runner,
) -> Result<ValidationReport, ValidateError> {
    if ladder.submission_id != submission.id || grade.submission_id != submission.id {
        return Err(ValidateError::Mismatch(format!("submission {}", submission.id)));
    }
    if ladder.problem_id != problem.id || submission.problem_id != problem.id {
        return Err(ValidateError::Mismatch(format!("problem {}", problem.id)));
    }
    let mut flags: Vec<ValidationFlag> = validate_level0(ladder, grade).into_iter().collect();
    flags.extend(validate_level1(ladder, problem, submission, runner)?);
    flags.extend(validate_hint_purity(ladder, submission));
    flags.extend(validate_level4(ladder, submission));
    if ladder.truncated {
        flags.push(ValidationFlag::new(
            FlagCode::TruncatedResponse,
            None,
            "the model stopped at the token limit",
        ));
    }
    Ok(ValidationReport {
        ladder_id: ladder.submission_id.clone(),
        flags,
        checked_at: Utc::now(),
    })
}

#[cfg(test)]
mod tests;
