//! Ladder generation: prompt construction, the completion call, and parsing
//! the response into five levels.

mod completer;
mod openai;
mod parse;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{FeedbackLevel, Problem, ProblemId, Submission, SubmissionId};
use crate::runner::GradeReport;

pub use completer::{Completer, Completion, CompletionError, CompletionRequest, MockCompleter};
pub use openai::{OpenAiCompleter, API_KEY_ENV};
pub use parse::{
    parse_claimed_test_case, parse_ladder, split_top_level, ClaimLabel, ClaimParseError, ClaimedTestCase,
    LadderParseError,
};
pub use prompt::{build_prompt, with_format_reminder, FORMAT_REMINDER, PROMPT_PREAMBLE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerationParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub base_url: String,
    pub max_retries: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model_name: "gpt-4".into(),
            temperature: 0.0,
            max_tokens: 1024,
            base_url: "https://api.openai.com/v1".into(),
            max_retries: 1,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), GenerateError> {
        // NaN is rejected too.
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GenerateError::InvalidParams("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GenerateError::InvalidParams("maxTokens must be > 0".into()));
        }
        Ok(())
    }
}

/// The five level texts of a ladder, all non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LadderLevels([String; 5]);

impl LadderLevels {
    pub fn new(levels: BTreeMap<FeedbackLevel, String>) -> Result<Self, LadderParseError> {
        let missing: Vec<_> = FeedbackLevel::ALL
            .into_iter()
            .filter(|l| levels.get(l).is_none_or(|t| t.trim().is_empty()))
            .collect();
        if !missing.is_empty() {
            return Err(LadderParseError { missing });
        }
        let mut levels = levels;
        Ok(Self(FeedbackLevel::ALL.map(|l| levels.remove(&l).expect("checked"))))
    }

    pub fn get(&self, level: FeedbackLevel) -> &str {
        &self.0[level.index() as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeedbackLevel, &str)> {
        FeedbackLevel::ALL.into_iter().map(|l| (l, self.get(l)))
    }

    /// Levels `0..=max`, in order.
    pub fn up_to(&self, max: FeedbackLevel) -> impl Iterator<Item = (FeedbackLevel, &str)> {
        self.iter().take(max.index() as usize + 1)
    }
}

impl Serialize for LadderLevels {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<String, &str> = self.iter().map(|(l, t)| (l.index().to_string(), t)).collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LadderLevels {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(deserializer)?;
        let mut levels = BTreeMap::new();
        for (key, text) in raw {
            let level = key
                .parse::<u8>()
                .ok()
                .and_then(FeedbackLevel::from_index)
                .ok_or_else(|| D::Error::custom(format!("unknown ladder level `{key}`")))?;
            levels.insert(level, text);
        }
        LadderLevels::new(levels).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeedbackLadder {
    pub submission_id: SubmissionId,
    pub problem_id: ProblemId,
    pub levels: LadderLevels,
    /// The prompt that produced `raw_response`, verbatim.
    pub prompt: String,
    pub raw_response: String,
    pub params: GenerationParams,
    pub created_at: DateTime<Utc>,
    pub truncated: bool,
    /// Completion calls spent, including the repair attempt.
    pub attempts: u32,
}

impl FeedbackLadder {
    pub fn level(&self, level: FeedbackLevel) -> &str {
        self.levels.get(level)
    }
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("submission {0} is not eligible for a ladder: {1}")]
    Precondition(SubmissionId, String),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Completion(#[from] CompletionError),
    #[error("could not split response into levels after {attempts} attempt(s): {error}")]
    Parse {
        error: LadderParseError,
        raw_response: String,
        attempts: u32,
    },
}

impl fmt::Display for LadderLevels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (level, text) in self.iter() {
            writeln!(f, "Level {}: {}", level.index(), text)?;
        }
        Ok(())
    }
}

/// Generates a ladder for a graded, compiling, imperfect submission.
///
/// On a response that cannot be split into five levels, retries once with
/// [`FORMAT_REMINDER`] appended to the prompt.
pub fn generate_ladder<C: Completer + ?Sized>(
    problem: &Problem,
    submission: &Submission,
    grade: &GradeReport,
    params: &GenerationParams,
    completer: &C,
) -> Result<FeedbackLadder, GenerateError> {
    params.validate()?;
    let reject = |why: &str| Err(GenerateError::Precondition(submission.id.clone(), why.into()));
    if grade.submission_id != submission.id {
        return reject("grade report belongs to another submission");
    }
    if submission.problem_id != problem.id {
        return reject("submission belongs to another problem");
    }
    if !grade.compiled {
        return reject("submission does not compile");
    }
    if grade.is_perfect() {
        return reject("submission already passes every test");
    }

    let base_prompt = build_prompt(problem, submission);
    let mut prompt = base_prompt.clone();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let request = CompletionRequest {
            submission_id: submission.id.clone(),
            prompt: prompt.clone(),
            params: params.clone(),
        };
        let completion = completer.complete(&request)?;
        match parse_ladder(&completion.text) {
            Ok(levels) => {
                return Ok(FeedbackLadder {
                    submission_id: submission.id.clone(),
                    problem_id: problem.id.clone(),
                    levels: LadderLevels::new(levels).expect("parse_ladder yields five levels"),
                    prompt,
                    raw_response: completion.text,
                    params: params.clone(),
                    created_at: Utc::now(),
                    truncated: completion.truncated,
                    attempts,
                })
            }
            Err(error) if attempts >= 2 => {
                return Err(GenerateError::Parse {
                    error,
                    raw_response: completion.text,
                    attempts,
                })
            }
            Err(_) => prompt = with_format_reminder(&base_prompt),
        }
    }
}
