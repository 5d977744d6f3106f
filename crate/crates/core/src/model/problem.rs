use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ids::{ProblemId, StudentId, SubmissionId};
use super::value::{Value, ValueType};

/// Token replaced by the student's code inside a driver template.
pub const SUBMISSION_PLACEHOLDER: &str = "{{SUBMISSION}}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("signature has no parameters")]
    EmptySignature,
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("invalid parameter name `{0}`")]
    InvalidParameterName(String),
    #[error("test {index}: expected {expected} arguments, found {found}")]
    Arity {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("test {index}: argument `{name}` should be {expected}, found {found}")]
    ArgumentType {
        index: usize,
        name: String,
        expected: ValueType,
        found: ValueType,
    },
    #[error("test {index}: expected value should be {expected}, found {found}")]
    ReturnType {
        index: usize,
        expected: ValueType,
        found: ValueType,
    },
    #[error("problem has no tests")]
    NoTests,
    #[error("driver template must contain {SUBMISSION_PLACEHOLDER} exactly once (found {0})")]
    Placeholder(usize),
    #[error("input range refers to unknown parameter `{0}`")]
    UnknownRangeParameter(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    #[serde(rename = "type")]
    pub value_type: ValueType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParameterSignature {
    pub params: Vec<Parameter>,
    pub return_type: ValueType,
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl ParameterSignature {
    pub fn new(params: Vec<Parameter>, return_type: ValueType) -> Result<Self, ModelError> {
        let sig = Self { params, return_type };
        sig.validate()?;
        Ok(sig)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.params.is_empty() {
            return Err(ModelError::EmptySignature);
        }
        let mut seen = HashSet::new();
        for p in &self.params {
            if !is_identifier(&p.name) {
                return Err(ModelError::InvalidParameterName(p.name.clone()));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(ModelError::DuplicateParameter(p.name.clone()));
            }
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Checks argument count and types for one test (or one ad-hoc call).
    pub fn check_arguments(&self, index: usize, args: &[Value]) -> Result<(), ModelError> {
        if args.len() != self.params.len() {
            return Err(ModelError::Arity {
                index,
                expected: self.params.len(),
                found: args.len(),
            });
        }
        for (param, arg) in self.params.iter().zip(args) {
            if arg.value_type() != param.value_type {
                return Err(ModelError::ArgumentType {
                    index,
                    name: param.name.clone(),
                    expected: param.value_type,
                    found: arg.value_type(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub args: Vec<Value>,
    pub expected: Value,
}

/// Declared valid input range for one parameter. Integer bounds apply to
/// integers and to every element of an integer array; `max_length` bounds
/// array and text length.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InputRange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_length: Option<usize>,
}

impl InputRange {
    fn admits_int(&self, n: i64) -> bool {
        self.min.is_none_or(|m| n >= m) && self.max.is_none_or(|m| n <= m)
    }

    pub fn admits(&self, value: &Value) -> bool {
        match value {
            Value::Integer(n) => self.admits_int(*n),
            Value::Boolean(_) => true,
            Value::Text(s) => self.max_length.is_none_or(|m| s.chars().count() <= m),
            Value::IntegerArray(items) => {
                self.max_length.is_none_or(|m| items.len() <= m) && items.iter().all(|n| self.admits_int(*n))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Problem {
    pub id: ProblemId,
    pub title: String,
    pub statement: String,
    pub signature: ParameterSignature,
    pub driver_template: String,
    pub tests: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub input_ranges: BTreeMap<String, InputRange>,
}

impl Problem {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.signature.validate()?;
        let placeholders = self.driver_template.matches(SUBMISSION_PLACEHOLDER).count();
        if placeholders != 1 {
            return Err(ModelError::Placeholder(placeholders));
        }
        if self.tests.is_empty() {
            return Err(ModelError::NoTests);
        }
        for (index, test) in self.tests.iter().enumerate() {
            self.signature.check_arguments(index, &test.args)?;
            if test.expected.value_type() != self.signature.return_type {
                return Err(ModelError::ReturnType {
                    index,
                    expected: self.signature.return_type,
                    found: test.expected.value_type(),
                });
            }
        }
        for name in self.input_ranges.keys() {
            if self.signature.position(name).is_none() {
                return Err(ModelError::UnknownRangeParameter(name.clone()));
            }
        }
        Ok(())
    }

    /// The driver source with `code` spliced in.
    pub fn splice(&self, code: &str) -> String {
        self.driver_template.replacen(SUBMISSION_PLACEHOLDER, code, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Submission {
    pub id: SubmissionId,
    pub student_id: StudentId,
    pub problem_id: ProblemId,
    pub code: String,
    pub timestamp: DateTime<Utc>,
}

/// One rung of a feedback ladder, from bare verdict to concrete edits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum FeedbackLevel {
    /// Yes/No verdict.
    L0,
    /// A failing test case.
    L1,
    /// Conceptual hint.
    L2,
    /// Location of the mistake.
    L3,
    /// Concrete edit.
    L4,
}

impl FeedbackLevel {
    pub const ALL: [FeedbackLevel; 5] = [
        FeedbackLevel::L0,
        FeedbackLevel::L1,
        FeedbackLevel::L2,
        FeedbackLevel::L3,
        FeedbackLevel::L4,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(k: u8) -> Option<Self> {
        Self::ALL.get(k as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FeedbackLevel::L0 => "Yes/No",
            FeedbackLevel::L1 => "Test Case",
            FeedbackLevel::L2 => "Hint",
            FeedbackLevel::L3 => "Location",
            FeedbackLevel::L4 => "Edit",
        }
    }
}

impl fmt::Display for FeedbackLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.index())
    }
}

impl From<FeedbackLevel> for u8 {
    fn from(level: FeedbackLevel) -> u8 {
        level.index()
    }
}

impl TryFrom<u8> for FeedbackLevel {
    type Error = String;
    fn try_from(k: u8) -> Result<Self, Self::Error> {
        FeedbackLevel::from_index(k).ok_or_else(|| format!("feedback level {k} is not in 0..=4"))
    }
}
