//! Domain types shared by every other module.

mod bucket;
mod ids;
mod problem;
mod value;

pub use bucket::{bucket_of, ScoreBucket, ScoreOutOfRange};
pub use ids::{AnnotatorId, InvalidId, ProblemId, StudentId, SubmissionId};
pub use problem::{
    FeedbackLevel, InputRange, ModelError, Parameter, ParameterSignature, Problem, Submission, TestCase,
    SUBMISSION_PLACEHOLDER,
};
pub use value::{LiteralError, Value, ValueType};

/// Parses a literal of the given type.
pub fn parse_value_literal(text: &str, value_type: ValueType) -> Result<Value, LiteralError> {
    Value::parse_as(text, value_type)
}

/// Canonical literal for a value.
pub fn render_value(value: &Value) -> String {
    value.render()
}
