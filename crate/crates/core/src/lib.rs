//! Feedback ladders for logically buggy programming submissions.
//!
//! A ladder holds five feedback texts for one submission, from a bare
//! correct/incorrect verdict (level 0) to concrete edits (level 4). This
//! crate grades submissions, prompts a chat-completion model for ladders,
//! checks the generated feedback by executing it, and runs the annotation
//! study used to rate ladders together with its agreement statistics.

pub mod analytics;
pub mod generator;
pub mod model;
pub mod runner;
pub mod storage;
pub mod study;
pub mod validator;

#[cfg(test)]
mod testutil;

/// Exact pass fraction `passes / total`.
pub type Score = num_rational::Ratio<u32>;

pub type AgreementMatrixF64 = analytics::AgreementMatrix<f64>;
pub type AgreementMatrixF32 = analytics::AgreementMatrix<f32>;
pub type RatingVectorF64 = analytics::RatingVector<f64>;
pub type AggregateCellF64 = analytics::AggregateCell<f64>;
pub type AggregationF64 = analytics::Aggregation<f64>;
