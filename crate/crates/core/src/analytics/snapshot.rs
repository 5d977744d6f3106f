use std::collections::HashMap;

use num_traits::Float;

use super::{
    aggregate_bucket_level, aggregate_question_level, agreement_matrix, rating_vectors, Aggregation, AgreementMatrix,
    AnalyticsError,
};
use crate::model::{ProblemId, ScoreBucket, SubmissionId};
use crate::storage::{StorageError, Store};
use crate::study::{Metric, Rating};

/// Ratings read once from a store, with the grouping context the figures
/// need. Every figure computed from one snapshot sees the same ratings.
#[derive(Debug, Clone)]
pub struct AnalyticsSnapshot {
    pub ratings: Vec<Rating>,
    /// Study presentation order when a study exists.
    pub problem_order: Vec<ProblemId>,
    pub buckets: HashMap<SubmissionId, ScoreBucket>,
}

impl AnalyticsSnapshot {
    /// Buckets come from the study definition; submissions outside it fall
    /// back to the bucket of their grade.
    pub fn load(store: &Store) -> Result<Self, StorageError> {
        let ratings = store.ratings()?;
        let mut buckets = HashMap::new();
        for grade in store.grades()? {
            if let Some(bucket) = grade.bucket() {
                buckets.insert(grade.submission_id.clone(), bucket);
            }
        }
        let mut problem_order = Vec::new();
        if let Some(def) = store.study_definition()? {
            problem_order = def.problems.iter().map(|p| p.problem_id.clone()).collect();
            for item in def.items() {
                buckets.insert(item.submission_id, item.bucket);
            }
        }
        Ok(Self {
            ratings,
            problem_order,
            buckets,
        })
    }

    pub fn agreement<F: Float>(&self) -> Result<AgreementMatrix<F>, AnalyticsError> {
        agreement_matrix(&rating_vectors::<F>(&self.ratings))
    }

    pub fn question_level<F: Float>(&self, metric: Metric) -> Aggregation<F> {
        aggregate_question_level(&self.ratings, metric, &self.problem_order)
    }

    pub fn bucket_level<F: Float>(&self, metric: Metric) -> Aggregation<F> {
        aggregate_bucket_level(&self.ratings, metric, &self.buckets)
    }
}
