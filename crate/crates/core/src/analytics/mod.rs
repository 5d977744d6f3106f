//! Inter-rater agreement and Likert aggregations, with CSV exports.
//!
//! Every routine is generic over the float scalar; [`crate::AgreementMatrixF64`]
//! and friends fix it to `f64`.

mod export;
mod snapshot;

use std::collections::{BTreeMap, HashMap};

use num_traits::Float;
use serde::Serialize;
use thiserror::Error;

use crate::model::{AnnotatorId, FeedbackLevel, ProblemId, ScoreBucket, SubmissionId};
use crate::study::{Metric, Rating};

pub use export::{aggregate_csv, agreement_csv, format_number};
pub use snapshot::AnalyticsSnapshot;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 2 paired values, got {0}")]
    TooShort(usize),
    #[error("correlation is undefined: a vector has zero variance")]
    ZeroVariance,
    #[error("agreement needs at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
}

fn from_usize<F: Float>(n: usize) -> F {
    F::from(n).expect("count fits the scalar")
}

fn mean<F: Float>(xs: &[F]) -> F {
    xs.iter().fold(F::zero(), |a, &b| a + b) / from_usize(xs.len())
}

/// Pearson correlation with population moments.
pub fn pcc<F: Float>(x: &[F], y: &[F]) -> Result<F, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalyticsError::TooShort(x.len()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(AnalyticsError::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-F::one()).min(F::one()))
}

/// Canonical position of a rating in every annotator's vector: metric first,
/// so the two metric blocks are concatenated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VectorKey {
    pub metric: Metric,
    pub problem_id: ProblemId,
    pub submission_id: SubmissionId,
    pub level: FeedbackLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RatingVector<F> {
    pub annotator_id: AnnotatorId,
    pub entries: Vec<(VectorKey, F)>,
}

/// One annotator's ratings in canonical key order.
pub fn rating_vector<F: Float>(annotator: &AnnotatorId, ratings: &[Rating]) -> RatingVector<F> {
    let entries: BTreeMap<VectorKey, F> = ratings
        .iter()
        .filter(|r| &r.annotator_id == annotator)
        .map(|r| {
            let key = VectorKey {
                metric: r.metric,
                problem_id: r.problem_id.clone(),
                submission_id: r.submission_id.clone(),
                level: r.level,
            };
            (key, F::from(r.score).expect("Likert score fits the scalar"))
        })
        .collect();
    RatingVector {
        annotator_id: annotator.clone(),
        entries: entries.into_iter().collect(),
    }
}

/// Vectors for every annotator with at least one rating, ordered by id.
pub fn rating_vectors<F: Float>(ratings: &[Rating]) -> Vec<RatingVector<F>> {
    let mut ids: Vec<&AnnotatorId> = ratings.iter().map(|r| &r.annotator_id).collect();
    ids.sort();
    ids.dedup();
    ids.into_iter().map(|id| rating_vector(id, ratings)).collect()
}

/// Correlation over the keys both vectors hold.
pub fn paired_pcc<F: Float>(a: &RatingVector<F>, b: &RatingVector<F>) -> Result<F, AnalyticsError> {
    let lookup: HashMap<&VectorKey, F> = b.entries.iter().map(|(k, v)| (k, *v)).collect();
    let (x, y): (Vec<F>, Vec<F>) = a
        .entries
        .iter()
        .filter_map(|(k, v)| lookup.get(k).map(|w| (*v, *w)))
        .unzip();
    pcc(&x, &y)
}

/// Mean of the present values of a row, diagonal included.
pub fn row_average<F: Float>(row: &[Option<F>]) -> Option<F> {
    let present: Vec<F> = row.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| mean(&present))
}

/// Mean of the present values of row `i`, skipping the diagonal entry.
pub fn off_diagonal_row_average<F: Float>(row: &[Option<F>], i: usize) -> Option<F> {
    let present: Vec<F> = row
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .filter_map(|(_, v)| *v)
        .collect();
    (!present.is_empty()).then(|| mean(&present))
}

/// Mean of the present row averages.
pub fn overall_average<F: Float>(row_averages: &[Option<F>]) -> Option<F> {
    row_average(row_averages)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AgreementMatrix<F> {
    pub annotator_ids: Vec<AnnotatorId>,
    /// `values[i][j]`, absent when the pair's correlation is undefined.
    pub values: Vec<Vec<Option<F>>>,
    /// Row means including the diagonal.
    pub row_averages: Vec<Option<F>>,
    /// Mean of `row_averages`.
    pub overall_average: Option<F>,
    pub off_diagonal_row_averages: Vec<Option<F>>,
    pub off_diagonal_overall_average: Option<F>,
    pub notes: Vec<String>,
}

impl<F: Float> AgreementMatrix<F> {
    /// Fills in the averages for a given square matrix.
    pub fn from_values(annotator_ids: Vec<AnnotatorId>, values: Vec<Vec<Option<F>>>, notes: Vec<String>) -> Self {
        let row_averages: Vec<Option<F>> = values.iter().map(|r| row_average(r)).collect();
        let off: Vec<Option<F>> = values
            .iter()
            .enumerate()
            .map(|(i, r)| off_diagonal_row_average(r, i))
            .collect();
        Self {
            annotator_ids,
            overall_average: overall_average(&row_averages),
            off_diagonal_overall_average: overall_average(&off),
            row_averages,
            off_diagonal_row_averages: off,
            values,
            notes,
        }
    }
}

/// Pairwise correlations of every vector against every other, including
/// itself. Undefined pairs are left absent and noted.
pub fn agreement_matrix<F: Float>(vectors: &[RatingVector<F>]) -> Result<AgreementMatrix<F>, AnalyticsError> {
    let n = vectors.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewAnnotators(n));
    }
    let mut values = vec![vec![None; n]; n];
    let mut notes = Vec::new();
    for i in 0..n {
        for j in i..n {
            match paired_pcc(&vectors[i], &vectors[j]) {
                Ok(r) => {
                    values[i][j] = Some(r);
                    values[j][i] = Some(r);
                }
                Err(e) => notes.push(format!(
                    "{} / {}: {e}",
                    vectors[i].annotator_id, vectors[j].annotator_id
                )),
            }
        }
    }
    let ids = vectors.iter().map(|v| v.annotator_id.clone()).collect();
    Ok(AgreementMatrix::from_values(ids, values, notes))
}

/// Grouping of one aggregate cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase", untagged)]
pub enum GroupKey {
    Problem(ProblemId),
    Bucket(ScoreBucket),
}

impl GroupKey {
    pub fn label(&self) -> &str {
        match self {
            GroupKey::Problem(p) => p.as_str(),
            GroupKey::Bucket(b) => b.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateCell<F> {
    pub group: GroupKey,
    pub level: FeedbackLevel,
    pub metric: Metric,
    pub mean: F,
    /// Population standard deviation.
    pub std_dev: F,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Aggregation<F> {
    pub metric: Metric,
    pub cells: Vec<AggregateCell<F>>,
    pub notes: Vec<String>,
}

/// Population mean and standard deviation.
pub fn mean_std<F: Float>(xs: &[F]) -> (F, F) {
    let m = mean(xs);
    let var = xs.iter().fold(F::zero(), |a, &x| a + (x - m) * (x - m)) / from_usize(xs.len());
    (m, var.sqrt())
}

fn aggregate<F: Float>(
    ratings: &[Rating],
    metric: Metric,
    group_of: impl Fn(&Rating) -> Option<GroupKey>,
    order: &[GroupKey],
) -> Aggregation<F> {
    let mut groups: BTreeMap<(GroupKey, FeedbackLevel), Vec<F>> = BTreeMap::new();
    let mut notes = Vec::new();
    for r in ratings.iter().filter(|r| r.metric == metric) {
        match group_of(r) {
            Some(g) => groups
                .entry((g, r.level))
                .or_default()
                .push(F::from(r.score).expect("Likert score fits the scalar")),
            None => notes.push(format!(
                "rating of {} by {} has no group and was left out",
                r.submission_id, r.annotator_id
            )),
        }
    }
    let rank = |g: &GroupKey| order.iter().position(|o| o == g).unwrap_or(order.len());
    let mut cells: Vec<AggregateCell<F>> = groups
        .into_iter()
        .map(|((group, level), xs)| {
            let (mean, std_dev) = mean_std(&xs);
            AggregateCell {
                group,
                level,
                metric,
                mean,
                std_dev,
                n: xs.len(),
            }
        })
        .collect();
    cells.sort_by(|a, b| {
        rank(&a.group)
            .cmp(&rank(&b.group))
            .then_with(|| a.group.cmp(&b.group))
            .then(a.level.cmp(&b.level))
    });
    for g in order {
        for level in FeedbackLevel::ALL {
            if !cells.iter().any(|c| &c.group == g && c.level == level) {
                notes.push(format!("no {metric} ratings for {} at {level}", g.label()));
            }
        }
    }
    Aggregation { metric, cells, notes }
}

/// One cell per (problem, level). `problem_order` fixes the row order and
/// lists the groups expected to be present; other problems follow by id.
pub fn aggregate_question_level<F: Float>(
    ratings: &[Rating],
    metric: Metric,
    problem_order: &[ProblemId],
) -> Aggregation<F> {
    let order: Vec<GroupKey> = problem_order.iter().cloned().map(GroupKey::Problem).collect();
    aggregate(
        ratings,
        metric,
        |r| Some(GroupKey::Problem(r.problem_id.clone())),
        &order,
    )
}

/// One cell per (bucket, level), pooling problems. Ratings of submissions
/// missing from `buckets` are left out with a note.
pub fn aggregate_bucket_level<F: Float>(
    ratings: &[Rating],
    metric: Metric,
    buckets: &HashMap<SubmissionId, ScoreBucket>,
) -> Aggregation<F> {
    let order: Vec<GroupKey> = ScoreBucket::STUDY.into_iter().map(GroupKey::Bucket).collect();
    aggregate(
        ratings,
        metric,
        |r| buckets.get(&r.submission_id).map(|b| GroupKey::Bucket(*b)),
        &order,
    )
}
