use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProblemId, ScoreBucket, Submission, SubmissionId};
use crate::runner::GradeReport;

/// The submission chosen from each study bucket of one problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketPicks {
    pub low: SubmissionId,
    pub mid: SubmissionId,
    pub high: SubmissionId,
}

impl BucketPicks {
    pub fn get(&self, bucket: ScoreBucket) -> Option<&SubmissionId> {
        match bucket {
            ScoreBucket::Low => Some(&self.low),
            ScoreBucket::Mid => Some(&self.mid),
            ScoreBucket::High => Some(&self.high),
            _ => None,
        }
    }

    /// Picks in presentation order: Low, Mid, High.
    pub fn iter(&self) -> impl Iterator<Item = (ScoreBucket, &SubmissionId)> {
        ScoreBucket::STUDY
            .into_iter()
            .map(|b| (b, self.get(b).expect("study bucket")))
    }
}

/// Study submissions keyed by problem.
pub type StudySelection = BTreeMap<ProblemId, BucketPicks>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("problem {problem} has no graded, compiled submission in the {bucket} bucket")]
    EmptyBucket { problem: ProblemId, bucket: ScoreBucket },
    #[error("problem {0} is listed twice")]
    DuplicateProblem(ProblemId),
}

fn distance(score: Ratio<u32>, center: (u32, u32)) -> Ratio<i64> {
    let s = Ratio::new(*score.numer() as i64, *score.denom() as i64);
    let c = Ratio::new(center.0 as i64, center.1 as i64);
    if s > c {
        s - c
    } else {
        c - s
    }
}

/// Per problem and bucket, the compiled submission whose score is nearest the
/// bucket center. Ties go to the earlier timestamp, then the smaller id.
/// Distances are exact.
pub fn select_study_set(
    problem_ids: &[ProblemId],
    submissions: &[Submission],
    grades: &[GradeReport],
) -> Result<StudySelection, SelectionError> {
    let by_id: HashMap<&SubmissionId, &Submission> = submissions.iter().map(|s| (&s.id, s)).collect();
    let mut selection = StudySelection::new();
    for problem in problem_ids {
        if selection.contains_key(problem) {
            return Err(SelectionError::DuplicateProblem(problem.clone()));
        }
        let pick = |bucket: ScoreBucket| {
            let center = bucket.center().expect("study bucket");
            grades
                .iter()
                .filter(|g| &g.problem_id == problem && g.compiled)
                .filter_map(|g| {
                    let score = g.score_ratio()?;
                    let sub = by_id.get(&g.submission_id)?;
                    (g.bucket() == Some(bucket)).then(|| (distance(score, center), *sub))
                })
                .min_by(|(da, a), (db, b)| {
                    da.cmp(db)
                        .then_with(|| a.timestamp.cmp(&b.timestamp))
                        .then_with(|| a.id.cmp(&b.id))
                })
                .map(|(_, s)| s.id.clone())
                .ok_or_else(|| SelectionError::EmptyBucket {
                    problem: problem.clone(),
                    bucket,
                })
        };
        let picks = BucketPicks {
            low: pick(ScoreBucket::Low)?,
            mid: pick(ScoreBucket::Mid)?,
            high: pick(ScoreBucket::High)?,
        };
        selection.insert(problem.clone(), picks);
    }
    Ok(selection)
}
