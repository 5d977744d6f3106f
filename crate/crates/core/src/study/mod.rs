//! The three-phase annotation study: eligibility quiz, calibration loop, and
//! evaluation of every study ladder on two Likert metrics.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::LadderLevels;
use crate::model::{AnnotatorId, FeedbackLevel, ProblemId, ScoreBucket, SubmissionId, Value};
use crate::storage::{BucketPicks, StorageError, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Student,
    Instructor,
    Researcher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Eligibility,
    Calibration,
    Evaluation,
    Done,
    Disqualified,
}

impl Phase {
    pub fn can_move_to(self, next: Phase) -> bool {
        matches!(
            (self, next),
            (Phase::Eligibility, Phase::Calibration)
                | (Phase::Eligibility, Phase::Disqualified)
                | (Phase::Calibration, Phase::Evaluation)
                | (Phase::Evaluation, Phase::Done)
        )
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Eligibility => "eligibility",
            Phase::Calibration => "calibration",
            Phase::Evaluation => "evaluation",
            Phase::Done => "done",
            Phase::Disqualified => "disqualified",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Cursor {
    pub problem_index: usize,
    pub bucket_index: usize,
}

impl Cursor {
    fn item_index(self) -> usize {
        self.problem_index * ScoreBucket::STUDY.len() + self.bucket_index
    }

    fn from_item_index(i: usize) -> Self {
        let n = ScoreBucket::STUDY.len();
        Self {
            problem_index: i / n,
            bucket_index: i % n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StudyState {
    pub phase: Phase,
    pub cursor: Cursor,
    pub calibration_attempts: u32,
}

impl Default for StudyState {
    fn default() -> Self {
        Self {
            phase: Phase::Eligibility,
            cursor: Cursor::default(),
            calibration_attempts: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Annotator {
    pub id: AnnotatorId,
    pub display_name: String,
    pub role: Role,
    pub state: StudyState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Relevance,
    Effectiveness,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Relevance, Metric::Effectiveness];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Relevance => "relevance",
            Metric::Effectiveness => "effectiveness",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relevance" => Ok(Metric::Relevance),
            "effectiveness" => Ok(Metric::Effectiveness),
            _ => Err(format!("unknown metric `{s}` (relevance or effectiveness)")),
        }
    }
}

/// Uniqueness key of a rating; a later rating with the same key replaces it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RatingKey {
    pub annotator_id: AnnotatorId,
    pub submission_id: SubmissionId,
    pub level: FeedbackLevel,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Rating {
    pub annotator_id: AnnotatorId,
    pub problem_id: ProblemId,
    pub submission_id: SubmissionId,
    pub level: FeedbackLevel,
    pub metric: Metric,
    /// Likert score, 1 to 5.
    pub score: u8,
    pub rated_at: DateTime<Utc>,
}

impl Rating {
    pub fn key(&self) -> RatingKey {
        RatingKey {
            annotator_id: self.annotator_id.clone(),
            submission_id: self.submission_id.clone(),
            level: self.level,
            metric: self.metric,
        }
    }
}

pub const LIKERT: std::ops::RangeInclusive<u8> = 1..=5;

/// A multiple-choice rubric question. The correct choice stays on the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibrationItem {
    pub prompt: String,
    pub choices: Vec<String>,
    pub correct_choice_index: usize,
}

/// What a client may see of a calibration item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibrationQuestion {
    pub prompt: String,
    pub choices: Vec<String>,
}

/// A program whose output annotators must predict on a few inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EligibilityTask {
    /// Supplies the driver and signature the program runs under.
    pub problem_id: ProblemId,
    pub code: String,
    pub inputs: Vec<Vec<Value>>,
    /// Runner-computed outputs, one per input set.
    pub expected_outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EligibilityQuestion {
    pub code: String,
    pub inputs: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StudyProblem {
    pub problem_id: ProblemId,
    #[serde(flatten)]
    pub picks: BucketPicks,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StudyDefinition {
    /// In presentation order.
    pub problems: Vec<StudyProblem>,
    pub eligibility: EligibilityTask,
    pub calibration: Vec<CalibrationItem>,
}

/// One submission to rate, identified by its position in the study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StudyItem {
    pub index: usize,
    pub problem_id: ProblemId,
    pub bucket: ScoreBucket,
    pub submission_id: SubmissionId,
}

impl StudyDefinition {
    pub fn validate(&self) -> Result<(), StudyError> {
        if self.problems.is_empty() {
            return Err(StudyError::Input("a study needs at least one problem".into()));
        }
        let e = &self.eligibility;
        if e.inputs.is_empty() || e.inputs.len() != e.expected_outputs.len() {
            return Err(StudyError::Input(
                "eligibility needs one expected output per input set".into(),
            ));
        }
        for (i, item) in self.calibration.iter().enumerate() {
            if item.correct_choice_index >= item.choices.len() {
                return Err(StudyError::Input(format!("calibration item {i} has no correct choice")));
            }
        }
        Ok(())
    }

    /// Every item in presentation order: problem by problem, Low, Mid, High.
    pub fn items(&self) -> Vec<StudyItem> {
        self.problems
            .iter()
            .flat_map(|p| p.picks.iter().map(move |(bucket, id)| (p, bucket, id)))
            .enumerate()
            .map(|(index, (p, bucket, id))| StudyItem {
                index,
                problem_id: p.problem_id.clone(),
                bucket,
                submission_id: id.clone(),
            })
            .collect()
    }

    pub fn calibration_questions(&self) -> Vec<CalibrationQuestion> {
        self.calibration
            .iter()
            .map(|c| CalibrationQuestion {
                prompt: c.prompt.clone(),
                choices: c.choices.clone(),
            })
            .collect()
    }

    pub fn eligibility_question(&self) -> EligibilityQuestion {
        EligibilityQuestion {
            code: self.eligibility.code.clone(),
            inputs: self.eligibility.inputs.clone(),
        }
    }

    /// Ratings a finished annotator holds.
    pub fn ratings_per_annotator(&self) -> usize {
        self.items().len() * FeedbackLevel::ALL.len() * Metric::ALL.len()
    }
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("{0}")]
    State(String),
    #[error("{0}")]
    Input(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CalibrationOutcome {
    pub state: StudyState,
    /// 0-based positions of wrong answers; never the right answers.
    pub wrong_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProblemView {
    pub id: ProblemId,
    pub title: String,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaluationItem {
    pub item: StudyItem,
    pub total_items: usize,
    pub problem: ProblemView,
    pub code: String,
    pub levels: LadderLevels,
    /// Ratings already given for this item.
    pub ratings: Vec<Rating>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextItem {
    Item(Box<EvaluationItem>),
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RatingInput {
    pub submission_id: SubmissionId,
    pub level: FeedbackLevel,
    pub metric: Metric,
    pub score: u8,
}

/// Study operations over a store. Operations on one annotator are
/// serialized; different annotators proceed independently.
pub struct Study {
    store: Store,
    definition: StudyDefinition,
    items: Vec<StudyItem>,
    locks: Mutex<HashMap<AnnotatorId, Arc<Mutex<()>>>>,
}

impl Study {
    pub fn new(store: Store, definition: StudyDefinition) -> Result<Self, StudyError> {
        definition.validate()?;
        let items = definition.items();
        Ok(Self {
            store,
            definition,
            items,
            locks: Mutex::new(HashMap::new()),
        })
    }

    /// Opens the study whose definition is saved in `store`.
    pub fn load(store: Store) -> Result<Self, StudyError> {
        let definition = store
            .study_definition()?
            .ok_or_else(|| StudyError::NotFound("study definition".into()))?;
        Self::new(store, definition)
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn definition(&self) -> &StudyDefinition {
        &self.definition
    }

    pub fn items(&self) -> &[StudyItem] {
        &self.items
    }

    fn lock(&self, id: &AnnotatorId) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        Arc::clone(locks.entry(id.clone()).or_default())
    }

    fn with_annotator<T>(
        &self,
        id: &AnnotatorId,
        f: impl FnOnce(&mut Annotator) -> Result<T, StudyError>,
    ) -> Result<T, StudyError> {
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut annotator = self
            .store
            .annotator(id)?
            .ok_or_else(|| StudyError::NotFound(format!("annotator {id}")))?;
        let before = annotator.state.clone();
        let out = f(&mut annotator)?;
        if annotator.state != before {
            self.store.save_annotator(&annotator)?;
        }
        Ok(out)
    }

    pub fn register(&self, id: AnnotatorId, display_name: &str, role: Role) -> Result<Annotator, StudyError> {
        let lock = self.lock(&id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        if self.store.annotator(&id)?.is_some() {
            return Err(StudyError::Input(format!("annotator {id} already exists")));
        }
        let annotator = Annotator {
            id,
            display_name: display_name.to_string(),
            role,
            state: StudyState::default(),
        };
        self.store.save_annotator(&annotator)?;
        Ok(annotator)
    }

    pub fn annotator(&self, id: &AnnotatorId) -> Result<Annotator, StudyError> {
        self.with_annotator(id, |a| Ok(a.clone()))
    }

    fn expect_phase(a: &Annotator, phase: Phase) -> Result<(), StudyError> {
        if a.state.phase == phase {
            Ok(())
        } else {
            Err(StudyError::State(format!(
                "annotator {} is in the {} phase, not {phase}",
                a.id, a.state.phase
            )))
        }
    }

    fn move_to(a: &mut Annotator, next: Phase) {
        debug_assert!(a.state.phase.can_move_to(next));
        a.state.phase = next;
    }

    pub fn submit_eligibility(&self, id: &AnnotatorId, predicted: &[String]) -> Result<StudyState, StudyError> {
        self.with_annotator(id, |a| {
            Self::expect_phase(a, Phase::Eligibility)?;
            let expected = &self.definition.eligibility.expected_outputs;
            if predicted.len() != expected.len() {
                return Err(StudyError::Input(format!(
                    "expected {} predicted outputs, got {}",
                    expected.len(),
                    predicted.len()
                )));
            }
            let all_right = predicted.iter().zip(expected).all(|(p, e)| p.trim() == e.trim());
            Self::move_to(
                a,
                if all_right {
                    Phase::Calibration
                } else {
                    Phase::Disqualified
                },
            );
            Ok(a.state.clone())
        })
    }

    pub fn submit_calibration(&self, id: &AnnotatorId, answers: &[usize]) -> Result<CalibrationOutcome, StudyError> {
        self.with_annotator(id, |a| {
            Self::expect_phase(a, Phase::Calibration)?;
            let bank = &self.definition.calibration;
            if answers.len() != bank.len() {
                return Err(StudyError::Input(format!(
                    "expected {} answers, got {}",
                    bank.len(),
                    answers.len()
                )));
            }
            let wrong_indices: Vec<usize> = bank
                .iter()
                .zip(answers)
                .enumerate()
                .filter(|(_, (item, &answer))| item.correct_choice_index != answer)
                .map(|(i, _)| i)
                .collect();
            if wrong_indices.is_empty() {
                Self::move_to(a, Phase::Evaluation);
            } else {
                a.state.calibration_attempts += 1;
            }
            Ok(CalibrationOutcome {
                state: a.state.clone(),
                wrong_indices,
            })
        })
    }

    fn item_ratings(&self, annotator: &AnnotatorId, item: &StudyItem) -> Result<Vec<Rating>, StudyError> {
        let mut found = Vec::new();
        for level in FeedbackLevel::ALL {
            for metric in Metric::ALL {
                let key = RatingKey {
                    annotator_id: annotator.clone(),
                    submission_id: item.submission_id.clone(),
                    level,
                    metric,
                };
                if let Some(r) = self.store.rating(&key)? {
                    found.push(r);
                }
            }
        }
        Ok(found)
    }

    fn evaluation_item(&self, item: &StudyItem, ratings: Vec<Rating>) -> Result<EvaluationItem, StudyError> {
        let missing = |what: String| StudyError::NotFound(what);
        let problem = self
            .store
            .problem(&item.problem_id)?
            .ok_or_else(|| missing(format!("problem {}", item.problem_id)))?;
        let submission = self
            .store
            .submission(&item.submission_id)?
            .ok_or_else(|| missing(format!("submission {}", item.submission_id)))?;
        let ladder = self
            .store
            .ladder(&item.submission_id)?
            .ok_or_else(|| missing(format!("ladder for {}", item.submission_id)))?;
        Ok(EvaluationItem {
            item: item.clone(),
            total_items: self.items.len(),
            problem: ProblemView {
                id: problem.id,
                title: problem.title,
                statement: problem.statement,
            },
            code: submission.code,
            levels: ladder.levels,
            ratings,
        })
    }

    /// The item to rate now. Moves past items whose ten ratings are all
    /// present, and finishes the study after the last one.
    pub fn next_evaluation_item(&self, id: &AnnotatorId) -> Result<NextItem, StudyError> {
        let per_item = FeedbackLevel::ALL.len() * Metric::ALL.len();
        self.with_annotator(id, |a| {
            if a.state.phase == Phase::Done {
                return Ok(NextItem::Done);
            }
            Self::expect_phase(a, Phase::Evaluation)?;
            loop {
                let index = a.state.cursor.item_index();
                let Some(item) = self.items.get(index) else {
                    Self::move_to(a, Phase::Done);
                    return Ok(NextItem::Done);
                };
                let ratings = self.item_ratings(&a.id, item)?;
                if ratings.len() < per_item {
                    return Ok(NextItem::Item(Box::new(self.evaluation_item(item, ratings)?)));
                }
                a.state.cursor = Cursor::from_item_index(index + 1);
            }
        })
    }

    /// Records a rating for the current item, replacing any earlier one with
    /// the same level and metric.
    pub fn submit_rating(&self, id: &AnnotatorId, input: &RatingInput) -> Result<Rating, StudyError> {
        self.with_annotator(id, |a| {
            Self::expect_phase(a, Phase::Evaluation)?;
            if !LIKERT.contains(&input.score) {
                return Err(StudyError::Input(format!("score {} is outside 1..5", input.score)));
            }
            let item = self
                .items
                .get(a.state.cursor.item_index())
                .ok_or_else(|| StudyError::State("no current item".into()))?;
            if item.submission_id != input.submission_id {
                return Err(StudyError::State(format!(
                    "submission {} is not the current item ({})",
                    input.submission_id, item.submission_id
                )));
            }
            let rating = Rating {
                annotator_id: a.id.clone(),
                problem_id: item.problem_id.clone(),
                submission_id: input.submission_id.clone(),
                level: input.level,
                metric: input.metric,
                score: input.score,
                rated_at: Utc::now(),
            };
            self.store.save_rating(&rating)?;
            Ok(rating)
        })
    }
}
