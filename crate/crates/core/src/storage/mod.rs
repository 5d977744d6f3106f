//! File-backed record store: one JSON file per record, one directory per
//! collection. Writes go to a temporary file that is then renamed over the
//! target, so a reader sees either the old or the new record.

mod ingest;
mod select;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::FeedbackLadder;
use crate::model::{AnnotatorId, Problem, ProblemId, Submission, SubmissionId};
use crate::runner::GradeReport;
use crate::study::{Annotator, Rating, RatingKey, StudyDefinition};
use crate::validator::ValidationReport;

pub use ingest::{
    ingest_problems, ingest_submissions, load_problem_bundle, read_submissions, IngestError, RowRejection,
    SubmissionColumns, SubmissionIngest, SubmissionRow,
};
pub use select::{select_study_set, BucketPicks, SelectionError, StudySelection};

/// Version written into every record envelope.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the store root.
pub const DATA_DIR_ENV: &str = "LADDERFORGE_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collection {
    Problems,
    Submissions,
    Grades,
    Ladders,
    Validations,
    Annotators,
    Ratings,
    Sessions,
    Study,
}

impl Collection {
    pub const ALL: [Collection; 9] = [
        Collection::Problems,
        Collection::Submissions,
        Collection::Grades,
        Collection::Ladders,
        Collection::Validations,
        Collection::Annotators,
        Collection::Ratings,
        Collection::Sessions,
        Collection::Study,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            Collection::Problems => "problems",
            Collection::Submissions => "submissions",
            Collection::Grades => "grades",
            Collection::Ladders => "ladders",
            Collection::Validations => "validations",
            Collection::Annotators => "annotators",
            Collection::Ratings => "ratings",
            Collection::Sessions => "sessions",
            Collection::Study => "study",
        }
    }

    fn kind(self) -> &'static str {
        match self {
            Collection::Problems => "problem",
            Collection::Submissions => "submission",
            Collection::Grades => "grade",
            Collection::Ladders => "ladder",
            Collection::Validations => "validation",
            Collection::Annotators => "annotator",
            Collection::Ratings => "rating",
            Collection::Sessions => "session",
            Collection::Study => "study",
        }
    }
}

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: unreadable record: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{path}: schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersion { path: PathBuf, found: u32 },
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("invalid record: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EnvelopeOut<'a, T> {
    schema_version: u32,
    kind: &'a str,
    record: &'a T,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct EnvelopeIn<T> {
    schema_version: u32,
    record: T,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct VersionOnly {
    schema_version: u32,
}

/// An opaque bearer token bound to one annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub token: String,
    pub annotator_id: AnnotatorId,
    pub issued_at: DateTime<Utc>,
}

fn is_token(token: &str) -> bool {
    !token.is_empty() && token.len() <= 128 && token.bytes().all(|b| b.is_ascii_alphanumeric())
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StorageError> {
        let root = root.into();
        for c in Collection::ALL {
            let dir = root.join(c.dir_name());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, collection: Collection) -> PathBuf {
        self.root.join(collection.dir_name())
    }

    fn path(&self, collection: Collection, key: &str) -> PathBuf {
        self.dir(collection).join(format!("{key}.json"))
    }

    fn write<T: Serialize>(&self, collection: Collection, key: &str, record: &T) -> Result<(), StorageError> {
        let path = self.path(collection, key);
        let dir = path.parent().expect("record path has a parent");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let envelope = EnvelopeOut {
            schema_version: SCHEMA_VERSION,
            kind: collection.kind(),
            record,
        };
        let mut bytes = serde_json::to_vec_pretty(&envelope).map_err(|e| StorageError::Invalid(e.to_string()))?;
        bytes.push(b'\n');
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(&bytes).map_err(io_err(&path))?;
        tmp.as_file().sync_all().map_err(io_err(&path))?;
        tmp.persist(&path).map_err(|e| StorageError::Io {
            path: path.clone(),
            source: e.error,
        })?;
        Ok(())
    }

    fn read_path<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, StorageError> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(path)(e)),
        };
        let corrupt = |e: serde_json::Error| StorageError::Corrupt {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let version: VersionOnly = serde_json::from_slice(&bytes).map_err(corrupt)?;
        if version.schema_version != SCHEMA_VERSION {
            return Err(StorageError::SchemaVersion {
                path: path.to_path_buf(),
                found: version.schema_version,
            });
        }
        let envelope: EnvelopeIn<T> = serde_json::from_slice(&bytes).map_err(corrupt)?;
        debug_assert_eq!(envelope.schema_version, SCHEMA_VERSION);
        Ok(Some(envelope.record))
    }

    fn read<T: DeserializeOwned>(&self, collection: Collection, key: &str) -> Result<Option<T>, StorageError> {
        Self::read_path(&self.path(collection, key))
    }

    fn exists(&self, collection: Collection, key: &str) -> bool {
        self.path(collection, key).is_file()
    }

    /// Every record under `dir`, recursively, in file-name order.
    fn list_dir<T: DeserializeOwned>(dir: &Path) -> Result<Vec<T>, StorageError> {
        let mut paths = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).map_err(io_err(&d))? {
                let path = entry.map_err(io_err(&d))?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.extension().is_some_and(|e| e == "json") {
                    paths.push(path);
                }
            }
        }
        paths.sort();
        let mut records = Vec::with_capacity(paths.len());
        for path in paths {
            if let Some(r) = Self::read_path(&path)? {
                records.push(r);
            }
        }
        Ok(records)
    }

    fn list<T: DeserializeOwned>(&self, collection: Collection) -> Result<Vec<T>, StorageError> {
        Self::list_dir(&self.dir(collection))
    }

    fn require_submission(&self, id: &SubmissionId, problem: &ProblemId) -> Result<(), StorageError> {
        match self.submission(id)? {
            None => Err(StorageError::Integrity(format!("unknown submission {id}"))),
            Some(s) if &s.problem_id != problem => Err(StorageError::Integrity(format!(
                "submission {id} belongs to problem {}, not {problem}",
                s.problem_id
            ))),
            Some(_) => Ok(()),
        }
    }

    pub fn save_problem(&self, problem: &Problem) -> Result<(), StorageError> {
        problem
            .validate()
            .map_err(|e| StorageError::Invalid(format!("problem {}: {e}", problem.id)))?;
        self.write(Collection::Problems, problem.id.as_str(), problem)
    }

    pub fn problem(&self, id: &ProblemId) -> Result<Option<Problem>, StorageError> {
        self.read(Collection::Problems, id.as_str())
    }

    pub fn has_problem(&self, id: &ProblemId) -> bool {
        self.exists(Collection::Problems, id.as_str())
    }

    pub fn problems(&self) -> Result<Vec<Problem>, StorageError> {
        self.list(Collection::Problems)
    }

    pub fn save_submission(&self, submission: &Submission) -> Result<(), StorageError> {
        if !self.has_problem(&submission.problem_id) {
            return Err(StorageError::Integrity(format!(
                "submission {} references unknown problem {}",
                submission.id, submission.problem_id
            )));
        }
        self.write(Collection::Submissions, submission.id.as_str(), submission)
    }

    pub fn submission(&self, id: &SubmissionId) -> Result<Option<Submission>, StorageError> {
        self.read(Collection::Submissions, id.as_str())
    }

    pub fn has_submission(&self, id: &SubmissionId) -> bool {
        self.exists(Collection::Submissions, id.as_str())
    }

    pub fn submissions(&self) -> Result<Vec<Submission>, StorageError> {
        self.list(Collection::Submissions)
    }

    pub fn save_grade(&self, grade: &GradeReport) -> Result<(), StorageError> {
        self.require_submission(&grade.submission_id, &grade.problem_id)?;
        self.write(Collection::Grades, grade.submission_id.as_str(), grade)
    }

    pub fn grade(&self, id: &SubmissionId) -> Result<Option<GradeReport>, StorageError> {
        self.read(Collection::Grades, id.as_str())
    }

    pub fn grades(&self) -> Result<Vec<GradeReport>, StorageError> {
        self.list(Collection::Grades)
    }

    pub fn save_ladder(&self, ladder: &FeedbackLadder) -> Result<(), StorageError> {
        self.require_submission(&ladder.submission_id, &ladder.problem_id)?;
        self.write(Collection::Ladders, ladder.submission_id.as_str(), ladder)
    }

    pub fn ladder(&self, id: &SubmissionId) -> Result<Option<FeedbackLadder>, StorageError> {
        self.read(Collection::Ladders, id.as_str())
    }

    pub fn has_ladder(&self, id: &SubmissionId) -> bool {
        self.exists(Collection::Ladders, id.as_str())
    }

    pub fn ladders(&self) -> Result<Vec<FeedbackLadder>, StorageError> {
        self.list(Collection::Ladders)
    }

    pub fn save_validation(&self, report: &ValidationReport) -> Result<(), StorageError> {
        if !self.exists(Collection::Ladders, report.ladder_id.as_str()) {
            return Err(StorageError::Integrity(format!(
                "no ladder for submission {}",
                report.ladder_id
            )));
        }
        self.write(Collection::Validations, report.ladder_id.as_str(), report)
    }

    pub fn validation(&self, id: &SubmissionId) -> Result<Option<ValidationReport>, StorageError> {
        self.read(Collection::Validations, id.as_str())
    }

    pub fn validations(&self) -> Result<Vec<ValidationReport>, StorageError> {
        self.list(Collection::Validations)
    }

    pub fn save_annotator(&self, annotator: &Annotator) -> Result<(), StorageError> {
        self.write(Collection::Annotators, annotator.id.as_str(), annotator)
    }

    pub fn annotator(&self, id: &AnnotatorId) -> Result<Option<Annotator>, StorageError> {
        self.read(Collection::Annotators, id.as_str())
    }

    pub fn annotators(&self) -> Result<Vec<Annotator>, StorageError> {
        self.list(Collection::Annotators)
    }

    fn rating_key(key: &RatingKey) -> String {
        format!(
            "{}/{}.L{}.{}",
            key.annotator_id,
            key.submission_id,
            key.level.index(),
            key.metric.as_str()
        )
    }

    /// Inserts or replaces the rating with the same key.
    pub fn save_rating(&self, rating: &Rating) -> Result<(), StorageError> {
        if !self.exists(Collection::Annotators, rating.annotator_id.as_str()) {
            return Err(StorageError::Integrity(format!(
                "unknown annotator {}",
                rating.annotator_id
            )));
        }
        self.require_submission(&rating.submission_id, &rating.problem_id)?;
        self.write(Collection::Ratings, &Self::rating_key(&rating.key()), rating)
    }

    pub fn rating(&self, key: &RatingKey) -> Result<Option<Rating>, StorageError> {
        self.read(Collection::Ratings, &Self::rating_key(key))
    }

    pub fn ratings(&self) -> Result<Vec<Rating>, StorageError> {
        self.list(Collection::Ratings)
    }

    pub fn ratings_for(&self, annotator: &AnnotatorId) -> Result<Vec<Rating>, StorageError> {
        let dir = self.dir(Collection::Ratings).join(annotator.as_str());
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        Self::list_dir(&dir)
    }

    pub fn save_session(&self, session: &Session) -> Result<(), StorageError> {
        if !is_token(&session.token) {
            return Err(StorageError::Invalid(
                "session tokens are 1-128 ASCII letters or digits".into(),
            ));
        }
        if !self.exists(Collection::Annotators, session.annotator_id.as_str()) {
            return Err(StorageError::Integrity(format!(
                "unknown annotator {}",
                session.annotator_id
            )));
        }
        self.write(Collection::Sessions, &session.token, session)
    }

    pub fn session(&self, token: &str) -> Result<Option<Session>, StorageError> {
        if !is_token(token) {
            return Ok(None);
        }
        self.read(Collection::Sessions, token)
    }

    pub fn save_study_definition(&self, definition: &StudyDefinition) -> Result<(), StorageError> {
        for item in definition.items() {
            self.require_submission(&item.submission_id, &item.problem_id)?;
        }
        self.write(Collection::Study, "definition", definition)
    }

    pub fn study_definition(&self) -> Result<Option<StudyDefinition>, StorageError> {
        self.read(Collection::Study, "definition")
    }

    pub fn save_selection(&self, selection: &StudySelection) -> Result<(), StorageError> {
        for (problem, picks) in selection {
            for (_, id) in picks.iter() {
                self.require_submission(id, problem)?;
            }
        }
        self.write(Collection::Study, "selection", selection)
    }

    pub fn selection(&self) -> Result<Option<StudySelection>, StorageError> {
        self.read(Collection::Study, "selection")
    }
}
