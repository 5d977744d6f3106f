use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{StorageError, Store};
use crate::model::{
    InputRange, ParameterSignature, Problem, ProblemId, StudentId, Submission, SubmissionId, TestCase, Value,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: {field}: {message}")]
    Bundle {
        file: PathBuf,
        field: String,
        message: String,
    },
    #[error("duplicate problem id `{id}` ({file})")]
    DuplicateProblem { id: ProblemId, file: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Storage(#[from] StorageError),
}

fn bundle_err(file: &Path, field: impl Into<String>, message: impl ToString) -> IngestError {
    IngestError::Bundle {
        file: file.to_path_buf(),
        field: field.into(),
        message: message.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ProblemFile {
    id: ProblemId,
    title: String,
    statement: String,
    signature: ParameterSignature,
    #[serde(default)]
    reference_solution: Option<String>,
    #[serde(default)]
    input_ranges: BTreeMap<String, InputRange>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TestFile {
    args: Vec<String>,
    expected: String,
}

/// Field named in a serde error message, e.g. "missing field `title`".
fn serde_field(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| format!("line {}", err.line()))
}

fn find_driver(dir: &Path) -> Result<PathBuf, IngestError> {
    let entries = fs::read_dir(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut drivers: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.file_stem().is_some_and(|s| s == "driver"))
        .collect();
    drivers.sort();
    match drivers.len() {
        1 => Ok(drivers.remove(0)),
        0 => Err(bundle_err(&dir.join("driver"), "driver", "no driver source file")),
        _ => Err(bundle_err(dir, "driver", "more than one driver source file")),
    }
}

/// Reads one bundle directory: `problem.json`, `driver.<ext>`, `tests.json`.
pub fn load_problem_bundle(dir: &Path) -> Result<Problem, IngestError> {
    let problem_path = dir.join("problem.json");
    let meta: ProblemFile =
        serde_json::from_str(&read_text(&problem_path)?).map_err(|e| bundle_err(&problem_path, serde_field(&e), &e))?;
    meta.signature
        .validate()
        .map_err(|e| bundle_err(&problem_path, "signature", e))?;
    for name in meta.input_ranges.keys() {
        if meta.signature.position(name).is_none() {
            return Err(bundle_err(
                &problem_path,
                format!("inputRanges.{name}"),
                "not a parameter",
            ));
        }
    }

    let driver_path = find_driver(dir)?;
    let driver_template = read_text(&driver_path)?;

    let tests_path = dir.join("tests.json");
    let raw: Vec<TestFile> =
        serde_json::from_str(&read_text(&tests_path)?).map_err(|e| bundle_err(&tests_path, serde_field(&e), &e))?;
    let sig = &meta.signature;
    let mut tests = Vec::with_capacity(raw.len());
    for (i, t) in raw.into_iter().enumerate() {
        if t.args.len() != sig.arity() {
            return Err(bundle_err(
                &tests_path,
                format!("[{i}].args"),
                format!("expected {} arguments, found {}", sig.arity(), t.args.len()),
            ));
        }
        let mut args = Vec::with_capacity(t.args.len());
        for (j, (lit, param)) in t.args.iter().zip(&sig.params).enumerate() {
            let v = Value::parse_as(lit, param.value_type)
                .map_err(|e| bundle_err(&tests_path, format!("[{i}].args[{j}]"), e))?;
            args.push(v);
        }
        let expected = Value::parse_as(&t.expected, sig.return_type)
            .map_err(|e| bundle_err(&tests_path, format!("[{i}].expected"), e))?;
        tests.push(TestCase { args, expected });
    }

    let problem = Problem {
        id: meta.id,
        title: meta.title,
        statement: meta.statement,
        signature: meta.signature,
        driver_template,
        tests,
        reference_solution: meta.reference_solution,
        input_ranges: meta.input_ranges,
    };
    problem.validate().map_err(|e| bundle_err(dir, "problem", e))?;
    Ok(problem)
}

fn bundle_dirs(path: &Path) -> Result<Vec<PathBuf>, IngestError> {
    if path.join("problem.json").is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Loads every bundle under `path` (or `path` itself when it is a bundle).
/// Nothing is written unless every bundle is valid and no id is already
/// present.
pub fn ingest_problems(store: &Store, path: &Path) -> Result<usize, IngestError> {
    let mut seen = HashSet::new();
    let mut problems = Vec::new();
    for dir in bundle_dirs(path)? {
        let problem = load_problem_bundle(&dir)?;
        let file = dir.join("problem.json");
        if !seen.insert(problem.id.clone()) || store.has_problem(&problem.id) {
            return Err(IngestError::DuplicateProblem { id: problem.id, file });
        }
        problems.push(problem);
    }
    for p in &problems {
        store.save_problem(p)?;
    }
    Ok(problems.len())
}

/// Column names in a submission table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SubmissionColumns {
    /// Optional; ids are derived when the column is absent or empty.
    pub submission_id: String,
    pub student_id: String,
    pub problem_id: String,
    pub code: String,
    pub timestamp: String,
}

impl Default for SubmissionColumns {
    fn default() -> Self {
        Self {
            submission_id: "submission_id".into(),
            student_id: "student_id".into(),
            problem_id: "problem_id".into(),
            code: "code".into(),
            timestamp: "timestamp".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RowRejection {
    /// 1-based data row (CSV rows exclude the header).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SubmissionIngest {
    pub accepted: usize,
    pub rejected: Vec<RowRejection>,
}

fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>, String> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(t.and_utc());
        }
    }
    Err(format!("unreadable timestamp `{raw}`"))
}

fn derived_id(problem: &ProblemId, student: &StudentId, at: &DateTime<Utc>) -> String {
    format!("{problem}-{student}-{}", at.format("%Y%m%dT%H%M%SZ"))
}

type RawRow = BTreeMap<String, String>;

fn build_submission(row: &RawRow, cols: &SubmissionColumns) -> Result<Submission, String> {
    let field = |name: &str| {
        row.get(name)
            .map(String::as_str)
            .ok_or_else(|| format!("missing column `{name}`"))
    };
    let student_id = StudentId::new(field(&cols.student_id)?.trim()).map_err(|e| e.to_string())?;
    let problem_id = ProblemId::new(field(&cols.problem_id)?.trim()).map_err(|e| e.to_string())?;
    let code = field(&cols.code)?.to_string();
    let timestamp = parse_timestamp(field(&cols.timestamp)?)?;
    let id = match row.get(&cols.submission_id).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        Some(id) => id.to_string(),
        None => derived_id(&problem_id, &student_id, &timestamp),
    };
    Ok(Submission {
        id: SubmissionId::new(id).map_err(|e| e.to_string())?,
        student_id,
        problem_id,
        code,
        timestamp,
    })
}

fn is_jsonl(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "jsonl" | "ndjson" | "json"))
}

/// One input row: its 1-based number and the submission or why it was rejected.
pub type SubmissionRow = (usize, Result<Submission, String>);

/// Reads a CSV table (header row) or a JSON-lines file into per-row results.
pub fn read_submissions(path: &Path, cols: &SubmissionColumns) -> Result<Vec<SubmissionRow>, IngestError> {
    let format_err = |message: String| IngestError::Format {
        path: path.to_path_buf(),
        message,
    };
    let io_err = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut rows = Vec::new();
    if is_jsonl(path) {
        let file = fs::File::open(path).map_err(io_err)?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<BTreeMap<String, serde_json::Value>>(&line)
                .map_err(|e| e.to_string())
                .and_then(|obj| {
                    let row: RawRow = obj
                        .into_iter()
                        .map(|(k, v)| match v {
                            serde_json::Value::String(s) => (k, s),
                            other => (k, other.to_string()),
                        })
                        .collect();
                    build_submission(&row, cols)
                });
            rows.push((i + 1, parsed));
        }
        return Ok(rows);
    }

    let bytes = fs::read(path).map_err(io_err)?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(rows);
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| format_err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    for required in [&cols.student_id, &cols.problem_id, &cols.code, &cols.timestamp] {
        if !headers.contains(required) {
            return Err(format_err(format!("missing column `{required}`")));
        }
    }
    for (i, record) in reader.records().enumerate() {
        let row = record.map_err(|e| e.to_string()).and_then(|rec| {
            let row: RawRow = headers.iter().cloned().zip(rec.iter().map(str::to_string)).collect();
            build_submission(&row, cols)
        });
        rows.push((i + 1, row));
    }
    Ok(rows)
}

/// Stores every valid row; rows naming unknown problems, duplicate ids or bad
/// fields are skipped and reported. Code is stored byte for byte.
pub fn ingest_submissions(
    store: &Store,
    path: &Path,
    cols: &SubmissionColumns,
) -> Result<SubmissionIngest, IngestError> {
    let mut report = SubmissionIngest::default();
    let mut seen = HashSet::new();
    for (row, parsed) in read_submissions(path, cols)? {
        let reject = |reason: String| RowRejection { row, reason };
        let sub = match parsed {
            Ok(s) => s,
            Err(reason) => {
                report.rejected.push(reject(reason));
                continue;
            }
        };
        if !store.has_problem(&sub.problem_id) {
            report
                .rejected
                .push(reject(format!("unknown problem `{}`", sub.problem_id)));
            continue;
        }
        if !seen.insert(sub.id.clone()) || store.has_submission(&sub.id) {
            report
                .rejected
                .push(reject(format!("duplicate submission id `{}`", sub.id)));
            continue;
        }
        store.save_submission(&sub)?;
        report.accepted += 1;
    }
    Ok(report)
}
