use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use thiserror::Error;

use super::GenerationParams;
use crate::model::SubmissionId;

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    /// Lets fixture-backed completers pick a canned response.
    pub submission_id: SubmissionId,
    pub prompt: String,
    pub params: GenerationParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// The model stopped because it ran out of tokens.
    pub truncated: bool,
}

#[derive(Debug, Error)]
pub enum CompletionError {
    #[error("missing API credential: set {0}")]
    MissingCredential(&'static str),
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint rejected the request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("model returned an empty response")]
    EmptyResponse,
    #[error("{0}")]
    Generation(String),
}

/// A chat-completion backend. Implementations are shared across worker threads.
pub trait Completer: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, CompletionError>;
}

impl<C: Completer + ?Sized> Completer for &C {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, CompletionError> {
        (**self).complete(request)
    }
}

impl<C: Completer + ?Sized> Completer for Box<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, CompletionError> {
        (**self).complete(request)
    }
}

/// Canned responses keyed by submission id.
///
/// Successive calls for one id walk through its response list and then keep
/// returning the last entry.
#[derive(Debug, Default)]
pub struct MockCompleter {
    responses: HashMap<String, Vec<Completion>>,
    calls: Mutex<HashMap<String, usize>>,
}

impl MockCompleter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(self, id: &str, text: impl Into<String>) -> Self {
        self.with_completion(
            id,
            Completion {
                text: text.into(),
                truncated: false,
            },
        )
    }

    pub fn with_completion(mut self, id: &str, completion: Completion) -> Self {
        self.responses.entry(id.to_string()).or_default().push(completion);
        self
    }

    /// Loads `<submission-id>.txt` files from `dir`. A file named
    /// `<submission-id>.truncated.txt` yields a completion marked truncated.
    pub fn from_dir(dir: &Path) -> Result<Self, CompletionError> {
        let read_err = |e: std::io::Error| CompletionError::Generation(format!("{}: {e}", dir.display()));
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(read_err)?
            .collect::<Result<_, _>>()
            .map_err(read_err)?;
        entries.sort_by_key(|e| e.file_name());
        let mut mock = Self::new();
        for entry in entries {
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(stem) = name.strip_suffix(".txt") else {
                continue;
            };
            let (id, truncated) = match stem.strip_suffix(".truncated") {
                Some(id) => (id, true),
                None => (stem, false),
            };
            let text = fs::read_to_string(entry.path()).map_err(read_err)?;
            mock = mock.with_completion(id, Completion { text, truncated });
        }
        Ok(mock)
    }

    pub fn calls_for(&self, id: &str) -> usize {
        self.calls.lock().expect("mock call log").get(id).copied().unwrap_or(0)
    }
}

impl Completer for MockCompleter {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, CompletionError> {
        let id = request.submission_id.as_str();
        let attempt = {
            let mut calls = self.calls.lock().expect("mock call log");
            let n = calls.entry(id.to_string()).or_default();
            *n += 1;
            *n - 1
        };
        let list = self
            .responses
            .get(id)
            .ok_or_else(|| CompletionError::Generation(format!("no mock response for submission {id}")))?;
        let completion = list[attempt.min(list.len() - 1)].clone();
        if completion.text.trim().is_empty() {
            return Err(CompletionError::EmptyResponse);
        }
        Ok(completion)
    }
}
