//! Compiles submissions spliced into their problem's driver and runs them
//! against test inputs.
//!
//! The driver contract: rendered argument literals arrive on stdin, one per
//! line; the driver prints the rendered return value on one line and exits 0.
//! Any other exit is a runtime error.

mod process;
mod toolchain;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::TempDir;
use thiserror::Error;

use crate::model::{bucket_of, ModelError, Problem, ProblemId, ScoreBucket, Submission, SubmissionId, Value};
use crate::Score;

use process::{execute, Execution, Limits};
pub use toolchain::{
    load_toolchains, BatchCompiler, Toolchain, COMPILE_TIME_LIMIT, DEFAULT_OUTPUT_LIMIT, DEFAULT_TIME_LIMIT,
    JANINO_HOME_ENV,
};

/// Text standing in for program output when a run crashed.
pub const RUNTIME_ERROR_MARKER: &str = "<runtime-error>";
/// Text standing in for program output when a run hit the time limit.
pub const TIMEOUT_MARKER: &str = "<timeout>";

#[derive(Debug, Error)]
pub enum RunnerError {
    /// The toolchain itself could not be started.
    #[error("toolchain unavailable: {0}")]
    ToolchainUnavailable(String),
    #[error("invalid toolchain: {0}")]
    InvalidToolchain(String),
    #[error("submission does not compile:\n{0}")]
    CompileFailed(String),
    #[error("invalid arguments: {0}")]
    Arguments(#[from] ModelError),
    #[error("workspace error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Output,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunOutcome {
    pub status: RunStatus,
    pub stdout: String,
    pub stderr: String,
    /// Stdout exceeded the toolchain's output limit and was cut.
    #[serde(default)]
    pub truncated: bool,
}

impl RunOutcome {
    /// What the program "returned", for comparisons: trimmed stdout, or a
    /// marker when it crashed or timed out.
    pub fn observed(&self) -> &str {
        match self.status {
            RunStatus::Output => self.stdout.trim(),
            RunStatus::RuntimeError => RUNTIME_ERROR_MARKER,
            RunStatus::Timeout => TIMEOUT_MARKER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestVerdict {
    pub test_index: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GradeReport {
    pub submission_id: SubmissionId,
    pub problem_id: ProblemId,
    pub compiled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
    pub verdicts: Vec<TestVerdict>,
    pub passes: u32,
    pub total: u32,
    /// `passes / total`; absent when compilation failed.
    pub score: Option<f64>,
}

impl GradeReport {
    /// Exact pass fraction, `None` for compile failures.
    pub fn score_ratio(&self) -> Option<Score> {
        (self.compiled && self.total > 0).then(|| Score::new(self.passes, self.total))
    }

    pub fn bucket(&self) -> Option<ScoreBucket> {
        self.score_ratio().and_then(|s| bucket_of(s).ok())
    }

    pub fn is_perfect(&self) -> bool {
        self.compiled && self.passes == self.total
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileCheck {
    pub success: bool,
    pub diagnostics: String,
}

#[derive(Debug)]
enum Workspace {
    Temp(TempDir),
    /// A program directory in the runner's cache, kept across processes.
    Kept(PathBuf),
}

impl Workspace {
    fn path(&self) -> &Path {
        match self {
            Workspace::Temp(t) => t.path(),
            Workspace::Kept(p) => p,
        }
    }
}

/// A successfully compiled submission living in its own work directory.
pub struct CompiledProgram {
    workspace: Workspace,
    source: PathBuf,
    toolchain: Toolchain,
}

impl CompiledProgram {
    pub fn dir(&self) -> &Path {
        self.workspace.path()
    }

    /// Runs once with the given arguments. Argument types are the caller's
    /// responsibility; see [`Runner::run_single`] for the checked entry point.
    pub fn run(&self, args: &[Value]) -> Result<RunOutcome, RunnerError> {
        let mut stdin = String::new();
        for arg in args {
            stdin.push_str(&arg.render());
            stdin.push('\n');
        }
        let argv = self
            .toolchain
            .expand(&self.toolchain.run_command, &self.source, self.dir());
        let limits = Limits {
            time: self.toolchain.time_limit(),
            output: self.toolchain.output_limit,
        };
        let exec = execute(&argv, self.dir(), stdin.as_bytes(), limits).map_err(|e| spawn_error(&argv, e))?;
        Ok(outcome(exec))
    }
}

fn outcome(exec: Execution) -> RunOutcome {
    let status = if exec.timed_out {
        RunStatus::Timeout
    } else if exec.stdout_truncated || exec.status.is_some_and(|s| s.success()) {
        RunStatus::Output
    } else {
        RunStatus::RuntimeError
    };
    RunOutcome {
        status,
        stdout: String::from_utf8_lossy(&exec.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&exec.stderr).into_owned(),
        truncated: exec.stdout_truncated,
    }
}

fn spawn_error(argv: &[String], err: io::Error) -> RunnerError {
    let program = argv.first().map(String::as_str).unwrap_or("");
    match err.kind() {
        io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
            RunnerError::ToolchainUnavailable(format!("{program}: {err}"))
        }
        _ => RunnerError::Io(err),
    }
}

/// Result of splicing and compiling one program.
pub enum Compilation {
    Compiled(Arc<CompiledProgram>),
    Failed { diagnostics: String },
}

/// Programs compiled by [`Runner::run_code`], keyed by spliced source.
#[derive(Clone, Default)]
struct ProgramCache(Arc<Mutex<HashMap<String, ProgramSlot>>>);

type ProgramSlot = Arc<Mutex<Option<Arc<CompiledProgram>>>>;

impl fmt::Debug for ProgramCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.0.lock().map(|m| m.len()).unwrap_or(0);
        write!(f, "ProgramCache({n} programs)")
    }
}

const PROGRAM_CACHE_LIMIT: usize = 64;

/// Clones share one program cache.
#[derive(Debug, Clone)]
pub struct Runner {
    toolchain: Toolchain,
    workers: usize,
    programs: ProgramCache,
    cache_dir: Option<PathBuf>,
    /// Build of the toolchain's batch helper: unset until first needed,
    /// `Some(None)` once it failed to compile.
    helper: Arc<Mutex<Option<Option<Workspace>>>>,
}

impl Runner {
    pub fn new(toolchain: Toolchain) -> Self {
        Self {
            toolchain,
            workers: 4,
            programs: ProgramCache::default(),
            cache_dir: None,
            helper: Arc::default(),
        }
    }

    /// Upper bound on tests executed concurrently within one grade call.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    /// Keeps successful compilations under `dir`, keyed by a hash of the
    /// toolchain and the spliced source, so later processes skip the
    /// compiler. Programs then run with the shared cache entry as working
    /// directory.
    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn toolchain(&self) -> &Toolchain {
        &self.toolchain
    }

    /// Splices `code` into the problem's driver and compiles it in a fresh
    /// work directory.
    pub fn compile(&self, problem: &Problem, code: &str) -> Result<Compilation, RunnerError> {
        self.toolchain.validate()?;
        let spliced = problem.splice(code);
        let cached = self.cache_dir.as_ref().map(|d| d.join(self.cache_key(&spliced)));
        if let Some(dir) = cached.as_ref().filter(|d| d.is_dir()) {
            return Ok(Compilation::Compiled(Arc::new(self.kept_program(dir.clone()))));
        }
        let workspace = self.build_dir()?;
        let source = workspace.path().join(self.toolchain.source_file_name());
        fs::write(&source, spliced)?;
        let argv = self
            .toolchain
            .expand(&self.toolchain.compile_command, &source, workspace.path());
        let limits = Limits {
            time: COMPILE_TIME_LIMIT,
            output: 1 << 20,
        };
        let exec = execute(&argv, workspace.path(), b"", limits).map_err(|e| spawn_error(&argv, e))?;
        if exec.success() {
            Ok(Compilation::Compiled(Arc::new(self.publish(workspace, cached)?)))
        } else {
            let mut diagnostics = String::from_utf8_lossy(&exec.stdout).into_owned();
            diagnostics.push_str(&String::from_utf8_lossy(&exec.stderr));
            if exec.timed_out {
                diagnostics.push_str("\ncompilation timed out");
            }
            Ok(Compilation::Failed { diagnostics })
        }
    }

    /// A fresh directory to build in: inside the cache when there is one, so
    /// publishing is a rename.
    fn build_dir(&self) -> io::Result<TempDir> {
        match &self.cache_dir {
            Some(d) => {
                fs::create_dir_all(d)?;
                tempfile::Builder::new().prefix(".build-").tempdir_in(d)
            }
            None => tempfile::Builder::new().prefix("ladderforge-").tempdir(),
        }
    }

    /// Turns a successful build into a program, moving it to `cached` when
    /// the runner keeps a compile cache.
    fn publish(&self, workspace: TempDir, cached: Option<PathBuf>) -> Result<CompiledProgram, RunnerError> {
        let Some(dir) = cached else {
            return Ok(CompiledProgram {
                source: workspace.path().join(self.toolchain.source_file_name()),
                workspace: Workspace::Temp(workspace),
                toolchain: self.toolchain.clone(),
            });
        };
        let built = workspace.keep();
        // Another process may have published the same program first.
        if fs::rename(&built, &dir).is_err() {
            let _ = fs::remove_dir_all(&built);
            if !dir.is_dir() {
                return Err(RunnerError::Io(io::Error::other(format!(
                    "cannot publish {} to the program cache",
                    dir.display()
                ))));
            }
        }
        Ok(self.kept_program(dir))
    }

    fn cached(&self, spliced: &str) -> Option<Arc<CompiledProgram>> {
        let slot = Arc::clone(self.programs.0.lock().expect("program cache").get(spliced)?);
        let program = slot.lock().expect("program slot").clone();
        program
    }

    fn remember(&self, spliced: String, program: Arc<CompiledProgram>) {
        let mut cache = self.programs.0.lock().expect("program cache");
        if cache.len() >= PROGRAM_CACHE_LIMIT && !cache.contains_key(&spliced) {
            cache.clear();
        }
        cache.insert(spliced, Arc::new(Mutex::new(Some(program))));
    }

    /// Compiles the given programs ahead of [`Runner::grade`] and
    /// [`Runner::run_code`], in a single compiler process when the toolchain
    /// has a batch compiler. Without one, or if the batch itself breaks,
    /// this does nothing and programs compile one by one on first use.
    /// Programs that fail are left for that path to report.
    pub fn precompile(&self, jobs: &[(&Problem, &str)]) -> Result<(), RunnerError> {
        self.toolchain.validate()?;
        let Some(batch) = &self.toolchain.batch else {
            return Ok(());
        };
        let mut pending: Vec<(String, Option<PathBuf>)> = Vec::new();
        for (problem, code) in jobs {
            let spliced = problem.splice(code);
            if self.cached(&spliced).is_some() || pending.iter().any(|(s, _)| *s == spliced) {
                continue;
            }
            let cached = self.cache_dir.as_ref().map(|d| d.join(self.cache_key(&spliced)));
            match cached.as_ref().filter(|d| d.is_dir()) {
                Some(dir) => self.remember(spliced, Arc::new(self.kept_program(dir.clone()))),
                None => pending.push((spliced, cached)),
            }
        }
        if pending.len() < 2 {
            return Ok(());
        }
        let Some(helper) = self.batch_helper(batch)? else {
            return Ok(());
        };

        let mut builds = Vec::with_capacity(pending.len());
        let mut stdin = String::new();
        for (spliced, _) in &pending {
            let workspace = self.build_dir()?;
            let source = workspace.path().join(self.toolchain.source_file_name());
            fs::write(&source, spliced)?;
            let line = format!("{}\t{}\n", source.display(), workspace.path().display());
            if line.matches(['\t', '\n']).count() != 2 {
                return Ok(());
            }
            stdin.push_str(&line);
            builds.push(workspace);
        }
        let argv = self
            .toolchain
            .expand(&batch.command, &helper.join(&batch.helper_file_name), &helper);
        let limits = Limits {
            time: COMPILE_TIME_LIMIT * pending.len().min(10) as u32,
            output: 1 << 20,
        };
        let exec = execute(&argv, &helper, stdin.as_bytes(), limits).map_err(|e| spawn_error(&argv, e))?;
        let answers: Vec<&str> = std::str::from_utf8(&exec.stdout).unwrap_or("").lines().collect();
        if !exec.success() || answers.len() != pending.len() {
            return Ok(());
        }
        for ((spliced, cached), (workspace, answer)) in pending.into_iter().zip(builds.into_iter().zip(answers)) {
            if answer == "ok" {
                let program = self.publish(workspace, cached)?;
                self.remember(spliced, Arc::new(program));
            }
        }
        Ok(())
    }

    /// Builds the batch helper once per runner, or once per cache directory.
    /// `None` when it does not compile; callers then fall back to single
    /// compiles.
    fn batch_helper(&self, batch: &BatchCompiler) -> Result<Option<PathBuf>, RunnerError> {
        let mut helper = self.helper.lock().expect("batch helper");
        if let Some(h) = helper.as_ref() {
            return Ok(h.as_ref().map(|w| w.path().to_path_buf()));
        }
        let cached = self.cache_dir.as_ref().map(|d| {
            let mut h = Sha256::new();
            h.update(batch.helper_compile_command.as_bytes());
            h.update([0]);
            h.update(batch.helper_source.as_bytes());
            let key: String = h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect();
            d.join(format!("batch-{key}"))
        });
        if let Some(dir) = cached.as_ref().filter(|d| d.is_dir()) {
            *helper = Some(Some(Workspace::Kept(dir.clone())));
            return Ok(Some(dir.clone()));
        }
        let workspace = self.build_dir()?;
        let source = workspace.path().join(&batch.helper_file_name);
        fs::write(&source, &batch.helper_source)?;
        let argv = self
            .toolchain
            .expand(&batch.helper_compile_command, &source, workspace.path());
        let limits = Limits {
            time: COMPILE_TIME_LIMIT,
            output: 1 << 20,
        };
        let exec = execute(&argv, workspace.path(), b"", limits).map_err(|e| spawn_error(&argv, e))?;
        let built = match (exec.success(), cached) {
            (false, _) => None,
            (true, None) => Some(Workspace::Temp(workspace)),
            (true, Some(dir)) => {
                let tmp = workspace.keep();
                if fs::rename(&tmp, &dir).is_err() {
                    let _ = fs::remove_dir_all(&tmp);
                }
                dir.is_dir().then_some(Workspace::Kept(dir))
            }
        };
        let path = built.as_ref().map(|w| w.path().to_path_buf());
        *helper = Some(built);
        Ok(path)
    }

    fn kept_program(&self, dir: PathBuf) -> CompiledProgram {
        CompiledProgram {
            source: dir.join(self.toolchain.source_file_name()),
            workspace: Workspace::Kept(dir),
            toolchain: self.toolchain.clone(),
        }
    }

    fn cache_key(&self, spliced: &str) -> String {
        let t = &self.toolchain;
        let mut h = Sha256::new();
        for part in [
            &t.name,
            &t.compile_command,
            &t.run_command,
            &t.source_extension,
            spliced,
        ] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn compile_check(&self, submission: &Submission, problem: &Problem) -> Result<CompileCheck, RunnerError> {
        Ok(match self.compile(problem, &submission.code)? {
            Compilation::Compiled(_) => CompileCheck {
                success: true,
                diagnostics: String::new(),
            },
            Compilation::Failed { diagnostics } => CompileCheck {
                success: false,
                diagnostics,
            },
        })
    }

    /// Compiles `code` and runs it once on `args`.
    pub fn run_code(&self, problem: &Problem, code: &str, args: &[Value]) -> Result<RunOutcome, RunnerError> {
        problem.signature.check_arguments(0, args)?;
        self.cached_program(problem, code)?.run(args)
    }

    /// Compiles at most once per distinct spliced source, so repeated runs
    /// of one reference solution pay for a single compilation. Concurrent
    /// callers wanting the same program wait for the first one's compile.
    fn cached_program(&self, problem: &Problem, code: &str) -> Result<Arc<CompiledProgram>, RunnerError> {
        let key = problem.splice(code);
        let slot = {
            let mut cache = self.programs.0.lock().expect("program cache");
            if cache.len() >= PROGRAM_CACHE_LIMIT && !cache.contains_key(&key) {
                cache.clear();
            }
            Arc::clone(cache.entry(key).or_default())
        };
        let mut slot = slot.lock().expect("program slot");
        if let Some(p) = slot.as_ref() {
            return Ok(Arc::clone(p));
        }
        let program = match self.compile(problem, code)? {
            Compilation::Compiled(program) => program,
            Compilation::Failed { diagnostics } => return Err(RunnerError::CompileFailed(diagnostics)),
        };
        *slot = Some(Arc::clone(&program));
        Ok(program)
    }

    pub fn run_single(
        &self,
        submission: &Submission,
        problem: &Problem,
        args: &[Value],
    ) -> Result<RunOutcome, RunnerError> {
        self.run_code(problem, &submission.code, args)
    }

    /// Compiles once and runs every test. Verdicts are reported in test order
    /// regardless of how runs were scheduled.
    pub fn grade(&self, submission: &Submission, problem: &Problem) -> Result<GradeReport, RunnerError> {
        let total = problem.tests.len() as u32;
        let cached = self.cached(&problem.splice(&submission.code));
        let compiled = match cached {
            Some(program) => Compilation::Compiled(program),
            None => self.compile(problem, &submission.code)?,
        };
        let program = match compiled {
            Compilation::Compiled(program) => program,
            Compilation::Failed { diagnostics } => {
                return Ok(GradeReport {
                    submission_id: submission.id.clone(),
                    problem_id: problem.id.clone(),
                    compiled: false,
                    diagnostics: Some(diagnostics),
                    verdicts: Vec::new(),
                    passes: 0,
                    total,
                    score: None,
                })
            }
        };

        let verdicts = self.run_tests(&program, problem)?;
        let passes = verdicts.iter().filter(|v| v.verdict == Verdict::Pass).count() as u32;
        Ok(GradeReport {
            submission_id: submission.id.clone(),
            problem_id: problem.id.clone(),
            compiled: true,
            diagnostics: None,
            verdicts,
            passes,
            total,
            score: Some(passes as f64 / total as f64),
        })
    }

    fn run_tests(&self, program: &CompiledProgram, problem: &Problem) -> Result<Vec<TestVerdict>, RunnerError> {
        let tests = &problem.tests;
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<Verdict, RunnerError>>>> =
            Mutex::new((0..tests.len()).map(|_| None).collect());
        let workers = self.workers.min(tests.len()).max(1);
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    let Some(test) = tests.get(index) else { break };
                    let verdict = program.run(&test.args).map(|outcome| judge(&outcome, &test.expected));
                    results.lock().expect("results lock")[index] = Some(verdict);
                });
            }
        });
        results
            .into_inner()
            .expect("results lock")
            .into_iter()
            .enumerate()
            .map(|(test_index, verdict)| {
                let verdict = verdict.expect("every test index is claimed once")?;
                Ok(TestVerdict { test_index, verdict })
            })
            .collect()
    }
}

fn judge(outcome: &RunOutcome, expected: &Value) -> Verdict {
    match outcome.status {
        RunStatus::Timeout => Verdict::Timeout,
        RunStatus::RuntimeError => Verdict::RuntimeError,
        RunStatus::Output if outcome.truncated => Verdict::Fail,
        RunStatus::Output if outcome.stdout.trim() == expected.render() => Verdict::Pass,
        RunStatus::Output => Verdict::Fail,
    }
}
