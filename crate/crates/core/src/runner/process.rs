//! Child-process execution with a wall-clock limit and a stdout cap.

use std::io::{self, Read, Write};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Limits {
    pub time: Duration,
    pub output: usize,
}

#[derive(Debug)]
pub(crate) struct Execution {
    /// `None` when the process was killed by the runner.
    pub status: Option<ExitStatus>,
    pub timed_out: bool,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub stdout_truncated: bool,
}

impl Execution {
    pub fn success(&self) -> bool {
        !self.timed_out && !self.stdout_truncated && self.status.is_some_and(|s| s.success())
    }
}

fn spawn_reader<R: Read + Send + 'static>(
    mut pipe: R,
    cap: usize,
    overflow: Arc<AtomicBool>,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut out = Vec::new();
        let mut chunk = [0u8; 8192];
        loop {
            match pipe.read(&mut chunk) {
                Ok(0) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(out.len());
                    if n > room {
                        out.extend_from_slice(&chunk[..room]);
                        overflow.store(true, Ordering::SeqCst);
                        break;
                    }
                    out.extend_from_slice(&chunk[..n]);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        out
    })
}

#[cfg(unix)]
fn isolate(cmd: &mut Command) {
    use std::os::unix::process::CommandExt;
    cmd.process_group(0);
}

#[cfg(not(unix))]
fn isolate(_cmd: &mut Command) {}

#[cfg(unix)]
fn kill_tree(child: &mut Child) {
    // The child leads its own process group, so this also reaches anything it spawned.
    let pgid = child.id() as libc::pid_t;
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut Child) {
    let _ = child.kill();
}

/// Runs `argv` in `cwd`, feeding `stdin`. Spawn failures surface as `io::Error`;
/// everything after a successful spawn is reported in the [`Execution`].
pub(crate) fn execute(argv: &[String], cwd: &Path, stdin: &[u8], limits: Limits) -> io::Result<Execution> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(cwd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    isolate(&mut cmd);
    let mut child = cmd.spawn()?;

    let overflow = Arc::new(AtomicBool::new(false));
    let stdout = spawn_reader(
        child.stdout.take().expect("piped stdout"),
        limits.output,
        Arc::clone(&overflow),
    );
    let stderr = spawn_reader(
        child.stderr.take().expect("piped stderr"),
        limits.output,
        Arc::new(AtomicBool::new(false)),
    );
    let mut input = child.stdin.take().expect("piped stdin");
    let payload = stdin.to_vec();
    let writer = thread::spawn(move || {
        // A program that exits without reading its input closes the pipe early.
        let _ = input.write_all(&payload);
    });

    let started = Instant::now();
    let mut pause = Duration::from_millis(1);
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if overflow.load(Ordering::SeqCst) {
            kill_tree(&mut child);
            let _ = child.wait();
            break None;
        }
        if started.elapsed() >= limits.time {
            timed_out = true;
            kill_tree(&mut child);
            let _ = child.wait();
            break None;
        }
        thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(10));
    };
    // Reap stragglers still holding the pipes open.
    kill_tree(&mut child);

    let _ = writer.join();
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();
    Ok(Execution {
        status,
        timed_out,
        stdout,
        stderr,
        stdout_truncated: overflow.load(Ordering::SeqCst),
    })
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn sh(script: &str, limits: Limits) -> Execution {
        let argv = vec!["sh".to_string(), "-c".to_string(), script.to_string()];
        execute(&argv, Path::new("."), b"", limits).unwrap()
    }

    const GENEROUS: Limits = Limits {
        time: Duration::from_secs(5),
        output: 1 << 16,
    };

    #[test]
    fn captures_output_and_status() {
        let e = sh("echo hi; echo err >&2; exit 3", GENEROUS);
        assert_eq!(e.stdout, b"hi\n");
        assert_eq!(e.stderr, b"err\n");
        assert_eq!(e.status.unwrap().code(), Some(3));
        assert!(!e.success());
    }

    #[test]
    fn feeds_stdin() {
        let argv = vec!["sh".into(), "-c".into(), "read a; read b; echo $((a+b))".into()];
        let e = execute(&argv, Path::new("."), b"5\n6\n", GENEROUS).unwrap();
        assert_eq!(e.stdout, b"11\n");
        assert!(e.success());
    }

    #[test]
    fn kills_on_timeout_including_grandchildren() {
        let limits = Limits {
            time: Duration::from_millis(200),
            output: 1024,
        };
        let started = Instant::now();
        let e = sh("sleep 30 & sleep 30; echo never", limits);
        assert!(e.timed_out);
        assert!(e.stdout.is_empty());
        assert!(started.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn truncates_runaway_output() {
        let limits = Limits {
            time: Duration::from_secs(5),
            output: 100,
        };
        let e = sh("yes spam", limits);
        assert!(e.stdout_truncated);
        assert_eq!(e.stdout.len(), 100);
        assert!(!e.timed_out);
        assert!(!e.success());
    }

    #[test]
    fn missing_program_is_a_spawn_error() {
        let argv = vec!["definitely-not-a-real-binary-xyz".to_string()];
        let err = execute(&argv, Path::new("."), b"", GENEROUS).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::NotFound);
    }
}
