use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::RunnerError;

/// Default per-test wall-clock limit.
pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(5);
/// Default stdout cap per run.
pub const DEFAULT_OUTPUT_LIMIT: usize = 64 * 1024;
/// Wall-clock limit for the compile step.
pub const COMPILE_TIME_LIMIT: Duration = Duration::from_secs(120);

/// Environment variable naming a directory holding the Janino jars.
pub const JANINO_HOME_ENV: &str = "LADDERFORGE_JANINO_HOME";
const JANINO_DEFAULT_HOME: &str = "/opt/janino";

/// Short-lived JVMs spend most of their time starting up; these flags
/// roughly halve that for the compiler and for test runs.
const JVM_FAST_START: &str = "-Xshare:auto -XX:TieredStopAtLevel=1 -XX:+UseSerialGC -XX:-UsePerfData";

fn default_time_limit_ms() -> u64 {
    DEFAULT_TIME_LIMIT.as_millis() as u64
}

fn default_output_limit() -> usize {
    DEFAULT_OUTPUT_LIMIT
}

/// How to compile and run one language.
///
/// Command templates are split like a POSIX shell would split them; the
/// tokens `{src}` (spliced source path) and `{dir}` (per-invocation work
/// directory) are substituted inside each word. The spliced source is always
/// written as `Main.<sourceExtension>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Toolchain {
    pub name: String,
    pub compile_command: String,
    pub run_command: String,
    pub source_extension: String,
    #[serde(default = "default_time_limit_ms")]
    pub time_limit_ms: u64,
    #[serde(default = "default_output_limit")]
    pub output_limit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchCompiler>,
}

/// Compiles many programs in one process, for compilers with a slow start.
///
/// `helperSource` is written as `helperFileName` and built once with
/// `helperCompileCommand` (same tokens as `compileCommand`). `command` then
/// runs with `{dir}` set to the helper's build directory. It reads one
/// `<source>\t<outdir>` line per program on stdin and prints `ok` or `fail`
/// for each, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BatchCompiler {
    pub helper_file_name: String,
    pub helper_source: String,
    pub helper_compile_command: String,
    pub command: String,
}

impl Toolchain {
    pub fn new(
        name: impl Into<String>,
        compile_command: impl Into<String>,
        run_command: impl Into<String>,
        source_extension: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            compile_command: compile_command.into(),
            run_command: run_command.into(),
            source_extension: source_extension.into(),
            time_limit_ms: default_time_limit_ms(),
            output_limit: DEFAULT_OUTPUT_LIMIT,
            batch: None,
        }
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit_ms = limit.as_millis() as u64;
        self
    }

    pub fn with_output_limit(mut self, bytes: usize) -> Self {
        self.output_limit = bytes;
        self
    }

    pub fn time_limit(&self) -> Duration {
        Duration::from_millis(self.time_limit_ms)
    }

    pub fn source_file_name(&self) -> String {
        format!("Main.{}", self.source_extension)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |why: &str| RunnerError::InvalidToolchain(format!("{}: {why}", self.name));
        if !self.compile_command.contains("{src}") {
            return Err(bad("compileCommand must reference {src}"));
        }
        if !self.run_command.contains("{src}") && !self.run_command.contains("{dir}") {
            return Err(bad("runCommand must reference {src} or {dir}"));
        }
        if self.source_extension.is_empty() || !self.source_extension.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(bad("sourceExtension must be alphanumeric"));
        }
        if self.time_limit_ms == 0 || self.output_limit == 0 {
            return Err(bad("limits must be positive"));
        }
        for template in [&self.compile_command, &self.run_command] {
            if shlex::split(template).is_none_or(|w| w.is_empty()) {
                return Err(bad("command template does not parse"));
            }
        }
        Ok(())
    }

    pub(crate) fn expand(&self, template: &str, src: &Path, dir: &Path) -> Vec<String> {
        let src = src.to_string_lossy();
        let dir = dir.to_string_lossy();
        shlex::split(template)
            .unwrap_or_default()
            .into_iter()
            .map(|word| word.replace("{src}", &src).replace("{dir}", &dir))
            .collect()
    }

    /// Standard JDK toolchain: `javac` then `java -cp {dir} Main`.
    pub fn java() -> Self {
        Self::new("java", "javac -d {dir} {src}", "java -cp {dir} Main", "java")
    }

    /// Java toolchain for hosts with only a JRE: compiles with the Janino
    /// compiler jars found in `janino_home`.
    pub fn java_janino(java: &Path, janino_home: &Path) -> Result<Self, RunnerError> {
        let jars = janino_jars(janino_home).ok_or_else(|| {
            RunnerError::ToolchainUnavailable(format!(
                "janino and commons-compiler jars not found in {}",
                janino_home.display()
            ))
        })?;
        let java = shlex::try_quote(&java.to_string_lossy())
            .map(|q| q.into_owned())
            .map_err(|e| RunnerError::InvalidToolchain(e.to_string()))?;
        let classpath = jars
            .iter()
            .map(|p| p.to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join(":");
        let classpath = shlex::try_quote(&classpath)
            .map(|q| q.into_owned())
            .map_err(|e| RunnerError::InvalidToolchain(e.to_string()))?;
        let demo =
            format!("{java} {JVM_FAST_START} -cp {classpath} org.codehaus.commons.compiler.samples.CompilerDemo");
        let mut toolchain = Self::new(
            "java",
            format!("{demo} -d {{dir}} {{src}}"),
            format!("{java} {JVM_FAST_START} -cp {{dir}} Main"),
            "java",
        );
        toolchain.batch = Some(BatchCompiler {
            helper_file_name: "BatchCompile.java".into(),
            helper_source: include_str!("BatchCompile.java").into(),
            helper_compile_command: format!("{demo} -classpath {classpath} -d {{dir}} {{src}}"),
            command: format!("{java} {JVM_FAST_START} -cp {classpath}:{{dir}} BatchCompile"),
        });
        Ok(toolchain)
    }

    /// Picks the best available Java toolchain: a JDK on `PATH`, otherwise a
    /// JRE plus Janino. Falls back to [`Toolchain::java`] so that a missing
    /// compiler surfaces as an environment error at compile time.
    pub fn detect_java() -> Self {
        if find_on_path("javac").is_some() {
            return Self::java();
        }
        let java = env::var_os("JAVA_HOME")
            .map(|home| PathBuf::from(home).join("bin").join("java"))
            .filter(|p| p.is_file())
            .or_else(|| find_on_path("java"));
        let home = env::var_os(JANINO_HOME_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(JANINO_DEFAULT_HOME));
        match java {
            Some(java) => Self::java_janino(&java, &home).unwrap_or_else(|_| Self::java()),
            None => Self::java(),
        }
    }

    /// POSIX shell toolchain, used for fast tests of the runner itself.
    pub fn shell() -> Self {
        Self::new("sh", "sh -n {src}", "sh {src}", "sh")
    }

    /// Resolves a built-in name (`java`, `sh`) or a config-file reference
    /// `path` / `path#name`.
    pub fn resolve(spec: &str) -> Result<Self, RunnerError> {
        match spec {
            "java" => return Ok(Self::detect_java()),
            "sh" | "shell" => return Ok(Self::shell()),
            _ => {}
        }
        let (path, name) = match spec.rsplit_once('#') {
            Some((path, name)) => (path, Some(name)),
            None => (spec, None),
        };
        let all = load_toolchains(Path::new(path))?;
        let chosen = match name {
            Some(name) => all.into_iter().find(|t| t.name == name),
            None => all.into_iter().next(),
        };
        chosen.ok_or_else(|| RunnerError::InvalidToolchain(format!("no matching toolchain in {path}")))
    }
}

/// Reads a toolchain config file: a JSON array of toolchains.
pub fn load_toolchains(path: &Path) -> Result<Vec<Toolchain>, RunnerError> {
    let text = fs::read_to_string(path)
        .map_err(|e| RunnerError::InvalidToolchain(format!("cannot read {}: {e}", path.display())))?;
    let toolchains: Vec<Toolchain> =
        serde_json::from_str(&text).map_err(|e| RunnerError::InvalidToolchain(format!("{}: {e}", path.display())))?;
    for t in &toolchains {
        t.validate()?;
    }
    Ok(toolchains)
}

fn janino_jars(home: &Path) -> Option<Vec<PathBuf>> {
    let entries = fs::read_dir(home).ok()?;
    let mut janino = None;
    let mut commons = None;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.ends_with(".jar") {
            continue;
        }
        if name.starts_with("janino") {
            janino = Some(entry.path());
        } else if name.starts_with("commons-compiler") && !name.contains("jdk") {
            commons = Some(entry.path());
        }
    }
    Some(vec![janino?, commons?])
}

pub(crate) fn find_on_path(program: &str) -> Option<PathBuf> {
    let paths = env::var_os("PATH")?;
    env::split_paths(&paths)
        .map(|dir| dir.join(program))
        .find(|candidate| candidate.is_file())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        Toolchain::java().validate().unwrap();
        Toolchain::shell().validate().unwrap();
        Toolchain::detect_java().validate().unwrap();
    }

    #[test]
    fn rejects_template_without_source() {
        let t = Toolchain::new("x", "cc -o out", "./out", "c");
        assert!(matches!(t.validate(), Err(RunnerError::InvalidToolchain(_))));
    }

    #[test]
    fn expands_tokens_inside_words() {
        let t = Toolchain::new("x", "tool --in={src} -o '{dir}/a b'", "{dir}/run", "x");
        let argv = t.expand(&t.compile_command, Path::new("/w/Main.x"), Path::new("/w"));
        assert_eq!(argv, vec!["tool", "--in=/w/Main.x", "-o", "/w/a b"]);
    }

    #[test]
    fn config_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toolchains.json");
        let list = vec![Toolchain::shell(), Toolchain::java().with_output_limit(10)];
        fs::write(&path, serde_json::to_string(&list).unwrap()).unwrap();
        assert_eq!(load_toolchains(&path).unwrap(), list);
        let spec = format!("{}#java", path.display());
        assert_eq!(Toolchain::resolve(&spec).unwrap().output_limit, 10);
        let defaults: Vec<Toolchain> = serde_json::from_str(
            r#"[{"name":"sh","compileCommand":"sh -n {src}","runCommand":"sh {src}","sourceExtension":"sh"}]"#,
        )
        .unwrap();
        assert_eq!(defaults[0].time_limit(), DEFAULT_TIME_LIMIT);
        assert_eq!(defaults[0].output_limit, DEFAULT_OUTPUT_LIMIT);
    }
}
