//! External syntax checking and functional test execution under sandboxed
//! subprocesses, plus terminal outcome classification.
//!
//! Command templates are tool-agnostic: `{candidate}` is substituted with the
//! candidate file name and the command runs inside a per-run sandbox
//! directory that also holds the harness workdir files and the captured
//! `stdout.log` / `stderr.log`. The test command is bounded by a hard
//! wall-clock limit; at the limit the entire process group is killed.

use crate::dataset::HarnessSpec;
use crate::rtl::PortUsageReport;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};
use thiserror::Error;

pub const CANDIDATE_FILE: &str = "candidate.v";
const POLL_INTERVAL: Duration = Duration::from_millis(10);
const LOG_EXCERPT_CHARS: usize = 2000;
const MAX_LOG_BYTES: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub file: Option<String>,
    pub line: Option<u32>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntaxReport {
    pub clean: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub tool_exit: i32,
}

impl SyntaxReport {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warning_count(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Warning).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub total: u32,
    pub passed: u32,
    pub failed: u32,
    pub timed_out: bool,
    pub log_excerpt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeClass {
    /// Testbench passing.
    P,
    /// Functional error: compiles but fails (or never completes) tests.
    FE,
    /// Syntactical error.
    SE,
}

impl std::fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutcomeClass::P => "P",
            OutcomeClass::FE => "FE",
            OutcomeClass::SE => "SE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub class: OutcomeClass,
    pub syntax: SyntaxReport,
    pub usage: PortUsageReport,
    pub tests: Option<TestReport>,
}

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("tool missing: {0}")]
    ToolMissing(String),
    #[error("sandbox failure: {0}")]
    SandboxFailure(String),
}

/// One isolated working directory holding the candidate and harness files.
#[derive(Debug, Clone)]
pub struct Sandbox {
    pub dir: PathBuf,
}

impl Sandbox {
    /// Creates `<root>/<run_id>/<iter_n>/`, writes the harness workdir files
    /// and the candidate. Concurrent runs must use distinct run ids.
    pub fn create(
        root: &Path,
        run_id: &str,
        iteration: u32,
        candidate_code: &str,
        harness: &HarnessSpec,
    ) -> Result<Sandbox, ValidationError> {
        let dir = root.join(run_id).join(format!("iter_{iteration}"));
        fs::create_dir_all(&dir)
            .map_err(|e| ValidationError::SandboxFailure(format!("{}: {e}", dir.display())))?;
        for (name, text) in &harness.workdir_files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)
                    .map_err(|e| ValidationError::SandboxFailure(e.to_string()))?;
            }
            fs::write(&path, text).map_err(|e| ValidationError::SandboxFailure(e.to_string()))?;
        }
        fs::write(dir.join(CANDIDATE_FILE), candidate_code)
            .map_err(|e| ValidationError::SandboxFailure(e.to_string()))?;
        Ok(Sandbox { dir })
    }

    pub fn candidate_path(&self) -> PathBuf {
        self.dir.join(CANDIDATE_FILE)
    }
}

/// Shell-style splitting with single/double quote support; no expansions.
fn split_command(template: &str) -> Vec<String> {
    let mut args = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    for c in template.chars() {
        match quote {
            Some(q) => {
                if c == q {
                    quote = None;
                } else {
                    current.push(c);
                }
            }
            None => match c {
                '\'' | '"' => quote = Some(c),
                c if c.is_whitespace() => {
                    if !current.is_empty() {
                        args.push(std::mem::take(&mut current));
                    }
                }
                _ => current.push(c),
            },
        }
    }
    if !current.is_empty() {
        args.push(current);
    }
    args
}

struct ExecOutcome {
    exit_code: i32,
    timed_out: bool,
    stdout: String,
    stderr: String,
}

fn read_log(path: &Path) -> String {
    let mut buf = Vec::new();
    if let Ok(file) = fs::File::open(path) {
        let _ = file.take(MAX_LOG_BYTES).read_to_end(&mut buf);
    }
    String::from_utf8_lossy(&buf).into_owned()
}

#[cfg(unix)]
fn kill_process_group(pid: u32) {
    // The child was spawned as its own group leader; negative pid addresses
    // the whole tree.
    unsafe {
        libc::killpg(pid as i32, libc::SIGKILL);
    }
}

fn exec_in_sandbox(
    template: &str,
    sandbox: &Sandbox,
    timeout: Duration,
) -> Result<ExecOutcome, ValidationError> {
    let rendered = template.replace("{candidate}", CANDIDATE_FILE);
    let argv = split_command(&rendered);
    if argv.is_empty() {
        return Err(ValidationError::ToolMissing("empty command template".into()));
    }
    let stdout_path = sandbox.dir.join("stdout.log");
    let stderr_path = sandbox.dir.join("stderr.log");
    let stdout_file = fs::File::create(&stdout_path)
        .map_err(|e| ValidationError::SandboxFailure(e.to_string()))?;
    let stderr_file = fs::File::create(&stderr_path)
        .map_err(|e| ValidationError::SandboxFailure(e.to_string()))?;

    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(&sandbox.dir)
        .stdin(Stdio::null())
        .stdout(Stdio::from(stdout_file))
        .stderr(Stdio::from(stderr_file));
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }

    let mut child = cmd.spawn().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ValidationError::ToolMissing(argv[0].clone())
        } else {
            ValidationError::SandboxFailure(format!("spawn {}: {e}", argv[0]))
        }
    })?;

    let started = Instant::now();
    let mut timed_out = false;
    let exit_code = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status.code().unwrap_or(-1),
            Ok(None) => {
                if started.elapsed() >= timeout {
                    #[cfg(unix)]
                    kill_process_group(child.id());
                    #[cfg(not(unix))]
                    let _ = child.kill();
                    let _ = child.wait();
                    timed_out = true;
                    break -1;
                }
                std::thread::sleep(POLL_INTERVAL);
            }
            Err(e) => return Err(ValidationError::SandboxFailure(format!("wait: {e}"))),
        }
    };

    Ok(ExecOutcome {
        exit_code,
        timed_out,
        stdout: read_log(&stdout_path),
        stderr: read_log(&stderr_path),
    })
}

struct DiagnosticRegexes {
    verilator: regex::Regex,
    file_line_sev: regex::Regex,
    bare_sev: regex::Regex,
    file_line: regex::Regex,
}

fn diag_regexes() -> &'static DiagnosticRegexes {
    static RES: OnceLock<DiagnosticRegexes> = OnceLock::new();
    RES.get_or_init(|| DiagnosticRegexes {
        verilator: regex::Regex::new(
            r"^%(Error|Warning)(?:-[A-Za-z0-9_]+)?:\s*(?:([^\s:]+):(\d+):(?:\d+:)?\s*)?(.*)$",
        )
        .expect("static regex"),
        file_line_sev: regex::Regex::new(
            r"(?i)^([^\s:][^:]*):(\d+):(?:\d+:)?\s*(error|warning)[:,]?\s*(.*)$",
        )
        .expect("static regex"),
        bare_sev: regex::Regex::new(r"(?i)^(error|warning):\s*(.*)$").expect("static regex"),
        file_line: regex::Regex::new(r"^([^\s:][^:]*):(\d+):\s*(.*)$").expect("static regex"),
    })
}

/// Parses one tool output line into a diagnostic, if it matches a known
/// shape.
fn parse_diag_line(line: &str) -> Option<Diagnostic> {
    let trimmed = line.trim_end();
    if trimmed.trim().is_empty() {
        return None;
    }
    let res = diag_regexes();
    if let Some(caps) = res.verilator.captures(trimmed) {
        let severity = if caps[1].eq_ignore_ascii_case("error") {
            Severity::Error
        } else {
            Severity::Warning
        };
        return Some(Diagnostic {
            severity,
            message: nonempty_message(&caps[4], trimmed),
            file: caps.get(2).map(|m| m.as_str().to_string()),
            line: caps.get(3).and_then(|m| m.as_str().parse().ok()),
            raw: trimmed.to_string(),
        });
    }
    if let Some(caps) = res.file_line_sev.captures(trimmed) {
        let severity = if caps[3].eq_ignore_ascii_case("error") {
            Severity::Error
        } else {
            Severity::Warning
        };
        return Some(Diagnostic {
            severity,
            message: nonempty_message(&caps[4], trimmed),
            file: Some(caps[1].to_string()),
            line: caps[2].parse().ok(),
            raw: trimmed.to_string(),
        });
    }
    if let Some(caps) = res.bare_sev.captures(trimmed) {
        let severity = if caps[1].eq_ignore_ascii_case("error") {
            Severity::Error
        } else {
            Severity::Warning
        };
        return Some(Diagnostic {
            severity,
            message: nonempty_message(&caps[2], trimmed),
            file: None,
            line: None,
            raw: trimmed.to_string(),
        });
    }
    // iverilog-style `file.v:3: syntax error`.
    if trimmed.to_ascii_lowercase().contains("syntax error") {
        if let Some(caps) = res.file_line.captures(trimmed) {
            return Some(Diagnostic {
                severity: Severity::Error,
                message: caps[3].to_string(),
                file: Some(caps[1].to_string()),
                line: caps[2].parse().ok(),
                raw: trimmed.to_string(),
            });
        }
        return Some(Diagnostic {
            severity: Severity::Error,
            message: trimmed.to_string(),
            file: None,
            line: None,
            raw: trimmed.to_string(),
        });
    }
    None
}

fn nonempty_message(msg: &str, fallback: &str) -> String {
    let m = msg.trim();
    if m.is_empty() {
        fallback.to_string()
    } else {
        m.to_string()
    }
}

/// Runs the harness syntax command and parses its output into diagnostics.
/// Unmatched non-empty stderr lines become error diagnostics with the raw
/// line preserved.
pub fn run_syntax_check(sandbox: &Sandbox, harness: &HarnessSpec) -> Result<SyntaxReport, ValidationError> {
    let timeout = Duration::from_secs(harness.timeout_s);
    let exec = exec_in_sandbox(&harness.syntax_cmd, sandbox, timeout)?;

    let mut diagnostics = Vec::new();
    for line in exec.stdout.lines() {
        if let Some(d) = parse_diag_line(line) {
            diagnostics.push(d);
        }
    }
    for line in exec.stderr.lines() {
        if let Some(d) = parse_diag_line(line) {
            diagnostics.push(d);
        } else if !line.trim().is_empty() {
            diagnostics.push(Diagnostic {
                severity: Severity::Error,
                message: line.trim().to_string(),
                file: None,
                line: None,
                raw: line.to_string(),
            });
        }
    }
    let clean = exec.exit_code == 0
        && !exec.timed_out
        && diagnostics.iter().all(|d| d.severity != Severity::Error);
    Ok(SyntaxReport { clean, diagnostics, tool_exit: exec.exit_code })
}

fn excerpt(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= LOG_EXCERPT_CHARS {
        text.to_string()
    } else {
        chars[chars.len() - LOG_EXCERPT_CHARS..].iter().collect()
    }
}

fn count_word_lines(text: &str, word: &str) -> u32 {
    text.lines()
        .filter(|l| l.split(|c: char| !c.is_ascii_alphanumeric() && c != '_').any(|t| t == word))
        .count() as u32
}

/// Runs the functional test command under the harness wall-clock limit.
///
/// Result counts come from the last `PASS=<n> FAIL=<m>` summary, else from
/// per-test PASS/FAIL lines, else from the exit code alone.
pub fn run_tests(sandbox: &Sandbox, harness: &HarnessSpec) -> Result<TestReport, ValidationError> {
    let timeout = Duration::from_secs(harness.timeout_s);
    let exec = exec_in_sandbox(&harness.test_cmd, sandbox, timeout)?;
    let combined = format!("{}\n{}", exec.stdout, exec.stderr);

    static SUMMARY_RE: OnceLock<regex::Regex> = OnceLock::new();
    let summary = SUMMARY_RE
        .get_or_init(|| regex::Regex::new(r"PASS=(\d+)\s+FAIL=(\d+)").expect("static regex"));

    let (total, passed, failed) = if let Some(caps) = summary.captures_iter(&combined).last() {
        let p: u32 = caps[1].parse().unwrap_or(0);
        let f: u32 = caps[2].parse().unwrap_or(0);
        (p + f, p, f)
    } else {
        let p = count_word_lines(&combined, "PASS");
        let f = count_word_lines(&combined, "FAIL");
        if p + f > 0 {
            (p + f, p, f)
        } else if exec.exit_code == 0 && !exec.timed_out {
            (1, 1, 0)
        } else {
            (1, 0, 1)
        }
    };

    Ok(TestReport {
        total,
        passed,
        failed,
        timed_out: exec.timed_out,
        log_excerpt: excerpt(&combined),
    })
}

/// Maps the validation evidence onto the terminal P/FE/SE class. A timed-out
/// test run counts as a functional error.
pub fn classify(syntax: SyntaxReport, usage: PortUsageReport, tests: Option<TestReport>) -> Outcome {
    let class = if !syntax.clean {
        OutcomeClass::SE
    } else {
        match &tests {
            Some(t) if !t.timed_out && t.failed == 0 && t.passed == t.total => OutcomeClass::P,
            _ => OutcomeClass::FE,
        }
    };
    Outcome { class, syntax, usage, tests }
}

#[cfg(test)]
mod tests {
    use super::*;
    use indexmap::IndexMap;

    fn harness(syntax_cmd: &str, test_cmd: &str, timeout_s: u64) -> HarnessSpec {
        HarnessSpec {
            syntax_cmd: syntax_cmd.into(),
            test_cmd: test_cmd.into(),
            timeout_s,
            workdir_files: IndexMap::new(),
        }
    }

    fn sandbox(code: &str, h: &HarnessSpec) -> (tempfile::TempDir, Sandbox) {
        let root = tempfile::tempdir().unwrap();
        let sb = Sandbox::create(root.path(), "t", 1, code, h).unwrap();
        (root, sb)
    }

    #[test]
    fn command_splitting_respects_quotes() {
        assert_eq!(
            split_command("sh -c 'echo a b' {candidate}"),
            vec!["sh", "-c", "echo a b", "{candidate}"]
        );
    }

    #[test]
    fn clean_run_yields_clean_report() {
        let h = harness("sh -c 'test -f {candidate}'", "sh -c 'exit 0 # {candidate}'", 10);
        let (_g, sb) = sandbox("module m; endmodule", &h);
        let report = run_syntax_check(&sb, &h).unwrap();
        assert!(report.clean);
        assert!(report.diagnostics.is_empty());
    }

    #[test]
    fn stderr_diagnostic_parsed_with_location() {
        let h = harness(
            "sh -c 'echo \"{candidate}:3: syntax error\" >&2; exit 1'",
            "sh -c 'exit 0 # {candidate}'",
            10,
        );
        let (_g, sb) = sandbox("module m;", &h);
        let report = run_syntax_check(&sb, &h).unwrap();
        assert!(!report.clean);
        let d = &report.diagnostics[0];
        assert_eq!(d.severity, Severity::Error);
        assert_eq!(d.file.as_deref(), Some(CANDIDATE_FILE));
        assert_eq!(d.line, Some(3));
    }

    #[test]
    fn unmatched_stderr_becomes_error() {
        let h = harness("sh -c 'echo weird tool noise >&2; exit 0' # {candidate}", "x {candidate}", 10);
        let (_g, sb) = sandbox("module m; endmodule", &h);
        let report = run_syntax_check(&sb, &h).unwrap();
        assert!(!report.clean);
        assert_eq!(report.diagnostics[0].raw, "weird tool noise");
    }

    #[test]
    fn warning_keeps_clean_true() {
        let h = harness(
            "sh -c 'echo \"{candidate}:2: warning: wide literal\"; exit 0'",
            "x {candidate}",
            10,
        );
        let (_g, sb) = sandbox("module m; endmodule", &h);
        let report = run_syntax_check(&sb, &h).unwrap();
        assert!(report.clean);
        assert_eq!(report.warning_count(), 1);
    }

    #[test]
    fn missing_tool_detected() {
        let h = harness("definitely-not-a-real-binary {candidate}", "x {candidate}", 10);
        let (_g, sb) = sandbox("module m; endmodule", &h);
        assert!(matches!(
            run_syntax_check(&sb, &h),
            Err(ValidationError::ToolMissing(_))
        ));
    }

    #[test]
    fn summary_line_parsed() {
        let h = harness("true {candidate}", "sh -c 'echo PASS=4 FAIL=0' # {candidate}", 10);
        let (_g, sb) = sandbox("module m; endmodule", &h);
        let report = run_tests(&sb, &h).unwrap();
        assert_eq!((report.total, report.passed, report.failed), (4, 4, 0));
        assert!(!report.timed_out);
    }

    #[test]
    fn failing_summary_parsed() {
        let h = harness("true {candidate}", "sh -c 'echo PASS=3 FAIL=1; exit 1' # {candidate}", 10);
        let (_g, sb) = sandbox("module m; endmodule", &h);
        let report = run_tests(&sb, &h).unwrap();
        assert_eq!((report.total, report.passed, report.failed), (4, 3, 1));
    }

    #[test]
    fn per_test_lines_counted() {
        let h = harness(
            "true {candidate}",
            "sh -c 'echo test_a PASS; echo test_b FAIL; exit 1' # {candidate}",
            10,
        );
        let (_g, sb) = sandbox("module m; endmodule", &h);
        let report = run_tests(&sb, &h).unwrap();
        assert_eq!((report.total, report.passed, report.failed), (2, 1, 1));
    }

    #[test]
    fn bare_exit_codes_map_to_single_test() {
        let h = harness("true {candidate}", "sh -c 'exit 0' # {candidate}", 10);
        let (_g, sb) = sandbox("module m; endmodule", &h);
        let report = run_tests(&sb, &h).unwrap();
        assert_eq!((report.total, report.passed, report.failed), (1, 1, 0));

        let h2 = harness("true {candidate}", "sh -c 'exit 3' # {candidate}", 10);
        let (_g2, sb2) = sandbox("module m; endmodule", &h2);
        let report2 = run_tests(&sb2, &h2).unwrap();
        assert_eq!((report2.total, report2.passed, report2.failed), (1, 0, 1));
    }

    #[test]
    fn timeout_kills_process_tree() {
        let h = harness(
            "true {candidate}",
            "sh -c 'echo started; sleep 10; echo PASS=1 FAIL=0' # {candidate}",
            2,
        );
        let (_g, sb) = sandbox("module m; endmodule", &h);
        let started = Instant::now();
        let report = run_tests(&sb, &h).unwrap();
        assert!(report.timed_out);
        assert!(started.elapsed() < Duration::from_secs(7));
        assert!(read_log(&sb.dir.join("stdout.log")).contains("started"));
    }

    #[test]
    fn classify_covers_all_classes() {
        let clean = SyntaxReport { clean: true, diagnostics: vec![], tool_exit: 0 };
        let dirty = SyntaxReport {
            clean: false,
            diagnostics: vec![Diagnostic {
                severity: Severity::Error,
                message: "syntax error".into(),
                file: None,
                line: None,
                raw: "syntax error".into(),
            }],
            tool_exit: 1,
        };
        let usage = PortUsageReport::empty();
        let all_pass = TestReport { total: 4, passed: 4, failed: 0, timed_out: false, log_excerpt: String::new() };
        let some_fail = TestReport { total: 4, passed: 3, failed: 1, timed_out: false, log_excerpt: String::new() };
        let hung = TestReport { total: 1, passed: 0, failed: 0, timed_out: true, log_excerpt: String::new() };

        assert_eq!(classify(clean.clone(), usage.clone(), Some(all_pass)).class, OutcomeClass::P);
        assert_eq!(classify(clean.clone(), usage.clone(), Some(some_fail)).class, OutcomeClass::FE);
        assert_eq!(classify(clean.clone(), usage.clone(), Some(hung)).class, OutcomeClass::FE);
        assert_eq!(classify(clean, usage.clone(), None).class, OutcomeClass::FE);
        assert_eq!(classify(dirty, usage, None).class, OutcomeClass::SE);
    }

    #[test]
    fn sandbox_layout_contains_harness_files() {
        let mut h = harness("true {candidate}", "true {candidate}", 5);
        h.workdir_files.insert("tb.sv".into(), "// tb".into());
        let root = tempfile::tempdir().unwrap();
        let sb = Sandbox::create(root.path(), "task9", 3, "module m; endmodule", &h).unwrap();
        assert!(sb.dir.ends_with("task9/iter_3"));
        assert!(sb.candidate_path().exists());
        assert!(sb.dir.join("tb.sv").exists());
    }
}
