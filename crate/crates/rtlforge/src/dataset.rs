//! Problem-set ingestion and context preparation: loads JSON-lines problem
//! files, retrieves the most relevant context files for a task, and
//! decomposes the spec text into a plan outline.

use crate::rtl::strip_comments_and_strings;
use crate::textutil::{contains_word_ci, keyword_set, split_sentences};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Generation,
    Comprehension,
}

/// Commands and files needed to validate one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessSpec {
    pub syntax_cmd: String,
    pub test_cmd: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default, rename = "files")]
    pub workdir_files: IndexMap<String, String>,
}

fn default_timeout_s() -> u64 {
    300
}

/// One benchmark problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignTask {
    pub id: String,
    pub kind: TaskKind,
    pub category: String,
    #[serde(rename = "spec")]
    pub spec_text: String,
    #[serde(default, rename = "context")]
    pub context_files: IndexMap<String, String>,
    pub harness: HarnessSpec,
    #[serde(default)]
    pub expected_schema: Option<String>,
}

/// A context file selected for prompting, with its retrieval score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedFile {
    pub name: String,
    pub text: String,
    pub relevance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanOutline {
    pub behavioral_intent: Vec<String>,
    pub interface_semantics: Vec<String>,
    pub corner_cases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub task_id: String,
    pub retrieved: Vec<RetrievedFile>,
    pub plan: PlanOutline,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate task id {0:?}")]
    DuplicateId(String),
    #[error("cannot read problem set: {0}")]
    Io(#[from] std::io::Error),
}

fn count_placeholder(template: &str) -> usize {
    template.matches("{candidate}").count()
}

fn validate_task(task: &DesignTask, line: usize) -> Result<(), DatasetError> {
    let fail = |reason: String| DatasetError::MalformedRecord { line, reason };
    if task.id.is_empty() {
        return Err(fail("id must be non-empty".into()));
    }
    if task.spec_text.is_empty() {
        return Err(fail("spec must be non-empty".into()));
    }
    if task.harness.timeout_s == 0 {
        return Err(fail("harness.timeout_s must be positive".into()));
    }
    for (field, cmd) in [
        ("syntax_cmd", &task.harness.syntax_cmd),
        ("test_cmd", &task.harness.test_cmd),
    ] {
        if count_placeholder(cmd) != 1 {
            return Err(fail(format!(
                "harness.{field} must contain the {{candidate}} placeholder exactly once"
            )));
        }
    }
    Ok(())
}

/// Loads a JSON-lines problem set, one task per line, preserving file order.
/// Blank lines are skipped.
pub fn load_problem_set(path: &Path) -> Result<Vec<DesignTask>, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    parse_problem_set(&text)
}

/// Parses problem-set text; split out so tests and the FFI layer can feed
/// in-memory buffers.
pub fn parse_problem_set(text: &str) -> Result<Vec<DesignTask>, DatasetError> {
    let mut tasks: Vec<DesignTask> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let task: DesignTask =
            serde_json::from_str(line).map_err(|e| DatasetError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        validate_task(&task, line_no)?;
        if tasks.iter().any(|t| t.id == task.id) {
            return Err(DatasetError::DuplicateId(task.id));
        }
        tasks.push(task);
    }
    Ok(tasks)
}

/// Module names declared in a context file (comment-stripped).
fn declared_modules(text: &str) -> Vec<String> {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        regex::Regex::new(r"\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)").expect("static regex")
    });
    let stripped = strip_comments_and_strings(text);
    re.captures_iter(&stripped).map(|c| c[1].to_string()).collect()
}

/// Scores and ranks the task's context files.
///
/// Relevance is the fraction of spec keywords shared with the file. Files
/// declaring a Verilog module whose name appears in the spec get the score
/// boosted by 0.5 (clamped to 1.0) — the structural half of retrieval.
/// Ordering is by descending relevance, ties by original file order. The
/// returned bundle has an empty plan; pair with [`build_plan`].
pub fn retrieve_context(task: &DesignTask, max_files: usize) -> ContextBundle {
    let spec_keys = keyword_set(&task.spec_text);
    let mut scored: Vec<(usize, RetrievedFile)> = Vec::new();
    for (idx, (name, text)) in task.context_files.iter().enumerate() {
        let file_keys = keyword_set(text);
        let shared = spec_keys.intersection(&file_keys).count();
        let mut relevance = if spec_keys.is_empty() {
            0.0
        } else {
            shared as f64 / spec_keys.len() as f64
        };
        if declared_modules(text)
            .iter()
            .any(|m| contains_word_ci(&task.spec_text, m))
        {
            relevance = (relevance + 0.5).min(1.0);
        }
        scored.push((
            idx,
            RetrievedFile {
                name: name.clone(),
                text: text.clone(),
                relevance,
            },
        ));
    }
    scored.sort_by(|(ia, a), (ib, b)| {
        b.relevance
            .partial_cmp(&a.relevance)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ia.cmp(ib))
    });
    ContextBundle {
        task_id: task.id.clone(),
        retrieved: scored.into_iter().map(|(_, f)| f).take(max_files).collect(),
        plan: PlanOutline::default(),
    }
}

const INTERFACE_VOCAB: &[&str] = &["input", "output", "port", "signal", "clock", "reset"];
const CORNER_VOCAB: &[&str] = &["if", "when", "overflow", "underflow", "edge", "corner", "invalid"];

/// Routes every sentence of the spec into exactly one plan list.
///
/// Sentences with interface vocabulary go to interface semantics, then
/// sentences with conditional/boundary vocabulary to corner cases, and the
/// rest to behavioral intent. Interface wins when both match.
pub fn build_plan(task: &DesignTask) -> PlanOutline {
    let mut plan = PlanOutline::default();
    for sentence in split_sentences(&task.spec_text) {
        if INTERFACE_VOCAB.iter().any(|w| contains_word_ci(&sentence, w)) {
            plan.interface_semantics.push(sentence);
        } else if CORNER_VOCAB.iter().any(|w| contains_word_ci(&sentence, w)) {
            plan.corner_cases.push(sentence);
        } else {
            plan.behavioral_intent.push(sentence);
        }
    }
    plan
}
