//! Structured prompt construction for small models: the five keyword
//! anchors, few-shot example selection, and token budgeting with
//! structure-preserving truncation.

use crate::dataset::{ContextBundle, DesignTask, TaskKind};
use crate::feedback::RefinementPrompt;
use crate::textutil::keyword_set;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The five anchor keywords, in their fixed prompt order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Anchor {
    Role,
    Task,
    Requirements,
    Constraints,
    Generate,
}

impl Anchor {
    pub const ALL: [Anchor; 5] = [
        Anchor::Role,
        Anchor::Task,
        Anchor::Requirements,
        Anchor::Constraints,
        Anchor::Generate,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Anchor::Role => "ROLE",
            Anchor::Task => "TASK",
            Anchor::Requirements => "REQUIREMENTS",
            Anchor::Constraints => "CONSTRAINTS",
            Anchor::Generate => "GENERATE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSection {
    pub anchor: Anchor,
    pub body: String,
}

/// Context-window budget split across task text, context files, and examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub total: u32,
    pub task_share: f64,
    pub context_share: f64,
    pub example_share: f64,
}

pub const BUDGET_MIN_TOTAL: u32 = 1024;
pub const BUDGET_MAX_TOTAL: u32 = 131072;

#[derive(Debug, Error, PartialEq)]
pub enum BudgetError {
    #[error("budget total {0} outside [{BUDGET_MIN_TOTAL}, {BUDGET_MAX_TOTAL}]")]
    TotalOutOfRange(u32),
    #[error("budget shares must sum to 1.0, got {0}")]
    SharesDoNotSumToOne(f64),
    #[error("budget shares must be non-negative")]
    NegativeShare,
}

impl TokenBudget {
    pub fn new(total: u32, task_share: f64, context_share: f64, example_share: f64) -> Result<Self, BudgetError> {
        if !(BUDGET_MIN_TOTAL..=BUDGET_MAX_TOTAL).contains(&total) {
            return Err(BudgetError::TotalOutOfRange(total));
        }
        if task_share < 0.0 || context_share < 0.0 || example_share < 0.0 {
            return Err(BudgetError::NegativeShare);
        }
        let sum = task_share + context_share + example_share;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(BudgetError::SharesDoNotSumToOne(sum));
        }
        Ok(TokenBudget { total, task_share, context_share, example_share })
    }

    /// The 40/40/20 default at the given window size.
    pub fn with_total(total: u32) -> Result<Self, BudgetError> {
        TokenBudget::new(total, 0.40, 0.40, 0.20)
    }
}

impl Default for TokenBudget {
    fn default() -> Self {
        TokenBudget::with_total(8192).expect("default budget is valid")
    }
}

/// Model-agnostic token estimate: ceil(chars / 4). Deliberately independent
/// of any backend tokenizer so the engine works unchanged across models;
/// swap here if a real tokenizer is ever wired in.
pub fn estimate_tokens(text: &str) -> u32 {
    (text.chars().count() as u32).div_ceil(4)
}

/// Splits the budget: each share floors, leftovers go to the context slot.
pub fn allocate_budget(budget: &TokenBudget) -> (u32, u32, u32) {
    let total = budget.total as f64;
    let task = (total * budget.task_share).floor() as u32;
    let context = (total * budget.context_share).floor() as u32;
    let example = (total * budget.example_share).floor() as u32;
    let leftover = budget.total - (task + context + example);
    (task, context + leftover, example)
}

/// One few-shot snippet from the example library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSnippet {
    pub name: String,
    pub tags: Vec<String>,
    pub code: String,
    pub description: String,
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("snippet {0:?}: missing front-matter line {1:?}")]
    MissingHeader(String, &'static str),
    #[error("snippet {0:?}: tags must be non-empty")]
    EmptyTags(String),
    #[error("snippet {0:?}: code does not contain a Verilog module")]
    NotAModule(String),
    #[error("cannot read example library: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct ExampleLibrary {
    pub snippets: Vec<ExampleSnippet>,
}

impl ExampleLibrary {
    /// The built-in counter / FIFO / FSM archetypes.
    pub fn builtin() -> ExampleLibrary {
        let mut lib = ExampleLibrary::default();
        for src in [
            include_str!("../assets/examples/counter.v"),
            include_str!("../assets/examples/fifo.v"),
            include_str!("../assets/examples/fsm.v"),
        ] {
            lib.snippets.push(parse_snippet("builtin", src).expect("built-in snippets are valid"));
        }
        lib
    }

    /// Appends snippets from a directory: one file per snippet, front-matter
    /// header lines `name:`, `tags:` (comma-separated), `description:`,
    /// then the code. Files are visited in name order.
    pub fn load_dir(&mut self, dir: &std::path::Path) -> Result<(), LibraryError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let label = path.display().to_string();
            self.snippets.push(parse_snippet(&label, &text)?);
        }
        Ok(())
    }
}

fn parse_snippet(label: &str, text: &str) -> Result<ExampleSnippet, LibraryError> {
    let mut name = None;
    let mut tags: Option<Vec<String>> = None;
    let mut description = None;
    let mut code_start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(v) = trimmed.strip_prefix("name:") {
            name = Some(v.trim().to_string());
        } else if let Some(v) = trimmed.strip_prefix("tags:") {
            tags = Some(
                v.split(',')
                    .map(|t| t.trim().to_ascii_lowercase())
                    .filter(|t| !t.is_empty())
                    .collect(),
            );
        } else if let Some(v) = trimmed.strip_prefix("description:") {
            description = Some(v.trim().to_string());
        } else if !trimmed.is_empty() {
            break;
        }
        code_start += line.len();
    }
    let name = name.ok_or(LibraryError::MissingHeader(label.into(), "name:"))?;
    let tags = tags.ok_or(LibraryError::MissingHeader(label.into(), "tags:"))?;
    let description = description.ok_or(LibraryError::MissingHeader(label.into(), "description:"))?;
    if tags.is_empty() {
        return Err(LibraryError::EmptyTags(name));
    }
    let code = text[code_start..].trim_matches('\n').to_string();
    if crate::rtl::extract_code(&code, TaskKind::Generation).is_err() {
        return Err(LibraryError::NotAModule(name));
    }
    Ok(ExampleSnippet { name, tags, code, description })
}

/// Ranks library snippets by tag overlap with the spec keywords and packs
/// them greedily until the token budget stops the scan. Zero-overlap
/// snippets never make it in.
pub fn select_examples<'a>(
    task: &DesignTask,
    library: &'a ExampleLibrary,
    example_tokens: u32,
) -> Vec<&'a ExampleSnippet> {
    let spec_keys = keyword_set(&task.spec_text);
    let mut ranked: Vec<(usize, usize, &ExampleSnippet)> = library
        .snippets
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let overlap = s.tags.iter().filter(|t| spec_keys.contains(t.as_str())).count();
            (overlap, idx, s)
        })
        .filter(|(overlap, _, _)| *overlap > 0)
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut out = Vec::new();
    let mut used = 0u32;
    for (_, _, snippet) in ranked {
        let cost = estimate_tokens(&format!("{}{}", snippet.code, snippet.description));
        if used + cost > example_tokens {
            break;
        }
        used += cost;
        out.push(snippet);
    }
    out
}

pub const ELISION_MARKER: &str = "// …[elided]…";

const PROTECTED_WORDS: &[&str] = &["module", "endmodule", "input", "output", "parameter"];

fn is_protected(line: &str) -> bool {
    PROTECTED_WORDS.iter().any(|w| {
        let ident = |b: u8| b.is_ascii_alphanumeric() || b == b'_' || b == b'$';
        let bytes = line.as_bytes();
        let mut start = 0;
        while let Some(rel) = line[start..].find(w) {
            let at = start + rel;
            let end = at + w.len();
            let before_ok = at == 0 || !ident(bytes[at - 1]);
            let after_ok = end >= bytes.len() || !ident(bytes[end]);
            if before_ok && after_ok {
                return true;
            }
            start = at + w.len();
        }
        false
    })
}

fn strip_blank_lines(text: &str) -> String {
    text.lines().filter(|l| !l.trim().is_empty()).collect::<Vec<_>>().join("\n")
}

/// Assembles kept lines, inserting one elision marker per dropped gap.
fn assemble(lines: &[&str], keep: &[bool]) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut in_gap = false;
    for (i, line) in lines.iter().enumerate() {
        if keep[i] {
            out.push(line);
            in_gap = false;
        } else if !in_gap {
            out.push(ELISION_MARKER);
            in_gap = true;
        }
    }
    out.join("\n")
}

/// Middle-out elision: keep `budget_lines` head/tail lines (60% head, 40%
/// tail) plus every line in `always_keep`, and test the result against the
/// token budget.
fn try_elide(lines: &[&str], always_keep: &[bool], budget_lines: usize, max_tokens: u32) -> Option<String> {
    let head = budget_lines * 6 / 10;
    let tail = budget_lines - head;
    let n = lines.len();
    let keep: Vec<bool> = (0..n)
        .map(|i| always_keep[i] || i < head || i >= n.saturating_sub(tail))
        .collect();
    let text = assemble(lines, &keep);
    (estimate_tokens(&text) <= max_tokens).then_some(text)
}

/// Shrinks `text` until its token estimate fits, preferring (1) comment
/// stripping, (2) blank-line removal, (3) middle-out elision that protects
/// `module`/`endmodule`/`input`/`output`/`parameter` lines. Protected lines
/// are sacrificed only when the budget cannot otherwise be met; the final
/// fallback is a hard character cut.
pub fn truncate_structure_preserving(text: &str, max_tokens: u32) -> String {
    if estimate_tokens(text) <= max_tokens {
        return text.to_string();
    }
    let stripped = crate::rtl::strip_comments_and_strings(text);
    if estimate_tokens(&stripped) <= max_tokens {
        return stripped;
    }
    let compact = strip_blank_lines(&stripped);
    if estimate_tokens(&compact) <= max_tokens {
        return compact;
    }

    let lines: Vec<&str> = compact.lines().collect();
    let protected: Vec<bool> = lines.iter().map(|l| is_protected(l)).collect();
    for budget_lines in (0..=lines.len()).rev() {
        if let Some(out) = try_elide(&lines, &protected, budget_lines, max_tokens) {
            return out;
        }
    }
    // Budget cannot be met while honoring protection; retry without it.
    let none = vec![false; lines.len()];
    for budget_lines in (0..=lines.len()).rev() {
        if let Some(out) = try_elide(&lines, &none, budget_lines, max_tokens) {
            return out;
        }
    }
    // Even a lone marker does not fit: hard cut.
    compact.chars().take(max_tokens as usize * 4).collect()
}

/// The assembled SLM-facing prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub sections: Vec<PromptSection>,
    pub examples_included: Vec<String>,
    pub token_estimate: u32,
}

impl StructuredPrompt {
    /// Serializes sections in anchor order. Body lines are indented two
    /// spaces so the anchors are the only line-start keywords.
    pub fn serialized_text(&self) -> String {
        let mut out = String::new();
        for section in &self.sections {
            out.push_str(section.anchor.keyword());
            out.push(':');
            out.push('\n');
            for line in section.body.lines() {
                out.push_str("  ");
                out.push_str(line);
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    Initial,
    Refinement,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt skeleton exceeds the token budget even with empty context")]
    BudgetInfeasible,
}

const ROLE_BODY: &str = "You are a senior digital design engineer producing synthesizable Verilog RTL that passes lint and functional verification on the first try.";

fn constraints_body(task: &DesignTask) -> String {
    let mut body = String::from(
        "- Use synthesizable constructs only; no delays, no initial-block testbench logic.\n\
         - Declare every port with an explicit direction and drive every output.\n\
         - Read every declared input; remove ports you do not need.\n\
         - Keep exactly one module unless helper modules are strictly required.\n\
         - Output exactly one fenced Verilog code block and nothing else.",
    );
    body.push_str(&format!(
        "\n- The code is checked with `{}` and tested via `{}` (time limit {} s).",
        task.harness.syntax_cmd, task.harness.test_cmd, task.harness.timeout_s
    ));
    body
}

fn generate_body(task: &DesignTask) -> String {
    match (&task.kind, &task.expected_schema) {
        (TaskKind::Comprehension, Some(schema)) => format!(
            "Produce the content of {schema} now. Emit only that file's content."
        ),
        (TaskKind::Comprehension, None) => {
            "Answer the question concisely now. No preamble.".to_string()
        }
        _ => "Emit the complete Verilog implementation now, as exactly one fenced code block.".to_string(),
    }
}

fn render_context(retrieved: &[crate::dataset::RetrievedFile], budget: u32) -> String {
    if retrieved.is_empty() || budget == 0 {
        return String::new();
    }
    let mut full = String::from("Context files:\n");
    for file in retrieved {
        full.push_str(&format!("--- {} (relevance {:.2}) ---\n{}\n", file.name, file.relevance, file.text));
    }
    truncate_structure_preserving(&full, budget)
}

fn render_examples(examples: &[&ExampleSnippet]) -> String {
    let mut out = String::new();
    for snippet in examples {
        out.push_str(&format!(
            "Reference example `{}` ({}):\n{}\n",
            snippet.name, snippet.description, snippet.code
        ));
    }
    out
}

fn requirements_body(bundle: &ContextBundle, mode: PromptMode, feedback: Option<&RefinementPrompt>, examples_text: &str) -> String {
    let mut body = String::new();
    for line in &bundle.plan.behavioral_intent {
        body.push_str(&format!("- [intent] {line}\n"));
    }
    for line in &bundle.plan.interface_semantics {
        body.push_str(&format!("- [interface] {line}\n"));
    }
    for line in &bundle.plan.corner_cases {
        body.push_str(&format!("- [corner] {line}\n"));
    }
    if mode == PromptMode::Refinement {
        if let Some(fb) = feedback {
            body.push_str("Fix the following issues in the previous attempt:\n");
            body.push_str(&fb.body);
            if !body.ends_with('\n') {
                body.push('\n');
            }
        }
    }
    if !examples_text.is_empty() {
        body.push_str(examples_text);
    }
    if body.is_empty() {
        body.push_str("- Implement the task exactly as described.");
    }
    body
}

/// Builds the five-section prompt under the token budget.
///
/// Over-budget prompts are repaired by re-truncating, in order, the context
/// body, then the example list, then the task body. The plan/feedback
/// skeleton is never shrunk; if it alone exceeds the budget the prompt is
/// infeasible.
pub fn render_prompt(
    task: &DesignTask,
    bundle: &ContextBundle,
    budget: &TokenBudget,
    library: &ExampleLibrary,
    mode: PromptMode,
    feedback: Option<&RefinementPrompt>,
) -> Result<StructuredPrompt, PromptError> {
    debug_assert_eq!(bundle.task_id, task.id);
    let (task_tokens, context_tokens, example_tokens) = allocate_budget(budget);

    let mut task_allowance = task_tokens;
    let mut context_allowance = context_tokens;
    let mut examples = select_examples(task, library, example_tokens);

    loop {
        let task_body = truncate_structure_preserving(&task.spec_text, task_allowance);
        let context_body = render_context(&bundle.retrieved, context_allowance);
        let examples_text = render_examples(&examples);

        let mut task_section = task_body;
        if !context_body.is_empty() {
            task_section.push_str("\n\n");
            task_section.push_str(&context_body);
        }

        let sections = vec![
            PromptSection { anchor: Anchor::Role, body: ROLE_BODY.to_string() },
            PromptSection { anchor: Anchor::Task, body: task_section },
            PromptSection {
                anchor: Anchor::Requirements,
                body: requirements_body(bundle, mode, feedback, &examples_text),
            },
            PromptSection { anchor: Anchor::Constraints, body: constraints_body(task) },
            PromptSection { anchor: Anchor::Generate, body: generate_body(task) },
        ];
        let prompt = StructuredPrompt {
            examples_included: examples.iter().map(|s| s.name.clone()).collect(),
            token_estimate: 0,
            sections,
        };
        let estimate = estimate_tokens(&prompt.serialized_text());
        if estimate <= budget.total {
            return Ok(StructuredPrompt { token_estimate: estimate, ..prompt });
        }

        let overage = estimate - budget.total;
        if context_allowance > 0 {
            context_allowance = context_allowance.saturating_sub(overage.max(1));
        } else if !examples.is_empty() {
            examples.pop();
        } else if task_allowance > 0 {
            task_allowance = task_allowance.saturating_sub(overage.max(1));
        } else {
            return Err(PromptError::BudgetInfeasible);
        }
    }
}
