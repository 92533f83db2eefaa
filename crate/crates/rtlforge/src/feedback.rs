//! Adaptive feedback: maps validator and simulator messages onto the seven
//! error categories, computes the composite quality score, decides rollback,
//! and synthesizes the refinement prompt with damage-repair history.

use crate::rtl::CodeStructureReport;
use crate::validation::{Diagnostic, Outcome, OutcomeClass};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    Syntax,
    Undeclared,
    Type,
    Width,
    Latch,
    Timing,
    Novel,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 7] = [
        ErrorCategory::Syntax,
        ErrorCategory::Undeclared,
        ErrorCategory::Type,
        ErrorCategory::Width,
        ErrorCategory::Latch,
        ErrorCategory::Timing,
        ErrorCategory::Novel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::Syntax => "Syntax",
            ErrorCategory::Undeclared => "Undeclared",
            ErrorCategory::Type => "Type",
            ErrorCategory::Width => "Width",
            ErrorCategory::Latch => "Latch",
            ErrorCategory::Timing => "Timing",
            ErrorCategory::Novel => "Novel",
        }
    }
}

/// One rule of the ordered category table: category plus case-insensitive
/// substring patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRule {
    pub category: ErrorCategory,
    pub patterns: Vec<String>,
}

/// First-match categorizer over an ordered rule table. The default table
/// follows the category listing order; users may prepend or replace rules
/// through configuration.
#[derive(Debug, Clone)]
pub struct Categorizer {
    rules: Vec<CategoryRule>,
}

impl Default for Categorizer {
    fn default() -> Self {
        Categorizer { rules: default_rules() }
    }
}

pub fn default_rules() -> Vec<CategoryRule> {
    let rule = |category, patterns: &[&str]| CategoryRule {
        category,
        patterns: patterns.iter().map(|p| p.to_string()).collect(),
    };
    vec![
        rule(ErrorCategory::Syntax, &["syntax error", "unexpected", "parse error"]),
        rule(ErrorCategory::Undeclared, &["not declared", "undeclared", "undefined identifier"]),
        rule(ErrorCategory::Type, &["type mismatch", "incompatible type", "cannot assign"]),
        rule(ErrorCategory::Width, &["width", "bit range", "truncat"]),
        rule(ErrorCategory::Latch, &["latch"]),
        rule(ErrorCategory::Timing, &["setup", "hold", "timing", "race"]),
    ]
}

impl Categorizer {
    pub fn with_rules(rules: Vec<CategoryRule>) -> Self {
        Categorizer { rules }
    }

    pub fn rules(&self) -> &[CategoryRule] {
        &self.rules
    }

    fn category_of(&self, message: &str) -> ErrorCategory {
        let lowered = message.to_ascii_lowercase();
        for rule in &self.rules {
            if rule.patterns.iter().any(|p| lowered.contains(&p.to_ascii_lowercase())) {
                return rule.category;
            }
        }
        ErrorCategory::Novel
    }

    /// Categorizes a raw message with optional source location.
    pub fn categorize_error(&self, message: &str, file: Option<&str>, line: Option<u32>) -> CategorizedError {
        let category = self.category_of(message);
        let summary: String = message.trim().chars().take(200).collect();
        let signature = format!("{}:{}", category.name(), canonicalize(&summary));
        CategorizedError {
            category,
            summary,
            file: file.map(str::to_string),
            line,
            raw: message.to_string(),
            signature,
        }
    }

    pub fn categorize_diagnostic(&self, diag: &Diagnostic) -> CategorizedError {
        self.categorize_error(&diag.message, diag.file.as_deref(), diag.line)
    }

    /// Lines of a test log that look like failures, categorized.
    pub fn categorize_test_log(&self, log: &str, max_lines: usize) -> Vec<CategorizedError> {
        log.lines()
            .filter(|l| {
                let lower = l.to_ascii_lowercase();
                let word_fail = l
                    .split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
                    .any(|t| t == "FAIL" || t == "FAILED");
                word_fail || lower.contains("error") || lower.contains("assert")
            })
            .take(max_lines)
            .map(|l| self.categorize_error(l.trim(), None, None))
            .collect()
    }
}

/// Canonical signature text: lowercased, quoted identifiers replaced by a
/// placeholder, digit runs collapsed. Two diagnostics differing only in
/// identifier names or line numbers share a signature.
fn canonicalize(summary: &str) -> String {
    static ID_RE: OnceLock<regex::Regex> = OnceLock::new();
    static NUM_RE: OnceLock<regex::Regex> = OnceLock::new();
    let id_re = ID_RE.get_or_init(|| {
        regex::Regex::new(r#"['"`][A-Za-z_][A-Za-z0-9_$]*['"`]"#).expect("static regex")
    });
    let num_re = NUM_RE.get_or_init(|| regex::Regex::new(r"\d+").expect("static regex"));
    let lowered = summary.to_ascii_lowercase();
    let ids = id_re.replace_all(&lowered, "'<id>'");
    num_re.replace_all(&ids, "<n>").into_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizedError {
    pub category: ErrorCategory,
    /// Human summary, capped at 200 chars.
    pub summary: String,
    pub file: Option<String>,
    pub line: Option<u32>,
    /// The diagnostic or test log line this came from.
    pub raw: String,
    /// Dedup key: category + canonicalized summary.
    pub signature: String,
}

pub const WEIGHT_FUNCTIONAL: f64 = 0.6;
pub const WEIGHT_COMPILE: f64 = 0.2;
pub const WEIGHT_PORT_COMPLETENESS: f64 = 0.1;
pub const WEIGHT_STRUCTURE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub functional: f64,
    pub compile: f64,
    pub port_completeness: f64,
    pub structure: f64,
    pub composite: f64,
}

impl QualityScore {
    pub fn from_components(functional: f64, compile: f64, port_completeness: f64, structure: f64) -> QualityScore {
        QualityScore {
            functional,
            compile,
            port_completeness,
            structure,
            composite: WEIGHT_FUNCTIONAL * functional
                + WEIGHT_COMPILE * compile
                + WEIGHT_PORT_COMPLETENESS * port_completeness
                + WEIGHT_STRUCTURE * structure,
        }
    }

    pub fn zero() -> QualityScore {
        QualityScore::from_components(0.0, 0.0, 0.0, 0.0)
    }
}

/// Composite quality of one candidate: functional correctness 60%,
/// compilation quality 20%, port completeness 10%, code structure 10%.
/// Compilation grades 1.0 for a clean run, 0.5 for clean-with-warnings,
/// 0.0 otherwise.
pub fn compute_quality_score(outcome: &Outcome, structure: &CodeStructureReport) -> QualityScore {
    let functional = match &outcome.tests {
        Some(t) if t.total > 0 => f64::from(t.passed) / f64::from(t.total),
        Some(t) => {
            if t.failed == 0 && !t.timed_out {
                1.0
            } else {
                0.0
            }
        }
        None => 0.0,
    };
    let compile = if outcome.syntax.clean {
        if outcome.syntax.warning_count() == 0 {
            1.0
        } else {
            0.5
        }
    } else {
        0.0
    };
    QualityScore::from_components(functional, compile, outcome.usage.usage_fraction, structure.fraction)
}

/// Strictly-lower composite triggers rollback; ties keep the new candidate.
pub fn should_rollback(new: &QualityScore, best: &QualityScore) -> bool {
    new.composite < best.composite
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptEntry {
    pub iteration: u32,
    pub signatures: BTreeSet<String>,
    pub fix_summary: String,
    pub score: QualityScore,
}

/// Damage-repair history: per-iteration error signatures and what the fix
/// attempt claimed to address.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttemptHistory {
    entries: Vec<AttemptEntry>,
    cap: usize,
}

impl AttemptHistory {
    pub fn with_cap(cap: usize) -> AttemptHistory {
        AttemptHistory { entries: Vec::new(), cap }
    }

    pub fn push(&mut self, entry: AttemptEntry) {
        if self.cap > 0 && self.entries.len() >= self.cap {
            return;
        }
        debug_assert!(self.entries.last().map_or(true, |e| e.iteration < entry.iteration));
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[AttemptEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementPrompt {
    pub body: String,
    pub categories_addressed: BTreeSet<ErrorCategory>,
    pub avoid_list: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum FeedbackError {
    #[error("nothing to report: no errors and tests passed")]
    NothingToReport,
}

const MAX_LISTED_ERRORS: usize = 5;

/// Builds the refinement feedback body: at most five deduplicated errors
/// grouped by category, zombie-port findings, and the avoid-list drawn from
/// history entries whose signatures overlap the current errors.
pub fn gather_error_context(
    outcome: &Outcome,
    errors: &[CategorizedError],
    history: &AttemptHistory,
) -> Result<RefinementPrompt, FeedbackError> {
    let mut seen = BTreeSet::new();
    let deduped: Vec<&CategorizedError> = errors
        .iter()
        .filter(|e| seen.insert(e.signature.clone()))
        .collect();

    let zombie_findings = outcome.usage.findings();
    let tests_passed = outcome.class == OutcomeClass::P;
    if deduped.is_empty() && zombie_findings.is_empty() && tests_passed {
        return Err(FeedbackError::NothingToReport);
    }

    let mut body = String::new();
    let mut listed = 0usize;
    let mut categories_addressed = BTreeSet::new();
    for category in ErrorCategory::ALL {
        let in_category: Vec<&&CategorizedError> =
            deduped.iter().filter(|e| e.category == category).collect();
        if in_category.is_empty() {
            continue;
        }
        categories_addressed.insert(category);
        for err in in_category {
            if listed >= MAX_LISTED_ERRORS {
                continue;
            }
            let location = match (&err.file, err.line) {
                (Some(f), Some(l)) => format!(" at {f}:{l}"),
                (Some(f), None) => format!(" at {f}"),
                _ => String::new(),
            };
            body.push_str(&format!("- [{}]{} {}\n", category.name(), location, err.summary));
            listed += 1;
        }
    }
    if deduped.len() > MAX_LISTED_ERRORS {
        body.push_str(&format!("  …plus {} more\n", deduped.len() - MAX_LISTED_ERRORS));
    }
    for finding in &zombie_findings {
        body.push_str(&format!("- {finding}\n"));
    }
    if body.is_empty() {
        if let Some(tests) = &outcome.tests {
            body.push_str(&format!(
                "- functional tests failed: {} of {} passed{}\n",
                tests.passed,
                tests.total,
                if tests.timed_out { " (timed out)" } else { "" }
            ));
        } else {
            body.push_str("- the previous candidate could not be validated\n");
        }
    }

    let current_signatures: BTreeSet<&str> = deduped.iter().map(|e| e.signature.as_str()).collect();
    let mut avoid_list = Vec::new();
    for entry in history.entries() {
        if entry.fix_summary.is_empty() {
            continue;
        }
        let overlaps = entry.signatures.iter().any(|s| current_signatures.contains(s.as_str()));
        if overlaps && !avoid_list.contains(&entry.fix_summary) {
            avoid_list.push(entry.fix_summary.clone());
        }
    }
    for attempted in &avoid_list {
        body.push_str(&format!("Previously attempted and failed: {attempted}\n"));
    }

    Ok(RefinementPrompt { body, categories_addressed, avoid_list })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtl::{score_structure, PortUsageReport};
    use crate::validation::{Severity, SyntaxReport, TestReport};

    fn cat(msg: &str) -> ErrorCategory {
        Categorizer::default().categorize_error(msg, None, None).category
    }

    #[test]
    fn rule_table_first_match() {
        assert_eq!(cat("syntax error near 'endmodule'"), ErrorCategory::Syntax);
        assert_eq!(cat("identifier 'foo' is not declared"), ErrorCategory::Undeclared);
        assert_eq!(cat("type mismatch in assignment"), ErrorCategory::Type);
        assert_eq!(cat("port width 8 does not match 4"), ErrorCategory::Width);
        assert_eq!(cat("inferring latch for signal q"), ErrorCategory::Latch);
        assert_eq!(cat("hold check violated"), ErrorCategory::Timing);
        assert_eq!(cat("cosmic ray detected"), ErrorCategory::Novel);
    }

    #[test]
    fn listing_order_decides_overlaps() {
        // "unexpected" (Syntax) wins over "width" (Width).
        assert_eq!(cat("unexpected width token"), ErrorCategory::Syntax);
    }

    #[test]
    fn signatures_canonicalize_identifiers_and_numbers() {
        let c = Categorizer::default();
        let a = c.categorize_error("signal 'foo' is not declared at line 12", None, Some(12));
        let b = c.categorize_error("signal 'bar_2' is not declared at line 99", None, Some(99));
        assert_eq!(a.signature, b.signature);
        assert_ne!(a.summary, b.summary);
    }

    #[test]
    fn summary_capped_at_200_chars() {
        let c = Categorizer::default();
        let long = "x".repeat(500);
        assert_eq!(c.categorize_error(&long, None, None).summary.chars().count(), 200);
    }

    fn outcome(functional: (u32, u32), clean: bool, warnings: usize, usage_fraction: f64) -> Outcome {
        let mut diagnostics = Vec::new();
        for i in 0..warnings {
            diagnostics.push(Diagnostic {
                severity: Severity::Warning,
                message: format!("warn {i}"),
                file: None,
                line: None,
                raw: format!("warn {i}"),
            });
        }
        if !clean {
            diagnostics.push(Diagnostic {
                severity: Severity::Error,
                message: "syntax error".into(),
                file: None,
                line: None,
                raw: "syntax error".into(),
            });
        }
        let syntax = SyntaxReport { clean, diagnostics, tool_exit: i32::from(!clean) };
        let tests = (functional.1 > 0).then(|| TestReport {
            total: functional.1,
            passed: functional.0,
            failed: functional.1 - functional.0,
            timed_out: false,
            log_excerpt: String::new(),
        });
        let mut usage = PortUsageReport::empty();
        usage.usage_fraction = usage_fraction;
        crate::validation::classify(syntax, usage, tests)
    }

    #[test]
    fn perfect_candidate_scores_one() {
        let o = outcome((4, 4), true, 0, 1.0);
        let s = score_structure("module m(input a, output b); assign b = a; endmodule", None);
        let q = compute_quality_score(&o, &s);
        assert!((q.composite - 1.0).abs() < 1e-9);
    }

    #[test]
    fn syntax_error_composite_is_0_175() {
        // functional 0, compile 0, ports 1.0, structure 0.75.
        let o = outcome((0, 0), false, 0, 1.0);
        let structure = CodeStructureReport {
            has_module_pair: true,
            balanced_begin_end: true,
            no_placeholders: true,
            name_matches_request: false,
            fraction: 0.75,
        };
        let q = compute_quality_score(&o, &structure);
        assert!((q.composite - 0.175).abs() < 1e-9);
    }

    #[test]
    fn partial_pass_composite_is_0_85() {
        // functional 3/4, compile 1.0, ports 1.0, structure 1.0.
        let o = outcome((3, 4), true, 0, 1.0);
        let structure = CodeStructureReport {
            has_module_pair: true,
            balanced_begin_end: true,
            no_placeholders: true,
            name_matches_request: true,
            fraction: 1.0,
        };
        let q = compute_quality_score(&o, &structure);
        assert!((q.composite - 0.85).abs() < 1e-9);
    }

    #[test]
    fn warnings_halve_compile_component() {
        let o = outcome((4, 4), true, 2, 1.0);
        let s = CodeStructureReport {
            has_module_pair: true,
            balanced_begin_end: true,
            no_placeholders: true,
            name_matches_request: true,
            fraction: 1.0,
        };
        let q = compute_quality_score(&o, &s);
        assert!((q.compile - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rollback_is_strict_comparison() {
        let hi = QualityScore::from_components(1.0, 1.0, 0.5, 0.5);
        let lo = QualityScore::from_components(0.5, 0.5, 0.5, 0.5);
        assert!(should_rollback(&lo, &hi));
        assert!(!should_rollback(&hi, &hi));
        assert!(!should_rollback(&hi, &lo));
    }

    fn err(c: &Categorizer, msg: &str) -> CategorizedError {
        c.categorize_error(msg, Some("candidate.v"), Some(3))
    }

    #[test]
    fn feedback_groups_and_appends_zombies() {
        let c = Categorizer::default();
        let mut o = outcome((0, 0), false, 0, 0.5);
        o.usage.unused_inputs.push("spare".into());
        let errors = vec![err(&c, "syntax error near ')'"), err(&c, "unexpected token 'begin'")];
        let fb = gather_error_context(&o, &errors, &AttemptHistory::with_cap(5)).unwrap();
        assert!(fb.body.contains("[Syntax]"));
        assert!(fb.body.contains("input spare declared but never used"));
        assert_eq!(fb.categories_addressed.len(), 1);
    }

    #[test]
    fn more_than_five_errors_capped() {
        let c = Categorizer::default();
        let errors: Vec<CategorizedError> = (0..8)
            .map(|i| err(&c, &format!("unexpected token 'tok{}{}'", i, "x".repeat(i))))
            .collect();
        let o = outcome((0, 0), false, 0, 1.0);
        let fb = gather_error_context(&o, &errors, &AttemptHistory::with_cap(5)).unwrap();
        assert_eq!(fb.body.matches("- [Syntax]").count(), 5);
        assert!(fb.body.contains("plus 3 more"));
    }

    #[test]
    fn avoid_list_from_overlapping_history() {
        let c = Categorizer::default();
        let e = err(&c, "signal 'q' is not declared");
        let mut history = AttemptHistory::with_cap(5);
        history.push(AttemptEntry {
            iteration: 1,
            signatures: BTreeSet::from([e.signature.clone()]),
            fix_summary: "declared q as reg".into(),
            score: QualityScore::zero(),
        });
        let o = outcome((0, 0), false, 0, 1.0);
        let fb = gather_error_context(&o, &[e], &history).unwrap();
        assert_eq!(fb.avoid_list, vec!["declared q as reg".to_string()]);
        assert!(fb.body.contains("Previously attempted and failed: declared q as reg"));
    }

    #[test]
    fn nothing_to_report_when_clean_pass() {
        let o = outcome((4, 4), true, 0, 1.0);
        assert_eq!(
            gather_error_context(&o, &[], &AttemptHistory::with_cap(5)),
            Err(FeedbackError::NothingToReport)
        );
    }

    #[test]
    fn functional_failure_without_diags_still_reports() {
        let o = outcome((2, 4), true, 0, 1.0);
        let fb = gather_error_context(&o, &[], &AttemptHistory::with_cap(5)).unwrap();
        assert!(fb.body.contains("2 of 4 passed"));
    }
}
