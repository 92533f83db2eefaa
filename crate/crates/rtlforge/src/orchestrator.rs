//! The closed-loop refinement state machine: generate → validate → score →
//! feedback, bounded at the iteration cap, with rollback to the best-scoring
//! candidate and early termination on repeated identical failures. Also the
//! batch executor for pass@k runs and the run-manifest persistence.

use crate::dataset::{build_plan, retrieve_context, DesignTask};
use crate::feedback::{
    compute_quality_score, gather_error_context, should_rollback, AttemptEntry, AttemptHistory,
    CategorizedError, Categorizer, QualityScore, RefinementPrompt,
};
use crate::modelclient::{complete_with_retry, suppression_preamble, Backend, ModelRequest};
use crate::prompting::{
    render_prompt, truncate_structure_preserving, ExampleLibrary, PromptError, PromptMode,
    StructuredPrompt, TokenBudget,
};
use crate::rtl::{
    analyze_port_usage, extract_code, parse_ports, score_structure, ExtractedCandidate,
    PortUsageReport,
};
use crate::validation::{
    classify, run_syntax_check, run_tests, Outcome, OutcomeClass, Sandbox, Severity,
    ValidationError,
};
use crate::modelclient::SamplingParams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const DEFAULT_MAX_ITERATIONS: u32 = 5;
pub const DEFAULT_EARLY_STOP_REPEAT: u32 = 2;
const DEFAULT_MAX_CONTEXT_FILES: usize = 8;
const RESPONSE_EXCERPT_CHARS: usize = 400;
const BACKEND_RETRIES: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub max_iterations: u32,
    pub budget: TokenBudget,
    pub sampling: SamplingParams,
    pub workers: usize,
    pub early_stop_repeat: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            budget: TokenBudget::default(),
            sampling: SamplingParams::default(),
            workers: 1,
            early_stop_repeat: DEFAULT_EARLY_STOP_REPEAT,
        }
    }
}

/// Shared read-only machinery for pipeline runs.
pub struct Tools<'a> {
    pub library: &'a ExampleLibrary,
    pub sandbox_root: &'a Path,
    pub categorizer: &'a Categorizer,
    pub max_context_files: usize,
    /// When false, `wall_ms` is reported as zero so seeded mock runs are
    /// byte-for-byte reproducible.
    pub record_wall_time: bool,
}

impl<'a> Tools<'a> {
    pub fn new(library: &'a ExampleLibrary, sandbox_root: &'a Path, categorizer: &'a Categorizer) -> Tools<'a> {
        Tools {
            library,
            sandbox_root,
            categorizer,
            max_context_files: DEFAULT_MAX_CONTEXT_FILES,
            record_wall_time: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub prompt: StructuredPrompt,
    pub response_excerpt: String,
    pub candidate: Option<ExtractedCandidate>,
    pub outcome: Option<Outcome>,
    pub score: Option<QualityScore>,
    pub rolled_back: bool,
    pub errors: Vec<CategorizedError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Passed,
    Exhausted,
    EarlyTerminated,
    BackendFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task_id: String,
    pub status: RunStatus,
    pub iterations: Vec<IterationRecord>,
    pub best_candidate: Option<String>,
    pub best_score: QualityScore,
    pub wall_ms: u64,
}

impl RunResult {
    /// The classification the run would submit: the best non-rolled-back
    /// candidate's outcome. Backend failures count as syntactical errors.
    pub fn terminal_class(&self) -> OutcomeClass {
        match self.status {
            RunStatus::Passed => OutcomeClass::P,
            RunStatus::BackendFailed => OutcomeClass::SE,
            _ => self
                .iterations
                .iter()
                .rev()
                .filter(|it| !it.rolled_back)
                .find_map(|it| it.outcome.as_ref().map(|o| o.class))
                .unwrap_or(OutcomeClass::SE),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("manifest io failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("malformed manifest: {0}")]
    MalformedManifest(#[from] serde_json::Error),
}

fn fix_summary_for(index: u32, feedback: Option<&RefinementPrompt>) -> String {
    match feedback {
        None => {
            if index == 1 {
                "initial attempt".to_string()
            } else {
                "retry without feedback".to_string()
            }
        }
        Some(fb) => {
            if fb.categories_addressed.is_empty() {
                "addressed reported findings".to_string()
            } else {
                let names: Vec<&str> =
                    fb.categories_addressed.iter().map(|c| c.name()).collect();
                format!("addressed: {}", names.join(", "))
            }
        }
    }
}

/// Feedback used when extraction found no code at all.
fn no_code_feedback(categorizer: &Categorizer) -> (Vec<CategorizedError>, RefinementPrompt) {
    let err = categorizer.categorize_error("no Verilog code block found in model output", None, None);
    let prompt = RefinementPrompt {
        body: format!(
            "- [{}] {}\nReply with exactly one fenced Verilog code block containing the full module.\n",
            err.category.name(),
            err.summary
        ),
        categories_addressed: BTreeSet::from([err.category]),
        avoid_list: Vec::new(),
    };
    (vec![err], prompt)
}

/// Runs the closed loop for one task under the run id `task.id`.
pub fn run_pipeline(
    task: &DesignTask,
    cfg: &PipelineConfig,
    backend: &dyn Backend,
    tools: &Tools,
) -> Result<RunResult, PipelineError> {
    run_pipeline_with_id(task, cfg, backend, tools, &task.id, cfg.sampling.seed)
}

/// Closed loop with an explicit run id (batch replicates get unique ids so
/// sandboxes never collide) and an optional per-run sampling seed.
pub fn run_pipeline_with_id(
    task: &DesignTask,
    cfg: &PipelineConfig,
    backend: &dyn Backend,
    tools: &Tools,
    run_id: &str,
    seed: Option<u64>,
) -> Result<RunResult, PipelineError> {
    let started = Instant::now();
    let mut bundle = retrieve_context(task, tools.max_context_files);
    bundle.plan = build_plan(task);

    let mut params = cfg.sampling.clone();
    params.seed = seed;
    let system_text = suppression_preamble(task.kind, task.expected_schema.as_deref());

    let mut history = AttemptHistory::with_cap(cfg.max_iterations as usize);
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(String, QualityScore)> = None;
    let mut feedback: Option<RefinementPrompt> = None;
    let mut extraction_failures = 0u32;
    // (signature set, consecutive occurrences, composite at last occurrence)
    let mut streak: Option<(BTreeSet<String>, u32, f64)> = None;
    let mut status = RunStatus::Exhausted;

    for index in 1..=cfg.max_iterations {
        let mode = if index == 1 { PromptMode::Initial } else { PromptMode::Refinement };
        let prompt = render_prompt(task, &bundle, &cfg.budget, tools.library, mode, feedback.as_ref())?;

        let request = ModelRequest {
            system_text: system_text.clone(),
            user_text: prompt.serialized_text(),
            params: params.clone(),
        };
        let response = match complete_with_retry(backend, &request, BACKEND_RETRIES) {
            Ok(r) => r,
            Err(_) => {
                status = RunStatus::BackendFailed;
                break;
            }
        };
        let response_excerpt: String = response.text.chars().take(RESPONSE_EXCERPT_CHARS).collect();

        let candidate = match extract_code(&response.text, task.kind) {
            Ok(c) => c,
            Err(_) => {
                extraction_failures += 1;
                let (errors, fb) = no_code_feedback(tools.categorizer);
                let signatures: BTreeSet<String> =
                    errors.iter().map(|e| e.signature.clone()).collect();
                history.push(AttemptEntry {
                    iteration: index,
                    signatures: signatures.clone(),
                    fix_summary: fix_summary_for(index, feedback.as_ref()),
                    score: QualityScore::zero(),
                });
                streak = Some(match streak.take() {
                    Some((prev_sigs, count, _)) if prev_sigs == signatures => {
                        (prev_sigs, count + 1, 0.0)
                    }
                    _ => (signatures, 1, 0.0),
                });
                iterations.push(IterationRecord {
                    index,
                    prompt,
                    response_excerpt,
                    candidate: None,
                    outcome: None,
                    score: None,
                    rolled_back: false,
                    errors,
                });
                if extraction_failures >= 2 {
                    status = RunStatus::EarlyTerminated;
                    break;
                }
                feedback = Some(fb);
                continue;
            }
        };
        extraction_failures = 0;

        let sandbox = Sandbox::create(tools.sandbox_root, run_id, index, &candidate.code, &task.harness)?;
        let syntax = run_syntax_check(&sandbox, &task.harness)?;

        let mut errors: Vec<CategorizedError> = Vec::new();
        let usage = match parse_ports(&candidate.code) {
            Ok(ports) => analyze_port_usage(&candidate.code, &ports),
            Err(e) => {
                errors.push(tools.categorizer.categorize_error(
                    &format!("parse error: {e}"),
                    None,
                    None,
                ));
                PortUsageReport::empty()
            }
        };
        let tests = if syntax.clean {
            Some(run_tests(&sandbox, &task.harness)?)
        } else {
            None
        };
        for diag in syntax.diagnostics.iter().filter(|d| d.severity == Severity::Error) {
            errors.push(tools.categorizer.categorize_diagnostic(diag));
        }
        if let Some(t) = &tests {
            if t.failed > 0 || t.timed_out {
                errors.extend(tools.categorizer.categorize_test_log(&t.log_excerpt, 10));
                if t.timed_out {
                    errors.push(tools.categorizer.categorize_error(
                        &format!("functional tests timed out after {} s", task.harness.timeout_s),
                        None,
                        None,
                    ));
                }
            }
        }

        let outcome = classify(syntax, usage, tests);
        let structure = score_structure(&candidate.code, None);
        let score = compute_quality_score(&outcome, &structure);

        let rolled_back = match &best {
            Some((_, best_score)) => should_rollback(&score, best_score),
            None => false,
        };
        if !rolled_back {
            best = Some((candidate.code.clone(), score));
        }

        let signatures: BTreeSet<String> = errors.iter().map(|e| e.signature.clone()).collect();
        history.push(AttemptEntry {
            iteration: index,
            signatures: signatures.clone(),
            fix_summary: fix_summary_for(index, feedback.as_ref()),
            score,
        });

        let passed = outcome.class == OutcomeClass::P;
        iterations.push(IterationRecord {
            index,
            prompt,
            response_excerpt,
            candidate: Some(candidate),
            outcome: Some(outcome.clone()),
            score: Some(score),
            rolled_back,
            errors: errors.clone(),
        });

        if passed {
            status = RunStatus::Passed;
            break;
        }

        streak = Some(match streak.take() {
            Some((prev_sigs, count, prev_comp))
                if prev_sigs == signatures && score.composite <= prev_comp =>
            {
                (prev_sigs, count + 1, score.composite)
            }
            _ => (signatures, 1, score.composite),
        });
        if let Some((_, count, _)) = &streak {
            if *count >= cfg.early_stop_repeat + 1 {
                status = RunStatus::EarlyTerminated;
                break;
            }
        }

        let mut fb = gather_error_context(&outcome, &errors, &history).unwrap_or(RefinementPrompt {
            body: "- the previous attempt did not pass; produce a corrected implementation\n".into(),
            categories_addressed: BTreeSet::new(),
            avoid_list: Vec::new(),
        });
        if let Some((best_code, _)) = &best {
            // The baseline shown to the next refinement round is always the
            // best-so-far candidate; a rollback means the regressed attempt
            // is dropped from view while history still records it.
            let allowance = cfg.budget.total / 4;
            fb.body.push_str("Start from this best-scoring implementation and improve it:\n");
            fb.body.push_str(&truncate_structure_preserving(best_code, allowance));
            if !fb.body.ends_with('\n') {
                fb.body.push('\n');
            }
        }
        feedback = Some(fb);
    }

    let (best_candidate, best_score) = match best {
        Some((code, score)) => (Some(code), score),
        None => (None, QualityScore::zero()),
    };
    Ok(RunResult {
        task_id: task.id.clone(),
        status,
        iterations,
        best_candidate,
        best_score,
        wall_ms: if tools.record_wall_time { started.elapsed().as_millis() as u64 } else { 0 },
    })
}

/// Runs each task `n_completions` times with independent seeds and at most
/// `cfg.workers` pipelines in flight. Results keep (task order, replicate)
/// ordering; backend failures stay per-run, environment failures abort.
pub fn run_batch(
    tasks: &[DesignTask],
    cfg: &PipelineConfig,
    n_completions: u32,
    backend: &dyn Backend,
    tools: &Tools,
) -> Result<Vec<(String, Vec<RunResult>)>, PipelineError> {
    let jobs: Vec<(usize, u32)> = (0..tasks.len())
        .flat_map(|t| (0..n_completions).map(move |r| (t, r)))
        .collect();
    let results: Vec<std::sync::Mutex<Option<Result<RunResult, PipelineError>>>> =
        jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next_job = std::sync::atomic::AtomicUsize::new(0);
    let workers = cfg.workers.max(1).min(jobs.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = next_job.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if job >= jobs.len() {
                    break;
                }
                let (task_idx, replicate) = jobs[job];
                let task = &tasks[task_idx];
                let run_id = format!("{}.r{}", task.id, replicate);
                let seed = cfg.sampling.seed.map(|base| base + u64::from(replicate));
                let run_backend = backend.fork();
                let outcome = run_pipeline_with_id(task, cfg, run_backend.as_ref(), tools, &run_id, seed);
                *results[job].lock().expect("result slot") = Some(outcome);
            });
        }
    });

    let mut out: Vec<(String, Vec<RunResult>)> =
        tasks.iter().map(|t| (t.id.clone(), Vec::new())).collect();
    for (job, slot) in results.into_iter().enumerate() {
        let (task_idx, _) = jobs[job];
        let result = slot.into_inner().expect("result slot").expect("job executed")?;
        out[task_idx].1.push(result);
    }
    Ok(out)
}

// --- Run manifest ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestConfig {
    pub max_iterations: u32,
    pub budget_total: u32,
    pub temperature: f64,
    pub workers: usize,
    pub early_stop_repeat: u32,
    pub n_completions: u32,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestIteration {
    pub index: u32,
    pub outcome_class: Option<OutcomeClass>,
    pub score: Option<f64>,
    pub rolled_back: bool,
    pub error_categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub task_id: String,
    #[serde(default = "uncategorized")]
    pub category: String,
    pub replicate: u32,
    pub status: RunStatus,
    pub wall_ms: u64,
    pub best_score: QualityScore,
    pub iterations: Vec<ManifestIteration>,
}

impl ManifestRun {
    /// Terminal P/FE/SE classification of the submitted candidate: the best
    /// non-rolled-back iteration outcome; backend failures count as SE.
    pub fn terminal_class(&self) -> OutcomeClass {
        match self.status {
            RunStatus::Passed => OutcomeClass::P,
            RunStatus::BackendFailed => OutcomeClass::SE,
            _ => self
                .iterations
                .iter()
                .rev()
                .filter(|it| !it.rolled_back)
                .find_map(|it| it.outcome_class)
                .unwrap_or(OutcomeClass::SE),
        }
    }
}

fn uncategorized() -> String {
    "uncategorized".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ManifestConfig,
    pub runs: Vec<ManifestRun>,
}

impl Manifest {
    pub fn from_batch(
        config: ManifestConfig,
        tasks: &[DesignTask],
        results: &[(String, Vec<RunResult>)],
    ) -> Manifest {
        let category_of = |task_id: &str| {
            tasks
                .iter()
                .find(|t| t.id == task_id)
                .map(|t| t.category.clone())
                .unwrap_or_else(uncategorized)
        };
        let mut runs = Vec::new();
        for (task_id, task_results) in results {
            for (replicate, result) in task_results.iter().enumerate() {
                runs.push(ManifestRun {
                    task_id: task_id.clone(),
                    category: category_of(task_id),
                    replicate: replicate as u32,
                    status: result.status,
                    wall_ms: result.wall_ms,
                    best_score: result.best_score,
                    iterations: result
                        .iterations
                        .iter()
                        .map(|it| ManifestIteration {
                            index: it.index,
                            outcome_class: it.outcome.as_ref().map(|o| o.class),
                            score: it.score.map(|s| s.composite),
                            rolled_back: it.rolled_back,
                            error_categories: {
                                let mut cats: Vec<String> = Vec::new();
                                for e in &it.errors {
                                    let name = e.category.name().to_string();
                                    if !cats.contains(&name) {
                                        cats.push(name);
                                    }
                                }
                                cats
                            },
                        })
                        .collect(),
                });
            }
        }
        Manifest { config, runs }
    }
}

/// Writes the manifest atomically: temp file in the target directory, then
/// rename.
pub fn persist_manifest(manifest: &Manifest, path: &Path) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(manifest)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp: PathBuf = dir.join(format!(
        ".manifest-{}.tmp",
        std::process::id()
    ));
    std::fs::write(&tmp, json.as_bytes())?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Manifest, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{HarnessSpec, TaskKind};
    use crate::modelclient::MockBackend;
    use indexmap::IndexMap;

    // A syntax shim that fails when the candidate contains SYNTAX_BAD, and a
    // test shim that fails when it contains TEST_FAIL.
    pub(crate) const SYNTAX_SHIM: &str = "sh -c 'if grep -q SYNTAX_BAD {candidate}; then echo \"{candidate}:1: syntax error: bad construct\" >&2; exit 1; fi'";
    pub(crate) const TEST_SHIM: &str = "sh -c 'if grep -q TEST_FAIL {candidate}; then echo PASS=3 FAIL=1; exit 1; else echo PASS=4 FAIL=0; fi'";

    pub(crate) fn shim_task(id: &str) -> DesignTask {
        DesignTask {
            id: id.into(),
            kind: TaskKind::Generation,
            category: "cid002".into(),
            spec_text: "Build a widget counter with wrap. The output q is 8 bits wide.".into(),
            context_files: IndexMap::new(),
            harness: HarnessSpec {
                syntax_cmd: SYNTAX_SHIM.into(),
                test_cmd: TEST_SHIM.into(),
                timeout_s: 30,
                workdir_files: IndexMap::new(),
            },
            expected_schema: None,
        }
    }

    pub(crate) const GOOD: &str =
        "```verilog\nmodule widget(input clk, output reg q);\n  always @(posedge clk) q <= ~q;\nendmodule\n```";
    pub(crate) const BROKEN: &str =
        "```verilog\nmodule widget(input clk, output q); SYNTAX_BAD\nendmodule\n```";
    pub(crate) const FAILING: &str =
        "```verilog\nmodule widget(input clk, output reg q);\n  always @(posedge clk) q <= 1'b0; // TEST_FAIL\nendmodule\n```";

    fn run_with(script: Vec<&str>, cfg: &PipelineConfig) -> RunResult {
        let backend = MockBackend::from_texts(script);
        let library = ExampleLibrary::default();
        let categorizer = Categorizer::default();
        let root = tempfile::tempdir().unwrap();
        let mut tools = Tools::new(&library, root.path(), &categorizer);
        tools.record_wall_time = false;
        run_pipeline(&shim_task("t1"), cfg, &backend, &tools).unwrap()
    }

    #[test]
    fn pass_on_second_iteration() {
        let result = run_with(vec![BROKEN, GOOD], &PipelineConfig::default());
        assert_eq!(result.status, RunStatus::Passed);
        assert_eq!(result.iterations.len(), 2);
        assert_eq!(result.iterations[0].outcome.as_ref().unwrap().class, OutcomeClass::SE);
        assert_eq!(result.iterations[1].outcome.as_ref().unwrap().class, OutcomeClass::P);
        assert!((result.best_score.composite - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_failures_terminate_early() {
        let cfg = PipelineConfig::default();
        let result = run_with(vec![BROKEN, BROKEN, BROKEN, BROKEN, BROKEN], &cfg);
        assert_eq!(result.status, RunStatus::EarlyTerminated);
        assert!(result.iterations.len() as u32 <= 1 + cfg.early_stop_repeat);
        let sigs: Vec<BTreeSet<String>> = result
            .iterations
            .iter()
            .map(|it| it.errors.iter().map(|e| e.signature.clone()).collect())
            .collect();
        assert!(sigs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn regression_rolls_back_to_best() {
        // Iteration 1 fails one test (FE), iteration 2 regresses to a syntax
        // error and is rolled back; the iteration-1 candidate stays best.
        let cfg = PipelineConfig { max_iterations: 3, ..PipelineConfig::default() };
        let result = run_with(vec![FAILING, BROKEN, BROKEN], &cfg);
        assert_eq!(result.status, RunStatus::Exhausted);
        assert!(result.iterations[1].rolled_back);
        let best = result.best_candidate.as_deref().unwrap();
        assert!(best.contains("TEST_FAIL"));
        let s1 = result.iterations[0].score.unwrap();
        let s2 = result.iterations[1].score.unwrap();
        assert!(s2.composite < s1.composite);
        assert!((result.best_score.composite - s1.composite).abs() < 1e-12);
    }

    #[test]
    fn backend_failure_on_first_call() {
        let backend = MockBackend::from_json(r#"[{"error":"http:500"},{"error":"http:500"}]"#).unwrap();
        let library = ExampleLibrary::default();
        let categorizer = Categorizer::default();
        let root = tempfile::tempdir().unwrap();
        let tools = Tools::new(&library, root.path(), &categorizer);
        let result = run_pipeline(&shim_task("t2"), &PipelineConfig::default(), &backend, &tools).unwrap();
        assert_eq!(result.status, RunStatus::BackendFailed);
        assert!(result.iterations.is_empty());
    }

    #[test]
    fn double_extraction_failure_terminates() {
        let result = run_with(vec!["no code here at all", "still no code"], &PipelineConfig::default());
        assert_eq!(result.status, RunStatus::EarlyTerminated);
        assert_eq!(result.iterations.len(), 2);
        assert!(result.iterations.iter().all(|it| it.candidate.is_none()));
    }

    #[test]
    fn iteration_cap_exhausts() {
        // Alternate two different failures so neither early-stop rule fires.
        let result = run_with(
            vec![BROKEN, FAILING, BROKEN, FAILING, BROKEN],
            &PipelineConfig::default(),
        );
        assert_eq!(result.status, RunStatus::Exhausted);
        assert_eq!(result.iterations.len(), 5);
    }

    #[test]
    fn best_composite_never_decreases() {
        let result = run_with(
            vec![BROKEN, FAILING, BROKEN, FAILING, GOOD],
            &PipelineConfig::default(),
        );
        let mut best_so_far = 0.0_f64;
        for it in &result.iterations {
            if let Some(score) = it.score {
                if !it.rolled_back {
                    assert!(score.composite >= best_so_far - 1e-12);
                    best_so_far = best_so_far.max(score.composite);
                }
            }
        }
        assert_eq!(result.status, RunStatus::Passed);
    }

    #[test]
    fn refinement_prompt_carries_feedback() {
        let result = run_with(vec![BROKEN, GOOD], &PipelineConfig::default());
        let second_prompt = result.iterations[1].prompt.serialized_text();
        assert!(second_prompt.contains("[Syntax]"));
        assert!(second_prompt.contains("best-scoring implementation"));
    }

    #[test]
    fn batch_runs_ordered_and_isolated() {
        let backend = MockBackend::from_texts(vec![GOOD]);
        let library = ExampleLibrary::default();
        let categorizer = Categorizer::default();
        let root = tempfile::tempdir().unwrap();
        let mut tools = Tools::new(&library, root.path(), &categorizer);
        tools.record_wall_time = false;
        let tasks = vec![shim_task("a"), shim_task("b")];
        let cfg = PipelineConfig { workers: 4, ..PipelineConfig::default() };
        let results = run_batch(&tasks, &cfg, 5, &backend, &tools).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].0, "a");
        assert_eq!(results[0].1.len(), 5);
        assert!(results
            .iter()
            .flat_map(|(_, rs)| rs)
            .all(|r| r.status == RunStatus::Passed));
    }

    #[test]
    fn backend_failures_stay_per_run_in_batches() {
        let backend = MockBackend::from_json(
            r#"[{"error":"http:500"},{"error":"http:500"},{"error":"http:500"}]"#,
        )
        .unwrap();
        let library = ExampleLibrary::default();
        let categorizer = Categorizer::default();
        let root = tempfile::tempdir().unwrap();
        let tools = Tools::new(&library, root.path(), &categorizer);
        let tasks = vec![shim_task("a"), shim_task("b")];
        let results = run_batch(&tasks, &PipelineConfig::default(), 2, &backend, &tools).unwrap();
        assert!(results
            .iter()
            .flat_map(|(_, rs)| rs)
            .all(|r| r.status == RunStatus::BackendFailed));
        assert_eq!(results[1].1.len(), 2);
    }

    #[test]
    fn seeded_batch_is_bit_identical() {
        let library = ExampleLibrary::default();
        let categorizer = Categorizer::default();
        let cfg = PipelineConfig {
            workers: 3,
            sampling: SamplingParams { seed: Some(42), ..SamplingParams::default() },
            ..PipelineConfig::default()
        };
        let tasks = vec![shim_task("a"), shim_task("b")];
        let manifest_for = |root: &Path| {
            let backend = MockBackend::from_texts(vec![BROKEN, GOOD]);
            let mut tools = Tools::new(&library, root, &categorizer);
            tools.record_wall_time = false;
            let results = run_batch(&tasks, &cfg, 3, &backend, &tools).unwrap();
            let config = ManifestConfig {
                max_iterations: cfg.max_iterations,
                budget_total: cfg.budget.total,
                temperature: cfg.sampling.temperature,
                workers: cfg.workers,
                early_stop_repeat: cfg.early_stop_repeat,
                n_completions: 3,
                backend_id: "mock".into(),
            };
            serde_json::to_string_pretty(&Manifest::from_batch(config, &tasks, &results)).unwrap()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        assert_eq!(manifest_for(dir_a.path()), manifest_for(dir_b.path()));
    }

    #[test]
    fn manifest_round_trips() {
        let backend = MockBackend::from_texts(vec![FAILING, GOOD]);
        let library = ExampleLibrary::default();
        let categorizer = Categorizer::default();
        let root = tempfile::tempdir().unwrap();
        let mut tools = Tools::new(&library, root.path(), &categorizer);
        tools.record_wall_time = false;
        let tasks = vec![shim_task("t")];
        let results = run_batch(&tasks, &PipelineConfig::default(), 1, &backend, &tools).unwrap();
        let manifest = Manifest::from_batch(
            ManifestConfig {
                max_iterations: 5,
                budget_total: 8192,
                temperature: 0.7,
                workers: 1,
                early_stop_repeat: 2,
                n_completions: 1,
                backend_id: "mock".into(),
            },
            &tasks,
            &results,
        );
        let path = root.path().join("manifest.json");
        persist_manifest(&manifest, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), manifest);
    }

    #[test]
    fn empty_manifest_round_trips() {
        let manifest = Manifest {
            config: ManifestConfig {
                max_iterations: 5,
                budget_total: 8192,
                temperature: 0.7,
                workers: 1,
                early_stop_repeat: 2,
                n_completions: 0,
                backend_id: "mock".into(),
            },
            runs: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        persist_manifest(&manifest, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert!(loaded.runs.is_empty());
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let manifest = Manifest {
            config: ManifestConfig {
                max_iterations: 5,
                budget_total: 8192,
                temperature: 0.7,
                workers: 1,
                early_stop_repeat: 2,
                n_completions: 0,
                backend_id: "mock".into(),
            },
            runs: vec![],
        };
        let err = persist_manifest(&manifest, Path::new("/proc/definitely/not/writable/m.json"));
        assert!(matches!(err, Err(PipelineError::IoFailure(_))));
    }
}
