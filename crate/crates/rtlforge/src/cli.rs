//! Command implementations behind the `rtlforge` binary. Exit codes are a
//! stable contract: 0 pass, 1 not-passed, 2 usage/config error, 3 backend
//! failure.

use crate::config::CliConfig;
use crate::dataset::{load_problem_set, DesignTask};
use crate::feedback::Categorizer;
use crate::modelclient::{Backend, HttpBackend, HttpBackendConfig, MockBackend};
use crate::orchestrator::{
    load_manifest, persist_manifest, run_batch, Manifest, ManifestConfig, PipelineConfig,
    RunResult, RunStatus, Tools,
};
use crate::prompting::{ExampleLibrary, TokenBudget};
use crate::report::{render_report, ReportFormat};
use crate::rtl::{analyze_port_usage, parse_ports, score_structure};
use std::path::{Path, PathBuf};
use std::time::Duration;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_PASSED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verbosity {
    Quiet,
    Normal,
    Verbose,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub problems: PathBuf,
    pub task_id: Option<String>,
    pub mock_script: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub n_completions: u32,
    pub seed: Option<u64>,
    pub budget_total: Option<u32>,
    pub workers: Option<usize>,
    pub max_iterations: Option<u32>,
    pub verbosity: Verbosity,
}

fn build_backend(config: &CliConfig, mock_script: Option<&Path>) -> Result<Box<dyn Backend>, String> {
    match mock_script {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read mock script {}: {e}", path.display()))?;
            let mock = MockBackend::from_json(&text)
                .map_err(|e| format!("malformed mock script {}: {e}", path.display()))?;
            Ok(Box::new(mock))
        }
        None => {
            let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
            Ok(Box::new(HttpBackend::new(HttpBackendConfig {
                base_url: config.backend_url.clone(),
                model: config.model_name.clone(),
                api_key,
                request_timeout: Duration::from_secs(config.request_timeout_s),
            })))
        }
    }
}

fn build_library(config: &CliConfig) -> Result<ExampleLibrary, String> {
    let mut library = ExampleLibrary::builtin();
    if let Some(dir) = &config.example_dir {
        library
            .load_dir(dir)
            .map_err(|e| format!("example library {}: {e}", dir.display()))?;
    }
    Ok(library)
}

fn pipeline_config(config: &CliConfig, opts: &RunOptions, task: Option<&DesignTask>) -> Result<PipelineConfig, String> {
    let total = opts.budget_total.unwrap_or(config.budget_total);
    let budget = TokenBudget::with_total(total).map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig {
        budget,
        workers: opts.workers.unwrap_or(config.workers).max(1),
        ..PipelineConfig::default()
    };
    if let Some(iters) = opts.max_iterations {
        cfg.max_iterations = iters.max(1);
    }
    if let Some(task) = task {
        cfg.sampling = crate::modelclient::SamplingParams::for_kind(task.kind, false);
    }
    cfg.sampling.seed = opts.seed;
    Ok(cfg)
}

fn apply_tool_overrides(tasks: &mut [DesignTask], config: &CliConfig) {
    for task in tasks {
        if !config.syntax_cmd.is_empty() {
            task.harness.syntax_cmd = config.syntax_cmd.clone();
        }
        if !config.test_cmd.is_empty() {
            task.harness.test_cmd = config.test_cmd.clone();
        }
    }
}

fn print_trace(result: &RunResult, verbosity: Verbosity) {
    if verbosity == Verbosity::Quiet {
        return;
    }
    for it in &result.iterations {
        let class = it
            .outcome
            .as_ref()
            .map(|o| o.class.to_string())
            .unwrap_or_else(|| "--".into());
        let composite = it
            .score
            .map(|s| format!("{:.3}", s.composite))
            .unwrap_or_else(|| "-".into());
        let categories: Vec<&str> = {
            let mut seen = Vec::new();
            for e in &it.errors {
                let name = e.category.name();
                if !seen.contains(&name) {
                    seen.push(name);
                }
            }
            seen
        };
        println!(
            "iter {:>2}  class={:<2}  composite={}  rolled_back={}  categories=[{}]",
            it.index,
            class,
            composite,
            it.rolled_back,
            categories.join(", ")
        );
        if verbosity == Verbosity::Verbose {
            println!("--- prompt ---\n{}\n--- response ---\n{}", it.prompt.serialized_text(), it.response_excerpt);
        }
    }
    println!(
        "result: {:?}, best composite {:.3}, {} ms",
        result.status, result.best_score.composite, result.wall_ms
    );
}

fn manifest_config(cfg: &PipelineConfig, n_completions: u32, backend_id: &str) -> ManifestConfig {
    ManifestConfig {
        max_iterations: cfg.max_iterations,
        budget_total: cfg.budget.total,
        temperature: cfg.sampling.temperature,
        workers: cfg.workers,
        early_stop_repeat: cfg.early_stop_repeat,
        n_completions,
        backend_id: backend_id.to_string(),
    }
}

/// Runs the refinement pipeline for one task from the problem set.
pub fn cmd_run(config: &CliConfig, opts: &RunOptions) -> i32 {
    let mut tasks = match load_problem_set(&opts.problems) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    apply_tool_overrides(&mut tasks, config);
    let task = match &opts.task_id {
        Some(id) => tasks.iter().find(|t| &t.id == id),
        None => tasks.first(),
    };
    let Some(task) = task else {
        eprintln!("error: task not found in {}", opts.problems.display());
        return EXIT_CONFIG;
    };

    let backend = match build_backend(config, opts.mock_script.as_deref()) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let library = match build_library(config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let cfg = match pipeline_config(config, opts, Some(task)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let categorizer = Categorizer::with_rules(config.category_rules.clone());
    let tools = Tools::new(&library, &config.sandbox_root, &categorizer);

    let result = match crate::orchestrator::run_pipeline(task, &cfg, backend.as_ref(), &tools) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    print_trace(&result, opts.verbosity);

    if let Some(out) = &opts.out {
        let manifest = Manifest::from_batch(
            manifest_config(&cfg, 1, backend.id()),
            std::slice::from_ref(task),
            &[(task.id.clone(), vec![result.clone()])],
        );
        if let Err(e) = persist_manifest(&manifest, out) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    }

    match result.status {
        RunStatus::Passed => EXIT_OK,
        RunStatus::BackendFailed => EXIT_BACKEND,
        _ => EXIT_NOT_PASSED,
    }
}

/// Runs every task in the problem set n times and writes the manifest.
pub fn cmd_batch(config: &CliConfig, opts: &RunOptions) -> i32 {
    let mut tasks = match load_problem_set(&opts.problems) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    apply_tool_overrides(&mut tasks, config);
    if tasks.is_empty() {
        eprintln!("error: empty problem set");
        return EXIT_CONFIG;
    }

    let backend = match build_backend(config, opts.mock_script.as_deref()) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let library = match build_library(config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let cfg = match pipeline_config(config, opts, None) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let categorizer = Categorizer::with_rules(config.category_rules.clone());
    let tools = Tools::new(&library, &config.sandbox_root, &categorizer);

    let results = match run_batch(&tasks, &cfg, opts.n_completions, backend.as_ref(), &tools) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };

    let total_runs: usize = results.iter().map(|(_, rs)| rs.len()).sum();
    let passed: usize = results
        .iter()
        .flat_map(|(_, rs)| rs)
        .filter(|r| r.status == RunStatus::Passed)
        .count();
    let backend_failures: usize = results
        .iter()
        .flat_map(|(_, rs)| rs)
        .filter(|r| r.status == RunStatus::BackendFailed)
        .count();
    if opts.verbosity != Verbosity::Quiet {
        println!("{passed}/{total_runs} runs passed ({backend_failures} backend failures)");
    }

    let manifest = Manifest::from_batch(
        manifest_config(&cfg, opts.n_completions, backend.id()),
        &tasks,
        &results,
    );
    if let Some(out) = &opts.out {
        if let Err(e) = persist_manifest(&manifest, out) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    }

    if backend_failures == total_runs && total_runs > 0 {
        EXIT_BACKEND
    } else {
        EXIT_OK
    }
}

/// Standalone port-usage and structure lint of a Verilog file.
pub fn cmd_lint(file: &Path) -> i32 {
    let code = match std::fs::read_to_string(file) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", file.display());
            return EXIT_CONFIG;
        }
    };
    let structure = score_structure(&code, None);
    match parse_ports(&code) {
        Ok(ports) => {
            let usage = analyze_port_usage(&code, &ports);
            let findings = usage.findings();
            for finding in &findings {
                println!("{}: {finding}", file.display());
            }
            if !structure.has_module_pair {
                println!("{}: module/endmodule pairing is off", file.display());
            }
            if !structure.balanced_begin_end {
                println!("{}: begin/end tokens are unbalanced", file.display());
            }
            if !structure.no_placeholders {
                println!("{}: placeholder markers (TODO/FIXME/...) present", file.display());
            }
            if findings.is_empty() && (structure.fraction - 1.0).abs() < f64::EPSILON {
                println!("{}: no findings", file.display());
                EXIT_OK
            } else {
                EXIT_NOT_PASSED
            }
        }
        Err(e) => {
            println!("{}: {e}", file.display());
            EXIT_NOT_PASSED
        }
    }
}

/// Static quality components of a Verilog file (no tools run: functional and
/// compile components are reported as unavailable).
pub fn cmd_score(file: &Path, module: Option<&str>) -> i32 {
    let code = match std::fs::read_to_string(file) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", file.display());
            return EXIT_CONFIG;
        }
    };
    let structure = score_structure(&code, module);
    let usage = match parse_ports(&code) {
        Ok(ports) => analyze_port_usage(&code, &ports),
        Err(e) => {
            println!("{}: {e}", file.display());
            crate::rtl::PortUsageReport::empty()
        }
    };
    println!("port_completeness: {:.3}", usage.usage_fraction);
    println!("structure:         {:.3}", structure.fraction);
    println!(
        "checks: module_pair={} begin_end={} placeholders_clear={} name_match={}",
        structure.has_module_pair,
        structure.balanced_begin_end,
        structure.no_placeholders,
        structure.name_matches_request
    );
    let static_score = crate::feedback::QualityScore::from_components(
        0.0,
        0.0,
        usage.usage_fraction,
        structure.fraction,
    );
    println!(
        "static composite (functional/compile unavailable): {:.3}",
        static_score.composite
    );
    EXIT_OK
}

/// Renders the pass@1 and P/FE/SE tables from one manifest, or a side-by-side
/// SS vs AG comparison from two.
pub fn cmd_report(manifest_path: &Path, compare: Option<&Path>, format: ReportFormat) -> i32 {
    let first = match load_manifest(manifest_path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut labelled = Vec::new();
    match compare {
        Some(second_path) => {
            let second = match load_manifest(second_path) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            labelled.push(("SS".to_string(), first));
            labelled.push(("AG".to_string(), second));
        }
        None => labelled.push(("RUN".to_string(), first)),
    }
    print!("{}", render_report(&labelled, format));
    EXIT_OK
}
