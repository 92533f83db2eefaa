//! rtlforge: an agentic refinement engine that drives small language models
//! toward functionally validated Verilog RTL.
//!
//! The engine is a bounded closed loop. Context preparation selects and
//! plans from the task's files, prompting builds a keyword-anchored,
//! token-budgeted prompt, a backend generates a candidate, validation runs
//! syntax and functional checks plus zombie-port analysis, and feedback
//! categorizes failures, scores quality, and synthesizes the next refinement
//! prompt — rolling back whenever a round regresses. A batch executor and
//! metrics layer produce pass@k and P/FE/SE reports.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod feedback;
pub mod metrics;
pub mod modelclient;
pub mod orchestrator;
pub mod prompting;
pub mod report;
pub mod rtl;
pub mod textutil;
pub mod validation;

pub use dataset::{ContextBundle, DesignTask, HarnessSpec, PlanOutline, TaskKind};
pub use feedback::{CategorizedError, Categorizer, ErrorCategory, QualityScore, RefinementPrompt};
pub use metrics::{bleu, pass_at_k, tabulate_outcomes, OutcomeTally};
pub use modelclient::{Backend, HttpBackend, MockBackend, ModelRequest, ModelResponse, SamplingParams};
pub use orchestrator::{
    run_batch, run_pipeline, IterationRecord, Manifest, PipelineConfig, RunResult, RunStatus, Tools,
};
pub use prompting::{estimate_tokens, ExampleLibrary, StructuredPrompt, TokenBudget};
pub use rtl::{
    analyze_port_usage, extract_code, parse_ports, score_structure, ExtractedCandidate, PortDecl,
    PortUsageReport,
};
pub use validation::{classify, run_syntax_check, run_tests, Outcome, OutcomeClass, Sandbox};
