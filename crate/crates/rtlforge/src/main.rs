use clap::{Parser, Subcommand, ValueEnum};
use rtlforge::cli::{self, RunOptions, Verbosity};
use rtlforge::config::resolve_config;
use rtlforge::report::ReportFormat;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rtlforge", about = "Agentic Verilog refinement engine for small language models", version)]
struct Cli {
    /// Config file path (default search: ./rtlforge.conf, then the user
    /// config dir).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Quiet: suppress the per-iteration trace.
    #[arg(short, global = true)]
    quiet: bool,

    /// Verbose: print full prompts and response excerpts.
    #[arg(short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Run the refinement loop for one task of a problem set.
    Run {
        /// JSON-lines problem set.
        #[arg(long)]
        problems: PathBuf,
        /// Task id to run (defaults to the first task).
        #[arg(long)]
        task: Option<String>,
        /// Scripted mock backend instead of HTTP (JSON array of steps).
        #[arg(long)]
        mock_script: Option<PathBuf>,
        /// Write the run manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Token budget override.
        #[arg(long)]
        budget: Option<u32>,
        /// Iteration cap override.
        #[arg(long)]
        iterations: Option<u32>,
    },
    /// Run every task n times and write a manifest for reporting.
    Batch {
        #[arg(long)]
        problems: PathBuf,
        /// Completions per task.
        #[arg(short, long, default_value_t = 5)]
        n: u32,
        #[arg(long)]
        mock_script: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<u32>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        iterations: Option<u32>,
    },
    /// Port-usage and structure lint for a Verilog file.
    Lint {
        file: PathBuf,
    },
    /// Static quality components for a Verilog file.
    Score {
        file: PathBuf,
        /// Expected top module name.
        #[arg(long)]
        module: Option<String>,
    },
    /// Pass@1 and P/FE/SE tables from a run manifest; give a second manifest
    /// to compare single-shot (SS) vs agentic (AG).
    Report {
        /// Manifest to report on (treated as SS when --compare is given).
        manifest: PathBuf,
        /// Second manifest (AG) for a side-by-side comparison.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Md)]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Md,
    Csv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbosity = if cli.quiet {
        Verbosity::Quiet
    } else if cli.verbose {
        Verbosity::Verbose
    } else {
        Verbosity::Normal
    };

    let config = match resolve_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(cli::EXIT_CONFIG as u8);
        }
    };

    let code = match cli.command {
        Commands::Run { problems, task, mock_script, out, seed, budget, iterations } => {
            let opts = RunOptions {
                problems,
                task_id: task,
                mock_script,
                out,
                n_completions: 1,
                seed,
                budget_total: budget,
                workers: None,
                max_iterations: iterations,
                verbosity,
            };
            cli::cmd_run(&config, &opts)
        }
        Commands::Batch { problems, n, mock_script, out, seed, budget, workers, iterations } => {
            let opts = RunOptions {
                problems,
                task_id: None,
                mock_script,
                out,
                n_completions: n.max(1),
                seed,
                budget_total: budget,
                workers,
                max_iterations: iterations,
                verbosity,
            };
            cli::cmd_batch(&config, &opts)
        }
        Commands::Lint { file } => cli::cmd_lint(&file),
        Commands::Score { file, module } => cli::cmd_score(&file, module.as_deref()),
        Commands::Report { manifest, compare, format } => {
            let format = match format {
                FormatArg::Md => ReportFormat::Markdown,
                FormatArg::Csv => ReportFormat::Csv,
            };
            cli::cmd_report(&manifest, compare.as_deref(), format)
        }
    };
    ExitCode::from(code as u8)
}
