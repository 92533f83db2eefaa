//! Report emission: pass@1 and P/FE/SE tables over run manifests, in
//! markdown or CSV, with side-by-side columns when comparing a single-shot
//! manifest against an agentic one.

use crate::metrics::{pass_at_1_by_category, tabulate_outcomes, OutcomeTally};
use crate::orchestrator::Manifest;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

/// Renders the evaluation tables. Each manifest gets one column group,
/// labelled by its paired name (conventionally "SS" and "AG").
pub fn render_report(manifests: &[(String, Manifest)], format: ReportFormat) -> String {
    let pass_tables: Vec<(String, Vec<(String, f64)>)> = manifests
        .iter()
        .map(|(label, m)| (label.clone(), pass_at_1_by_category(&m.runs)))
        .collect();
    let tally_tables: Vec<(String, Vec<OutcomeTally>)> = manifests
        .iter()
        .map(|(label, m)| (label.clone(), tabulate_outcomes(&m.runs)))
        .collect();

    let mut categories: BTreeSet<&str> = BTreeSet::new();
    for (_, rows) in &pass_tables {
        categories.extend(rows.iter().map(|(c, _)| c.as_str()));
    }
    for (_, rows) in &tally_tables {
        categories.extend(rows.iter().map(|t| t.category.as_str()));
    }

    let pass_cell = |label_rows: &(String, Vec<(String, f64)>), category: &str| {
        label_rows
            .1
            .iter()
            .find(|(c, _)| c == category)
            .map(|(_, v)| format!("{:.2}", v * 100.0))
            .unwrap_or_else(|| "-".into())
    };
    let tally_cells = |label_rows: &(String, Vec<OutcomeTally>), category: &str| {
        label_rows
            .1
            .iter()
            .find(|t| t.category == category)
            .map(|t| (t.p.to_string(), t.fe.to_string(), t.se.to_string()))
            .unwrap_or_else(|| ("-".into(), "-".into(), "-".into()))
    };

    match format {
        ReportFormat::Markdown => {
            let mut out = String::from("## Pass@1 by category (%)\n\n");
            out.push_str("| Category |");
            for (label, _) in &pass_tables {
                out.push_str(&format!(" {label} |"));
            }
            out.push('\n');
            out.push_str("|---|");
            for _ in &pass_tables {
                out.push_str("---|");
            }
            out.push('\n');
            for category in &categories {
                out.push_str(&format!("| {category} |"));
                for table in &pass_tables {
                    out.push_str(&format!(" {} |", pass_cell(table, category)));
                }
                out.push('\n');
            }

            out.push_str("\n## Outcome breakdown (first replicate)\n\n");
            out.push_str("| Category |");
            for (label, _) in &tally_tables {
                out.push_str(&format!(" {label} P | {label} FE | {label} SE |"));
            }
            out.push('\n');
            out.push_str("|---|");
            for _ in &tally_tables {
                out.push_str("---|---|---|");
            }
            out.push('\n');
            for category in &categories {
                out.push_str(&format!("| {category} |"));
                for table in &tally_tables {
                    let (p, fe, se) = tally_cells(table, category);
                    out.push_str(&format!(" {p} | {fe} | {se} |"));
                }
                out.push('\n');
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from("table,category");
            for (label, _) in &pass_tables {
                out.push_str(&format!(",{label}"));
            }
            out.push('\n');
            for category in &categories {
                out.push_str(&format!("pass_at_1,{category}"));
                for table in &pass_tables {
                    out.push_str(&format!(",{}", pass_cell(table, category)));
                }
                out.push('\n');
            }
            out.push_str("table,category");
            for (label, _) in &tally_tables {
                out.push_str(&format!(",{label}_P,{label}_FE,{label}_SE"));
            }
            out.push('\n');
            for category in &categories {
                out.push_str(&format!("breakdown,{category}"));
                for table in &tally_tables {
                    let (p, fe, se) = tally_cells(table, category);
                    out.push_str(&format!(",{p},{fe},{se}"));
                }
                out.push('\n');
            }
            out
        }
    }
}
