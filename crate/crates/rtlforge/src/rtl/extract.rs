//! Candidate extraction from raw model output.
//!
//! Rule precedence: the last fenced code block whose body contains `module`,
//! else the span from the first `module` keyword to the last `endmodule`,
//! else (comprehension tasks only) the whole text. Prose outside the chosen
//! span is discarded, and fence delimiter lines never survive extraction.

use crate::dataset::TaskKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractionRule {
    FencedBlock,
    ModuleSpan,
    WholeText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedCandidate {
    pub code: String,
    /// Byte offsets into the raw model text the code was taken from.
    pub source_span: (usize, usize),
    pub extraction_rule: ExtractionRule,
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("no Verilog code found in model output")]
    NoCodeFound,
}

fn is_fence_line(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn drop_fence_lines(text: &str) -> String {
    text.lines()
        .filter(|l| !is_fence_line(l))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Byte ranges of fenced block bodies, in document order. An unterminated
/// fence (common when generation hits the output-token limit) runs to the
/// end of the text.
fn fenced_bodies(raw: &str) -> Vec<(usize, usize)> {
    let mut bodies = Vec::new();
    let mut open: Option<usize> = None;
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        if is_fence_line(line) {
            match open.take() {
                None => open = Some(offset + line.len()),
                Some(start) => bodies.push((start, offset)),
            }
        }
        offset += line.len();
    }
    if let Some(start) = open {
        if start < raw.len() {
            bodies.push((start, raw.len()));
        }
    }
    bodies
}

fn word_positions(text: &str, word: &str) -> Vec<usize> {
    let bytes = text.as_bytes();
    let ident = |b: u8| b.is_ascii_alphanumeric() || b == b'_' || b == b'$';
    let mut out = Vec::new();
    let mut start = 0;
    while let Some(rel) = text[start..].find(word) {
        let at = start + rel;
        let before_ok = at == 0 || !ident(bytes[at - 1]);
        let end = at + word.len();
        let after_ok = end >= bytes.len() || !ident(bytes[end]);
        if before_ok && after_ok {
            out.push(at);
        }
        start = at + word.len();
    }
    out
}

/// Pulls the Verilog candidate out of a raw model reply.
pub fn extract_code(raw: &str, kind: TaskKind) -> Result<ExtractedCandidate, ExtractError> {
    // Rule 1: last fenced block holding a module. The block must also carry
    // `endmodule`, otherwise the candidate is a truncation fragment and the
    // module-span rule (or extraction failure) handles it.
    if let Some(&(start, end)) = fenced_bodies(raw)
        .iter()
        .filter(|&&(s, e)| raw[s..e].contains("module") && raw[s..e].contains("endmodule"))
        .next_back()
    {
        let code = drop_fence_lines(raw[start..end].trim_matches('\n'));
        if !code.trim().is_empty() {
            return Ok(ExtractedCandidate {
                code,
                source_span: (start, end),
                extraction_rule: ExtractionRule::FencedBlock,
            });
        }
    }

    // Rule 2: first `module` keyword through the last `endmodule`.
    let module_starts = word_positions(raw, "module");
    let endmodule_starts = word_positions(raw, "endmodule");
    if let (Some(&first), Some(&last)) = (module_starts.first(), endmodule_starts.last()) {
        let end = last + "endmodule".len();
        if first < end {
            let code = drop_fence_lines(&raw[first..end]);
            if !code.trim().is_empty() {
                return Ok(ExtractedCandidate {
                    code,
                    source_span: (first, end),
                    extraction_rule: ExtractionRule::ModuleSpan,
                });
            }
        }
    }

    // Rule 3: whole text, for comprehension tasks only.
    if kind == TaskKind::Comprehension {
        let code = drop_fence_lines(raw);
        if !code.trim().is_empty() {
            return Ok(ExtractedCandidate {
                code,
                source_span: (0, raw.len()),
                extraction_rule: ExtractionRule::WholeText,
            });
        }
    }
    Err(ExtractError::NoCodeFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_block_wins_over_prose() {
        let raw = "Let me think about this.\n```verilog\nmodule m;\nendmodule\n```\nHope that helps!";
        let c = extract_code(raw, TaskKind::Generation).unwrap();
        assert_eq!(c.extraction_rule, ExtractionRule::FencedBlock);
        assert_eq!(c.code, "module m;\nendmodule");
    }

    #[test]
    fn last_module_block_is_chosen() {
        let raw = "```\nnot verilog\n```\nfirst try:\n```verilog\nmodule a; endmodule\n```\nbetter:\n```verilog\nmodule b; endmodule\n```";
        let c = extract_code(raw, TaskKind::Generation).unwrap();
        assert!(c.code.contains("module b"));
        assert!(!c.code.contains("module a"));
    }

    #[test]
    fn bare_module_span() {
        let raw = "module m;\nendmodule";
        let c = extract_code(raw, TaskKind::Generation).unwrap();
        assert_eq!(c.extraction_rule, ExtractionRule::ModuleSpan);
        assert_eq!(c.code, raw);
    }

    #[test]
    fn module_span_trims_surrounding_prose() {
        let raw = "Sure! Here it is: module m; wire x; endmodule Done.";
        let c = extract_code(raw, TaskKind::Generation).unwrap();
        assert_eq!(c.code, "module m; wire x; endmodule");
    }

    #[test]
    fn endmodule_alone_does_not_count_as_module_keyword() {
        // "endmodule" must not satisfy the `module` keyword search.
        let raw = "only endmodule here";
        assert!(extract_code(raw, TaskKind::Generation).is_err());
    }

    #[test]
    fn generation_without_code_errors() {
        assert!(matches!(
            extract_code("I think the answer is 42", TaskKind::Generation),
            Err(ExtractError::NoCodeFound)
        ));
    }

    #[test]
    fn comprehension_falls_back_to_whole_text() {
        let c = extract_code("The golden model lives in model_system().", TaskKind::Comprehension).unwrap();
        assert_eq!(c.extraction_rule, ExtractionRule::WholeText);
    }

    #[test]
    fn whole_text_drops_fence_lines() {
        let c = extract_code("answer:\n```text\nno hdl here\n```", TaskKind::Comprehension).unwrap();
        assert!(!c.code.contains("```"));
        assert!(c.code.contains("no hdl here"));
    }

    #[test]
    fn unterminated_fence_is_recovered() {
        let raw = "```verilog\nmodule cut_off(input a);\nendmodule\n";
        let c = extract_code(raw, TaskKind::Generation).unwrap();
        assert_eq!(c.extraction_rule, ExtractionRule::FencedBlock);
        assert!(c.code.contains("module cut_off"));
    }

    #[test]
    fn truncated_fragment_is_rejected_for_generation() {
        let raw = "```verilog\nmodule cut_off(input a);\n";
        assert!(extract_code(raw, TaskKind::Generation).is_err());
    }
}
