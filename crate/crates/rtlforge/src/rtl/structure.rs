//! Four-point code structure checklist feeding the quality scorer's
//! structure component.

use super::ports::locate_first_module;
use super::strip::strip_comments_and_strings;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeStructureReport {
    pub has_module_pair: bool,
    pub balanced_begin_end: bool,
    pub no_placeholders: bool,
    pub name_matches_request: bool,
    /// Passed checks divided by four.
    pub fraction: f64,
}

fn count_word(text: &str, word: &str) -> usize {
    let ident = |b: u8| b.is_ascii_alphanumeric() || b == b'_' || b == b'$';
    let bytes = text.as_bytes();
    let mut count = 0;
    let mut start = 0;
    while let Some(rel) = text[start..].find(word) {
        let at = start + rel;
        let end = at + word.len();
        let before_ok = at == 0 || !ident(bytes[at - 1]);
        let after_ok = end >= bytes.len() || !ident(bytes[end]);
        if before_ok && after_ok {
            count += 1;
        }
        start = at + word.len();
    }
    count
}

/// Runs the structure checklist. Placeholder markers are searched in the raw
/// text so `// TODO` comments are caught too.
pub fn score_structure(code: &str, requested_module_name: Option<&str>) -> CodeStructureReport {
    let stripped = strip_comments_and_strings(code);

    let modules = count_word(&stripped, "module");
    let endmodules = count_word(&stripped, "endmodule");
    let has_module_pair = modules >= 1 && modules == endmodules;

    let balanced_begin_end =
        count_word(&stripped, "begin") == count_word(&stripped, "end");

    let no_placeholders =
        !code.contains("TODO") && !code.contains("FIXME") && !code.contains("...");

    let name_matches_request = match requested_module_name {
        None => true,
        Some(requested) => match locate_first_module(&stripped) {
            Ok(Some(header)) => header.name == requested,
            _ => false,
        },
    };

    let passed = [has_module_pair, balanced_begin_end, no_placeholders, name_matches_request]
        .iter()
        .filter(|&&b| b)
        .count();
    CodeStructureReport {
        has_module_pair,
        balanced_begin_end,
        no_placeholders,
        name_matches_request,
        fraction: passed as f64 / 4.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COUNTER: &str = "module counter(input clk, input rst, output reg [7:0] q);
  always @(posedge clk) begin
    if (rst) q <= 8'd0;
    else q <= q + 8'd1;
  end
endmodule
";

    #[test]
    fn well_formed_module_scores_one() {
        let r = score_structure(COUNTER, Some("counter"));
        assert_eq!(r.fraction, 1.0);
    }

    #[test]
    fn todo_placeholder_fails_check() {
        let code = format!("// TODO: finish\n{COUNTER}");
        let r = score_structure(&code, None);
        assert!(!r.no_placeholders);
        assert!(r.fraction <= 0.75);
    }

    #[test]
    fn unbalanced_begin_end() {
        let r = score_structure("module m; initial begin x = 1; endmodule", None);
        assert!(!r.balanced_begin_end);
    }

    #[test]
    fn name_mismatch() {
        let r = score_structure(COUNTER, Some("fifo"));
        assert!(!r.name_matches_request);
    }

    #[test]
    fn endmodule_only_words_counted() {
        // `endmodule` must not inflate the `module` count, nor `endcase` the
        // `end` count.
        let r = score_structure(
            "module m; always @(*) begin case (1'b0) default: ; endcase end endmodule",
            None,
        );
        assert!(r.has_module_pair);
        assert!(r.balanced_begin_end);
    }
}
