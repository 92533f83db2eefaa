//! Zombie-port detection: inputs that are never read and outputs that are
//! never driven by the module body.
//!
//! An input counts as used when its name appears as a whole-word token in the
//! body outside its own declaration. An output counts as driven when it
//! appears on the left of a continuous assign, on the left of a procedural
//! `=`/`<=`, in a declaration initializer, or as an actual in a module
//! instantiation port map. `<=` comparisons inside conditions can be mistaken
//! for nonblocking assignments; that over-approximation is accepted at this
//! parsing grade.

use super::ports::{locate_first_module, PortDecl, PortDirection};
use super::strip::strip_comments_and_strings;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::OnceLock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortUsageReport {
    pub module_name: String,
    pub ports: Vec<PortDecl>,
    pub unused_inputs: Vec<String>,
    pub undriven_outputs: Vec<String>,
    pub usage_fraction: f64,
}

impl PortUsageReport {
    pub fn empty() -> Self {
        PortUsageReport {
            module_name: String::new(),
            ports: Vec::new(),
            unused_inputs: Vec::new(),
            undriven_outputs: Vec::new(),
            usage_fraction: 1.0,
        }
    }

    pub fn has_zombies(&self) -> bool {
        !self.unused_inputs.is_empty() || !self.undriven_outputs.is_empty()
    }

    /// Renders findings in the phrasing the feedback body embeds verbatim.
    pub fn findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for name in &self.unused_inputs {
            out.push(format!("input {name} declared but never used"));
        }
        for name in &self.undriven_outputs {
            out.push(format!("output {name} declared but never driven"));
        }
        out
    }
}

fn ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn contains_word(text: &str, word: &str) -> bool {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(rel) = text[start..].find(word) {
        let at = start + rel;
        let before_ok = at == 0 || !ident_char(bytes[at - 1]);
        let end = at + word.len();
        let after_ok = end >= bytes.len() || !ident_char(bytes[end]);
        if before_ok && after_ok {
            return true;
        }
        start = at + word.len();
    }
    false
}

fn identifiers(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_alphabetic() || bytes[i] == b'_' {
            let start = i;
            while i < bytes.len() && ident_char(bytes[i]) {
                i += 1;
            }
            out.push(text[start..i].to_string());
        } else {
            i += 1;
        }
    }
    out
}

// Keywords that must not be mistaken for an instantiated module type or an
// instance name. Gate primitives (and/or/not/...) are intentionally absent:
// `and u1 (y, a, b);` is a real drive of `y`.
const STATEMENT_KEYWORDS: &[&str] = &[
    "module", "endmodule", "begin", "end", "if", "else", "case", "casex", "casez", "endcase",
    "always", "always_ff", "always_comb", "always_latch", "initial", "assign", "wire", "reg",
    "logic", "bit", "integer", "real", "genvar", "generate", "endgenerate", "for", "while",
    "repeat", "forever", "function", "endfunction", "task", "endtask", "parameter",
    "localparam", "input", "output", "inout", "posedge", "negedge",
    "default", "wait", "fork", "join", "specify", "endspecify", "defparam",
];

/// Masks body port-declaration statements and collects names driven by a
/// declaration initializer (`output reg q = 1'b0;`).
fn mask_port_decls(body: &str) -> (String, BTreeSet<String>) {
    static DECL_RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = DECL_RE.get_or_init(|| {
        regex::Regex::new(r"(?s)\b(?:input|output|inout)\b[^;]*;").expect("static regex")
    });
    let mut masked = body.to_string();
    let mut initialized = BTreeSet::new();
    for m in re.find_iter(body) {
        let stmt = m.as_str();
        // `name = init` inside the declaration drives the name.
        for id in identifiers(stmt) {
            if let Some(pos) = stmt.find(id.as_str()) {
                let rest = stmt[pos + id.len()..].trim_start();
                if rest.starts_with('=') && !rest.starts_with("==") {
                    initialized.insert(id);
                }
            }
        }
        let blanked: String = stmt.chars().map(|c| if c == '\n' { '\n' } else { ' ' }).collect();
        masked.replace_range(m.range(), &blanked);
    }
    (masked, initialized)
}

/// Names driven by continuous assigns: identifiers on the left of the first
/// `=` of each `assign` statement.
fn assign_lhs_names(masked: &str) -> BTreeSet<String> {
    static ASSIGN_RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = ASSIGN_RE
        .get_or_init(|| regex::Regex::new(r"(?s)\bassign\b([^=;]*)=").expect("static regex"));
    let mut out = BTreeSet::new();
    for caps in re.captures_iter(masked) {
        for id in identifiers(&caps[1]) {
            out.insert(id);
        }
    }
    out
}

/// True when `name` appears followed (after optional bit/part selects) by a
/// procedural `=` or `<=`.
fn procedurally_assigned(masked: &str, name: &str) -> bool {
    let bytes = masked.as_bytes();
    let mut start = 0;
    while let Some(rel) = masked[start..].find(name) {
        let at = start + rel;
        let end = at + name.len();
        let before_ok = at == 0 || !ident_char(bytes[at - 1]);
        let after_ok = end >= bytes.len() || !ident_char(bytes[end]);
        start = at + name.len();
        if !(before_ok && after_ok) {
            continue;
        }
        let mut i = end;
        loop {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'[' {
                let mut depth = 0usize;
                while i < bytes.len() {
                    match bytes[i] {
                        b'[' => depth += 1,
                        b']' => {
                            depth -= 1;
                            i += 1;
                            if depth == 0 {
                                break;
                            }
                            continue;
                        }
                        _ => {}
                    }
                    i += 1;
                }
                continue;
            }
            break;
        }
        if i < bytes.len() {
            if bytes[i] == b'=' && bytes.get(i + 1) != Some(&b'=') {
                return true;
            }
            if bytes[i] == b'<' && bytes.get(i + 1) == Some(&b'=') {
                return true;
            }
            // Concatenation LHS: `{a, b} <= ...` is handled by the caller via
            // brace groups; nothing to do here.
        }
    }
    false
}

/// Identifiers inside `{...}` groups that are followed by `=` or `<=`.
fn concat_lhs_names(masked: &str) -> BTreeSet<String> {
    static CONCAT_RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = CONCAT_RE.get_or_init(|| {
        regex::Regex::new(r"(?s)\{([^{}]*)\}\s*(<=|=[^=])").expect("static regex")
    });
    let mut out = BTreeSet::new();
    for caps in re.captures_iter(masked) {
        for id in identifiers(&caps[1]) {
            out.insert(id);
        }
    }
    out
}

/// Identifiers connected as actuals in module instantiations, both named
/// (`.port(sig)`) and positional (`adder u0 (a, b, sum);`).
fn instantiation_actuals(masked: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    // Named connections anywhere: the formal after '.' is skipped, the
    // expression inside the parens is kept.
    static NAMED_RE: OnceLock<regex::Regex> = OnceLock::new();
    let named = NAMED_RE.get_or_init(|| {
        regex::Regex::new(r"(?s)\.\s*[A-Za-z_][A-Za-z0-9_$]*\s*\(([^()]*)\)").expect("static regex")
    });
    for caps in named.captures_iter(masked) {
        for id in identifiers(&caps[1]) {
            out.insert(id);
        }
    }
    // Positional instantiations: `type [#(...)] instance ( actuals );`
    static POS_RE: OnceLock<regex::Regex> = OnceLock::new();
    let pos = POS_RE.get_or_init(|| {
        regex::Regex::new(
            r"(?s)\b([A-Za-z_][A-Za-z0-9_$]*)\s*(?:#\s*\([^()]*\)\s*)?([A-Za-z_][A-Za-z0-9_$]*)\s*\(([^()]*)\)\s*;",
        )
        .expect("static regex")
    });
    for caps in pos.captures_iter(masked) {
        let kind = &caps[1];
        let inst = &caps[2];
        if STATEMENT_KEYWORDS.contains(&kind) || STATEMENT_KEYWORDS.contains(&inst) {
            continue;
        }
        if caps[3].contains('.') {
            continue; // named form already handled
        }
        for id in identifiers(&caps[3]) {
            out.insert(id);
        }
    }
    out
}

/// Scans the first module's body for reads of inputs and drives of outputs.
pub fn analyze_port_usage(code: &str, ports: &[PortDecl]) -> PortUsageReport {
    let stripped = strip_comments_and_strings(code);
    let header = match locate_first_module(&stripped) {
        Ok(Some(h)) => h,
        _ => {
            let mut report = PortUsageReport::empty();
            report.ports = ports.to_vec();
            return report;
        }
    };
    let body = &stripped[header.header_end..header.body_end];
    let (masked, initialized) = mask_port_decls(body);

    let assign_lhs = assign_lhs_names(&masked);
    let concat_lhs = concat_lhs_names(&masked);
    let connected = instantiation_actuals(&masked);

    let mut unused_inputs = Vec::new();
    let mut undriven_outputs = Vec::new();
    for port in ports {
        match port.direction {
            PortDirection::Input => {
                if !contains_word(&masked, &port.name) {
                    unused_inputs.push(port.name.clone());
                }
            }
            PortDirection::Output => {
                let driven = assign_lhs.contains(&port.name)
                    || concat_lhs.contains(&port.name)
                    || initialized.contains(&port.name)
                    || connected.contains(&port.name)
                    || procedurally_assigned(&masked, &port.name);
                if !driven {
                    undriven_outputs.push(port.name.clone());
                }
            }
            PortDirection::Inout => {}
        }
    }

    let usage_fraction = if ports.is_empty() {
        1.0
    } else {
        (ports.len() - unused_inputs.len() - undriven_outputs.len()) as f64 / ports.len() as f64
    };
    PortUsageReport {
        module_name: header.name,
        ports: ports.to_vec(),
        unused_inputs,
        undriven_outputs,
        usage_fraction,
    }
}
