//! Port declaration parsing for the first module in a Verilog source text.
//!
//! Recognized declaration styles:
//! - `Ansi`: direction in the module header, classic types (`input [3:0] a`).
//! - `SystemVerilog`: header or body declaration using `logic`/`bit`/`var`.
//! - `Verilog2001`: body declaration carrying a type or range
//!   (`output reg [7:0] b;`).
//! - `NonAnsi`: bare body declaration (`input a;`) paired with a plain header
//!   name list.
//!
//! Bare header names that never receive a body direction declaration are
//! skipped: without a direction there is nothing the usage checker can say
//! about them. Only the first module of the text is analyzed.

use super::strip::strip_comments_and_strings;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortDirection {
    Input,
    Output,
    Inout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PortStyle {
    #[serde(rename = "ansi")]
    Ansi,
    #[serde(rename = "non_ansi")]
    NonAnsi,
    #[serde(rename = "verilog2001")]
    Verilog2001,
    #[serde(rename = "systemverilog")]
    SystemVerilog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortDecl {
    pub name: String,
    pub direction: PortDirection,
    /// Raw packed-range text, e.g. `[7:0]` or `[W-1:0]`; empty when scalar.
    pub width_text: String,
    pub style: PortStyle,
    /// 1-based line of the port name in the original text.
    pub line: u32,
}

#[derive(Debug, Error)]
pub enum PortParseError {
    #[error("parse gave up: {0}")]
    ParseGaveUp(String),
}

/// Location of the first module declaration inside comment-stripped text.
#[derive(Debug, Clone)]
pub struct ModuleHeader {
    pub name: String,
    /// Byte offset just past the header (after the closing `;` or `)`).
    pub header_end: usize,
    /// Byte offset of the body end (start of `endmodule`, or text end).
    pub body_end: usize,
    /// Interior text of the header port list, if one was present.
    pub port_list: Option<String>,
    /// Byte offset where the port list interior starts.
    pub port_list_start: usize,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

/// Finds the first `module <name>` declaration and the extent of its header
/// and body. Expects comment-stripped input.
pub fn locate_first_module(stripped: &str) -> Result<Option<ModuleHeader>, PortParseError> {
    static MODULE_RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = MODULE_RE.get_or_init(|| {
        regex::Regex::new(r"\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)").expect("static regex")
    });
    let caps = match re.captures(stripped) {
        Some(c) => c,
        None => return Ok(None),
    };
    let name = caps[1].to_string();
    let bytes = stripped.as_bytes();
    let mut pos = caps.get(0).expect("match").end();

    pos = skip_ws(bytes, pos);
    // Optional parameter list: #( ... )
    if bytes.get(pos) == Some(&b'#') {
        pos = skip_ws(bytes, pos + 1);
        if bytes.get(pos) == Some(&b'(') {
            pos = scan_balanced(bytes, pos)
                .ok_or_else(|| PortParseError::ParseGaveUp("unbalanced parentheses in parameter list".into()))?;
        }
    }
    pos = skip_ws(bytes, pos);

    let mut port_list = None;
    let mut port_list_start = pos;
    if bytes.get(pos) == Some(&b'(') {
        let close = scan_balanced(bytes, pos)
            .ok_or_else(|| PortParseError::ParseGaveUp("unbalanced parentheses in port list".into()))?;
        port_list_start = pos + 1;
        port_list = Some(stripped[pos + 1..close - 1].to_string());
        pos = close;
    }
    pos = skip_ws(bytes, pos);
    if bytes.get(pos) == Some(&b';') {
        pos += 1;
    }
    let header_end = pos;

    let body_end = find_word(stripped, "endmodule", header_end).unwrap_or(stripped.len());
    Ok(Some(ModuleHeader {
        name,
        header_end,
        body_end,
        port_list,
        port_list_start,
    }))
}

fn skip_ws(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

/// From an opening `(` at `open`, returns the offset just past the matching
/// close paren, or `None` if unbalanced.
fn scan_balanced(bytes: &[u8], open: usize) -> Option<usize> {
    debug_assert_eq!(bytes[open], b'(');
    let mut depth = 0usize;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        match b {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn find_word(text: &str, word: &str, from: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut start = from;
    while let Some(rel) = text[start..].find(word) {
        let at = start + rel;
        let before_ok = at == 0 || !is_ident_char(bytes[at - 1]);
        let after = at + word.len();
        let after_ok = after >= bytes.len() || !is_ident_char(bytes[after]);
        if before_ok && after_ok {
            return Some(at);
        }
        start = at + word.len();
    }
    None
}

fn line_of(text: &str, offset: usize) -> u32 {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() as u32 + 1
}

const TYPE_KEYWORDS: &[&str] = &[
    "wire", "reg", "logic", "bit", "integer", "real", "time", "signed", "unsigned", "var",
    "tri", "supply0", "supply1", "byte", "shortint", "int", "longint",
];

fn direction_of(word: &str) -> Option<PortDirection> {
    match word {
        "input" => Some(PortDirection::Input),
        "output" => Some(PortDirection::Output),
        "inout" => Some(PortDirection::Inout),
        _ => None,
    }
}

/// One lexical item: an identifier, a bracketed range, or punctuation.
#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String, usize),
    Range(String),
    Assign,
    Comma,
    Other,
}

fn lex_decl(text: &str, base_offset: usize) -> Vec<Tok> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
        } else if is_ident_start(b) {
            let start = i;
            while i < bytes.len() && is_ident_char(bytes[i]) {
                i += 1;
            }
            toks.push(Tok::Ident(text[start..i].to_string(), base_offset + start));
        } else if b == b'[' {
            let start = i;
            let mut depth = 0usize;
            while i < bytes.len() {
                match bytes[i] {
                    b'[' => depth += 1,
                    b']' => {
                        depth -= 1;
                        if depth == 0 {
                            i += 1;
                            break;
                        }
                    }
                    _ => {}
                }
                i += 1;
            }
            toks.push(Tok::Range(text[start..i].to_string()));
        } else if b == b'=' {
            toks.push(Tok::Assign);
            i += 1;
        } else if b == b',' {
            toks.push(Tok::Comma);
            i += 1;
        } else {
            toks.push(Tok::Other);
            i += 1;
        }
    }
    toks
}

struct DeclParse {
    decls: Vec<(String, usize, String)>, // name, offset, width_text
    has_sv_type: bool,
    has_classic_type: bool,
    has_range: bool,
}

/// Parses the tail of one direction declaration (`[type] [range] name [, name]*`)
/// with optional `= init` parts, which are skipped.
fn parse_decl_tail(text: &str, base_offset: usize) -> DeclParse {
    let toks = lex_decl(text, base_offset);
    let mut width = String::new();
    let mut has_sv_type = false;
    let mut has_classic_type = false;
    let mut has_range = false;
    let mut decls = Vec::new();
    let mut skipping_init = false;
    for tok in toks {
        match tok {
            Tok::Ident(word, off) => {
                if skipping_init {
                    continue;
                }
                if TYPE_KEYWORDS.contains(&word.as_str()) {
                    if matches!(word.as_str(), "logic" | "bit" | "var" | "byte" | "shortint" | "int" | "longint") {
                        has_sv_type = true;
                    } else if matches!(word.as_str(), "wire" | "reg" | "tri" | "integer" | "supply0" | "supply1") {
                        has_classic_type = true;
                    }
                } else {
                    decls.push((word, off, width.clone()));
                }
            }
            Tok::Range(r) => {
                if skipping_init {
                    continue;
                }
                if decls.is_empty() {
                    // Packed range before any name applies to the whole list.
                    width.push_str(&r);
                    has_range = true;
                }
                // Ranges after a name are unpacked dimensions; ignored.
            }
            Tok::Assign => skipping_init = true,
            Tok::Comma => skipping_init = false,
            Tok::Other => {}
        }
    }
    DeclParse {
        decls,
        has_sv_type,
        has_classic_type,
        has_range,
    }
}

/// Splits text on commas at zero bracket/paren/brace depth.
fn split_top_commas(text: &str) -> Vec<(usize, &str)> {
    let bytes = text.as_bytes();
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0usize;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b',' if depth == 0 => {
                parts.push((start, &text[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push((start, &text[start..]));
    parts
}

/// Extracts the port declarations of the first module in `code`.
pub fn parse_ports(code: &str) -> Result<Vec<PortDecl>, PortParseError> {
    let stripped = strip_comments_and_strings(code);
    let header = match locate_first_module(&stripped)? {
        Some(h) => h,
        None => return Ok(Vec::new()),
    };

    // Header pass: ANSI/SystemVerilog declarations plus bare names.
    let mut header_ports: Vec<PortDecl> = Vec::new();
    let mut bare_names: Vec<String> = Vec::new();
    if let Some(list) = &header.port_list {
        let mut current: Option<(PortDirection, String, PortStyle)> = None;
        for (part_off, item) in split_top_commas(list) {
            let abs = header.port_list_start + part_off;
            let trimmed = item.trim();
            if trimmed.is_empty() {
                continue;
            }
            let toks = lex_decl(item, abs);
            let first_word = toks.iter().find_map(|t| match t {
                Tok::Ident(w, _) => Some(w.clone()),
                _ => None,
            });
            if let Some(dir) = first_word.as_deref().and_then(direction_of) {
                let dir_end = item.find(first_word.as_deref().unwrap()).unwrap_or(0)
                    + first_word.as_deref().unwrap().len();
                let parsed = parse_decl_tail(&item[dir_end..], abs + dir_end);
                let style = if parsed.has_sv_type {
                    PortStyle::SystemVerilog
                } else {
                    PortStyle::Ansi
                };
                let width = parsed
                    .decls
                    .first()
                    .map(|d| d.2.clone())
                    .unwrap_or_default();
                for (name, off, w) in &parsed.decls {
                    header_ports.push(PortDecl {
                        name: name.clone(),
                        direction: dir,
                        width_text: w.clone(),
                        style,
                        line: line_of(&stripped, *off),
                    });
                }
                current = Some((dir, width, style));
            } else if let Some((dir, width, style)) = current.clone() {
                // Direction carries through the comma list.
                if let Some(Tok::Ident(name, off)) = toks.iter().find(|t| matches!(t, Tok::Ident(..))) {
                    header_ports.push(PortDecl {
                        name: name.clone(),
                        direction: dir,
                        width_text: width,
                        style,
                        line: line_of(&stripped, *off),
                    });
                }
            } else if let Some(Tok::Ident(name, _)) = toks.iter().find(|t| matches!(t, Tok::Ident(..))) {
                bare_names.push(name.clone());
            }
        }
    }

    // Body pass: non-ANSI and Verilog-2001 declarations.
    let body = &stripped[header.header_end..header.body_end];
    static BODY_DECL_RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = BODY_DECL_RE.get_or_init(|| {
        regex::Regex::new(r"(?s)\b(input|output|inout)\b([^;]*);").expect("static regex")
    });
    let mut body_ports: Vec<PortDecl> = Vec::new();
    for caps in re.captures_iter(body) {
        let dir = direction_of(&caps[1]).expect("matched direction");
        let tail = caps.get(2).expect("tail");
        let parsed = parse_decl_tail(tail.as_str(), header.header_end + tail.start());
        let style = if parsed.has_sv_type {
            PortStyle::SystemVerilog
        } else if parsed.has_classic_type || parsed.has_range {
            PortStyle::Verilog2001
        } else {
            PortStyle::NonAnsi
        };
        for (name, off, w) in &parsed.decls {
            body_ports.push(PortDecl {
                name: name.clone(),
                direction: dir,
                width_text: w.clone(),
                style,
                line: line_of(&stripped, *off),
            });
        }
    }

    // Merge. Header declarations win over body duplicates; bare header names
    // take their declaration from the body, in header order.
    let mut ports = Vec::new();
    let mut taken: Vec<String> = Vec::new();
    if header.port_list.is_some() {
        for p in &header_ports {
            if !taken.contains(&p.name) {
                taken.push(p.name.clone());
                ports.push(p.clone());
            }
        }
        for bare in &bare_names {
            if taken.contains(bare) {
                continue;
            }
            if let Some(decl) = body_ports.iter().find(|p| &p.name == bare) {
                taken.push(bare.clone());
                ports.push(decl.clone());
            }
        }
    } else {
        // Headerless (`module m;`): accept body declarations as the port set.
        for p in &body_ports {
            if !taken.contains(&p.name) {
                taken.push(p.name.clone());
                ports.push(p.clone());
            }
        }
    }
    Ok(ports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(ports: &[PortDecl]) -> Vec<&str> {
        ports.iter().map(|p| p.name.as_str()).collect()
    }

    #[test]
    fn ansi_header() {
        let ports = parse_ports("module m(input a, output b); endmodule").unwrap();
        assert_eq!(names(&ports), ["a", "b"]);
        assert_eq!(ports[0].direction, PortDirection::Input);
        assert_eq!(ports[0].style, PortStyle::Ansi);
        assert_eq!(ports[1].direction, PortDirection::Output);
    }

    #[test]
    fn non_ansi_and_verilog2001_body() {
        let ports = parse_ports("module m(a,b); input a; output [7:0] b; endmodule").unwrap();
        assert_eq!(names(&ports), ["a", "b"]);
        assert_eq!(ports[0].style, PortStyle::NonAnsi);
        assert_eq!(ports[1].style, PortStyle::Verilog2001);
        assert_eq!(ports[1].width_text, "[7:0]");
    }

    #[test]
    fn direction_carries_through_commas() {
        let ports = parse_ports("module m(input a, b, c, output d); endmodule").unwrap();
        assert_eq!(names(&ports), ["a", "b", "c", "d"]);
        assert!(ports[..3].iter().all(|p| p.direction == PortDirection::Input));
        assert_eq!(ports[3].direction, PortDirection::Output);
    }

    #[test]
    fn systemverilog_typed_header() {
        let ports =
            parse_ports("module m(input logic signed [W-1:0] x, output bit y); endmodule").unwrap();
        assert_eq!(ports[0].style, PortStyle::SystemVerilog);
        assert_eq!(ports[0].width_text, "[W-1:0]");
        assert_eq!(ports[1].style, PortStyle::SystemVerilog);
    }

    #[test]
    fn unbalanced_port_list_gives_up() {
        let err = parse_ports("module m(input a, output b; endmodule").unwrap_err();
        assert!(matches!(err, PortParseError::ParseGaveUp(_)));
    }

    #[test]
    fn comments_do_not_change_ports() {
        let plain = parse_ports("module m(input a, output b); endmodule").unwrap();
        let commented =
            parse_ports("module m(/* x */ input a, // c\n output b); endmodule").unwrap();
        assert_eq!(plain, commented);
    }

    #[test]
    fn first_module_only() {
        let src = "module a(input x); endmodule module b(input y, input z); endmodule";
        let ports = parse_ports(src).unwrap();
        assert_eq!(names(&ports), ["x"]);
    }

    #[test]
    fn parameter_list_is_skipped() {
        let ports =
            parse_ports("module m #(parameter W = 8) (input [W-1:0] d, output q); endmodule")
                .unwrap();
        assert_eq!(names(&ports), ["d", "q"]);
        assert_eq!(ports[0].width_text, "[W-1:0]");
    }

    #[test]
    fn no_module_yields_empty() {
        assert!(parse_ports("wire x; assign x = 0;").unwrap().is_empty());
    }

    #[test]
    fn inout_supported() {
        let ports = parse_ports("module m(inout [3:0] pad); endmodule").unwrap();
        assert_eq!(ports[0].direction, PortDirection::Inout);
    }
}
