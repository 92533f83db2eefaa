/// Replaces comment bodies and string-literal contents with spaces.
///
/// Newlines inside block comments survive, so byte offsets and line numbers
/// in the result line up with the original text. String quotes are kept so
/// the lexical shape of statements is preserved.
pub fn strip_comments_and_strings(code: &str) -> String {
    #[derive(PartialEq)]
    enum St {
        Normal,
        LineComment,
        BlockComment,
        Str,
    }
    let mut out = String::with_capacity(code.len());
    let mut st = St::Normal;
    let mut chars = code.chars().peekable();
    while let Some(c) = chars.next() {
        match st {
            St::Normal => match c {
                '/' if chars.peek() == Some(&'/') => {
                    chars.next();
                    out.push_str("  ");
                    st = St::LineComment;
                }
                '/' if chars.peek() == Some(&'*') => {
                    chars.next();
                    out.push_str("  ");
                    st = St::BlockComment;
                }
                '"' => {
                    out.push('"');
                    st = St::Str;
                }
                _ => out.push(c),
            },
            St::LineComment => {
                if c == '\n' {
                    out.push('\n');
                    st = St::Normal;
                } else {
                    out.push(blank(c));
                }
            }
            St::BlockComment => {
                if c == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    out.push_str("  ");
                    st = St::Normal;
                } else if c == '\n' {
                    out.push('\n');
                } else {
                    out.push(blank(c));
                }
            }
            St::Str => match c {
                '\\' => {
                    out.push(' ');
                    if let Some(next) = chars.next() {
                        out.push(blank(next));
                    }
                }
                '"' => {
                    out.push('"');
                    st = St::Normal;
                }
                '\n' => out.push('\n'),
                _ => out.push(' '),
            },
        }
    }
    out
}

fn blank(c: char) -> char {
    if c == '\n' {
        '\n'
    } else {
        ' '
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_line_and_block_comments() {
        let src = "module m; // input fake\n/* output\n also fake */ endmodule";
        let s = strip_comments_and_strings(src);
        assert!(!s.contains("fake"));
        assert!(s.contains("module m;"));
        assert!(s.contains("endmodule"));
        assert_eq!(s.lines().count(), src.lines().count());
    }

    #[test]
    fn strips_string_contents_keeps_quotes() {
        let s = strip_comments_and_strings("$display(\"input x\");");
        assert!(!s.contains("input"));
        assert!(s.contains('"'));
        assert_eq!(s.len(), "$display(\"input x\");".len());
    }

    #[test]
    fn escaped_quote_does_not_end_string() {
        let s = strip_comments_and_strings(r#"a = "x\"y"; input b;"#);
        assert!(s.contains("input b;"));
        assert!(!s.contains('y'));
    }
}
