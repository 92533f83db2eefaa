//! Shared text utilities: keyword extraction, whole-word matching, and
//! sentence splitting. These are the deterministic primitives behind context
//! retrieval, example selection, and plan decomposition.

use std::collections::BTreeSet;

/// Built-in stopword list applied by [`keyword_set`].
///
/// Fixed set of common English words that carry no retrieval signal for
/// hardware specs. Words shorter than three characters are filtered by the
/// length rule regardless, but are kept here so the list reads as one unit.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "all", "also", "an", "and", "any", "are", "as", "at",
    "based", "be", "been", "but", "by", "can", "could", "does", "each", "for", "from", "has",
    "have", "how", "its", "into", "is", "it", "may", "more", "most", "must", "not", "of", "on",
    "one", "only", "or", "other", "our", "shall", "should", "some", "such", "than", "that",
    "the", "their", "then", "there", "these", "they", "this", "to", "use", "used", "using",
    "was", "were", "which", "will", "with", "would", "you",
];

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Iterates over identifier-like tokens (`[A-Za-z0-9_]+` runs) in `text`.
pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !is_ident_char(c)).filter(|t| !t.is_empty())
}

/// The keyword set K(text): lowercased identifier-like tokens of length >= 3
/// with stopwords removed.
pub fn keyword_set(text: &str) -> BTreeSet<String> {
    tokens(text)
        .map(|t| t.to_ascii_lowercase())
        .filter(|t| t.len() >= 3 && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// Whole-word, case-insensitive containment check.
pub fn contains_word_ci(text: &str, word: &str) -> bool {
    let needle = word.to_ascii_lowercase();
    tokens(text).any(|t| t.eq_ignore_ascii_case(&needle))
}

/// Splits prose into sentences at `.`, `!`, `?`, or blank-line/newline breaks.
///
/// Each returned sentence is trimmed and keeps its terminal punctuation.
/// Abbreviation-aware splitting is deliberately out of scope: the split only
/// has to be deterministic and total (every non-blank character lands in
/// exactly one sentence).
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        match c {
            '.' | '!' | '?' => {
                current.push(c);
                flush(&mut current, &mut out);
            }
            '\n' => flush(&mut current, &mut out),
            _ => current.push(c),
        }
    }
    flush(&mut current, &mut out);
    out
}

fn flush(current: &mut String, out: &mut Vec<String>) {
    let s = current.trim();
    if !s.is_empty() && s.chars().any(|c| is_ident_char(c)) {
        out.push(s.to_string());
    }
    current.clear();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_set_lowercases_filters_and_dedups() {
        let k = keyword_set("The FIFO depth is 16; the fifo_ctrl handles depth");
        assert!(k.contains("fifo"));
        assert!(k.contains("fifo_ctrl"));
        assert!(k.contains("depth"));
        assert!(!k.contains("the")); // stopword
        assert!(!k.contains("is")); // too short
        assert!(!k.contains("16")); // too short
    }

    #[test]
    fn whole_word_matching() {
        assert!(contains_word_ci("the Output q", "output"));
        assert!(!contains_word_ci("the outputs q", "output"));
        assert!(!contains_word_ci("endmodule", "module"));
    }

    #[test]
    fn sentence_split_counts() {
        let s = split_sentences("Count up each cycle. The output q is 8 bits. Handle overflow by wrapping.");
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], "Count up each cycle.");
    }

    #[test]
    fn sentence_split_newlines_and_blanks() {
        let s = split_sentences("first line\nsecond line\n\n...\n");
        assert_eq!(s, vec!["first line", "second line"]);
    }
}
