//! Tokenization, lemma-name extraction and the exact-match use detectors.

use crate::runlog::{normalize_newlines, LemmaRecord};

/// Whitespace-delimited tokens of a text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    /// Character count of the source text.
    pub source_len: usize,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Splits on maximal runs of whitespace.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq {
        tokens: text.split_whitespace().map(str::to_owned).collect(),
        source_len: text.chars().count(),
    }
}

pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Name of the first `lemma`/`theorem` declared in `text`.
///
/// The keyword must be a whole token; the name is the following token cut at
/// its first `:`. Nameless declarations (`lemma "P x"`, `lemma [simp]: ...`,
/// `lemma : ...`) yield `None`.
pub fn extract_name(text: &str) -> Option<String> {
    let mut tokens = text.split_whitespace();
    tokens.find(|t| *t == "lemma" || *t == "theorem")?;
    let candidate = tokens.next()?;
    let name = candidate.split(':').next().unwrap_or("");
    if name.is_empty() || name.starts_with('"') || name.starts_with('[') {
        return None;
    }
    Some(name.to_string())
}

/// Identifier characters for whole-word name matching.
pub fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NameMatch {
    /// The name must be delimited by non-identifier characters.
    #[default]
    WholeWord,
    /// Any occurrence counts, including inside longer identifiers.
    Substring,
}

/// True iff the lemma text appears contiguously in the solution.
pub fn verbatim_used(lemma: &LemmaRecord, solution: &str) -> bool {
    text_contains(solution, &lemma.text)
}

pub(crate) fn text_contains(haystack: &str, needle: &str) -> bool {
    if haystack.contains('\r') || needle.contains('\r') {
        normalize_newlines(haystack).contains(&normalize_newlines(needle))
    } else {
        haystack.contains(needle)
    }
}

/// True iff the lemma has a name and it occurs in the solution.
pub fn name_used(lemma: &LemmaRecord, solution: &str, mode: NameMatch) -> bool {
    match &lemma.name {
        Some(name) if !name.is_empty() => contains_name(solution, name, mode),
        _ => false,
    }
}

pub fn contains_name(haystack: &str, name: &str, mode: NameMatch) -> bool {
    match mode {
        NameMatch::Substring => haystack.contains(name),
        NameMatch::WholeWord => haystack.match_indices(name).any(|(start, m)| {
            let before = haystack[..start].chars().next_back();
            let after = haystack[start + m.len()..].chars().next();
            !before.is_some_and(is_ident_char) && !after.is_some_and(is_ident_char)
        }),
    }
}
