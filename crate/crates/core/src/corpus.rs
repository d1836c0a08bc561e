//! Lemma extraction from Isabelle theory archives.
//!
//! [`extract_lemmas`] yields exactly the matches of the backtracking pattern
//!
//! ```text
//! (?:lemma|theorem)\s+[^:]+?\s*:(?:[\s\S](?!lemma|theorem))+?qed
//! ```
//!
//! scanned leftmost-first without overlap, as Python's `re.finditer` would.
//! Operationally, a match starting at keyword position `s` exists iff
//!
//! 1. the keyword is followed by whitespace;
//! 2. the text between the keyword and the first `:` after it has at least
//!    two characters (the pattern needs one for `\s+` and one for `[^:]+?`);
//! 3. after that colon, at least one character precedes the first `qed`;
//! 4. no `lemma`/`theorem` starts strictly after the first body character and
//!    before that `qed`.
//!
//! The match then ends right after the `qed`. Blocks whose proof contains a
//! nested `qed`, or whose body mentions `lemma`/`theorem`, are truncated or
//! dropped exactly as the pattern would.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;
use walkdir::WalkDir;

use crate::lexref;
use crate::rng::SplitMix64;
use crate::runlog::{LemmaRecord, Population};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("requested a sample of {requested} lemmas but only {available} are available")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("walking {path}: {message}")]
    Walk { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedLemma {
    pub text: String,
    /// Byte offsets `[start, end)` into the source file.
    pub byte_span: (usize, usize),
    pub source_path: String,
}

const KEYWORDS: [&str; 2] = ["lemma", "theorem"];

/// Whitespace as Python's `\s` sees it in `str` patterns.
fn is_py_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

/// Sorted start offsets of every occurrence of each needle.
fn occurrences(text: &str, needles: &[&str]) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = needles
        .iter()
        .flat_map(|n| text.match_indices(n).map(|(i, m)| (i, m.len())))
        .collect();
    v.sort_unstable();
    v
}

struct Anchors {
    keywords: Vec<(usize, usize)>,
    colons: Vec<usize>,
    qeds: Vec<usize>,
}

impl Anchors {
    fn new(text: &str) -> Self {
        Self {
            keywords: occurrences(text, &KEYWORDS),
            colons: text.match_indices(':').map(|(i, _)| i).collect(),
            qeds: text.match_indices("qed").map(|(i, _)| i).collect(),
        }
    }

    fn first_at_or_after(v: &[usize], pos: usize) -> Option<usize> {
        v.get(v.partition_point(|&x| x < pos)).copied()
    }

    fn keyword_in(&self, from: usize, to: usize) -> bool {
        let i = self.keywords.partition_point(|&(x, _)| x < from);
        self.keywords.get(i).is_some_and(|&(x, _)| x < to)
    }

    /// End offset of the match starting at keyword `(start, len)`, if any.
    fn match_at(&self, text: &str, start: usize, kw_len: usize) -> Option<usize> {
        let after_kw = start + kw_len;
        let first = text[after_kw..].chars().next()?;
        if !is_py_space(first) {
            return None;
        }
        let colon = Self::first_at_or_after(&self.colons, after_kw)?;
        if colon - after_kw <= first.len_utf8() {
            return None;
        }
        let body = colon + 1;
        let body_first = text[body..].chars().next()?;
        let search_from = body + body_first.len_utf8();
        let qed = Self::first_at_or_after(&self.qeds, search_from)?;
        if self.keyword_in(search_from, qed) {
            return None;
        }
        Some(qed + 3)
    }
}

/// All lemma blocks of one source text, in ascending, non-overlapping order.
pub fn extract_lemmas(source: &str, source_path: &str) -> Vec<ExtractedLemma> {
    let anchors = Anchors::new(source);
    let mut out = Vec::new();
    let mut resume = 0;
    for &(start, len) in &anchors.keywords {
        if start < resume {
            continue;
        }
        if let Some(end) = anchors.match_at(source, start, len) {
            out.push(ExtractedLemma {
                text: source[start..end].to_string(),
                byte_span: (start, end),
                source_path: source_path.to_string(),
            });
            resume = end;
        }
    }
    out
}

/// Extracts every `.thy` file under `root`, ordered by (path, offset).
///
/// Paths in the result are relative to `root` with `/` separators.
pub fn extract_dir(
    root: impl AsRef<Path>,
    workers: Option<usize>,
) -> Result<Vec<ExtractedLemma>, CorpusError> {
    let root = root.as_ref();
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| CorpusError::Walk {
            path: root.display().to_string(),
            message: e.to_string(),
        })?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "thy") {
            files.push(entry.into_path());
        }
    }
    let rel = |p: &Path| {
        p.strip_prefix(root)
            .unwrap_or(p)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/")
    };
    files.sort_by_key(|p| rel(p));

    let per_file = crate::softuse::with_workers(workers, || {
        files
            .par_iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|source| CorpusError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                Ok(extract_lemmas(&text, &rel(p)))
            })
            .collect::<Result<Vec<_>, CorpusError>>()
    })
    .map_err(|e| CorpusError::Walk {
        path: root.display().to_string(),
        message: e.to_string(),
    })??;
    Ok(per_file.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleSize {
    #[default]
    All,
    Count(usize),
}

/// Turns extractions into corpus-population lemma records.
///
/// `All` keeps extraction order. `Count(k)` draws `k` lemmas uniformly
/// without replacement; the output is in draw order and depends only on
/// `seed`.
pub fn build_population(
    extractions: &[ExtractedLemma],
    sample: SampleSize,
    seed: u64,
) -> Result<Vec<LemmaRecord>, CorpusError> {
    let usable: Vec<&ExtractedLemma> = extractions
        .iter()
        .filter(|e| lexref::token_count(&e.text) > 0)
        .collect();
    let chosen: Vec<&ExtractedLemma> = match sample {
        SampleSize::All => usable,
        SampleSize::Count(k) => {
            if k > usable.len() {
                return Err(CorpusError::SampleTooLarge {
                    requested: k,
                    available: usable.len(),
                });
            }
            let mut rng = SplitMix64::new(seed);
            rng.sample_indices(usable.len(), k)
                .into_iter()
                .map(|i| usable[i])
                .collect()
        }
    };
    Ok(chosen
        .into_iter()
        .map(|e| {
            LemmaRecord::with_extracted_name(
                format!("{}#{}", e.source_path, e.byte_span.0),
                e.text.clone(),
                Population::Corpus,
            )
        })
        .collect())
}
