//! Soft-use score: how much of a lemma survives, in order, inside a solution.
//!
//! The score is derived from a Levenshtein distance over whitespace tokens in
//! which deleting or substituting a lemma token costs 1 and inserting a
//! solution token costs nothing. A lemma of `N` tokens therefore has a
//! distance between 0 (every token appears in order) and `N` (no token
//! appears), and `score = 1 - distance / N`.
//!
//! Because insertions are free, each lemma token either aligns to an equal
//! solution token at no cost or costs exactly one, so the distance equals
//! `N - LCS(lemma, solution)`. [`modified_levenshtein`] evaluates the weighted
//! recurrence directly; batch scoring goes through [`LemmaMatcher`], a
//! bit-parallel LCS kernel that produces the same integers 64 lemma tokens
//! at a time.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexref::tokenize;
use crate::runlog::LemmaRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SoftUseError {
    #[error("lemma {} has no tokens; soft use is undefined", .lemma_id.as_deref().unwrap_or("<anonymous>"))]
    EmptyLemma { lemma_id: Option<String> },
    #[error("failed to start worker pool: {0}")]
    WorkerPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftUseScore {
    pub raw_distance: usize,
    pub lemma_len: usize,
    pub score: f64,
}

impl SoftUseScore {
    pub fn from_distance(raw_distance: usize, lemma_len: usize) -> Self {
        debug_assert!(lemma_len > 0 && raw_distance <= lemma_len);
        Self {
            raw_distance,
            lemma_len,
            score: 1.0 - raw_distance as f64 / lemma_len as f64,
        }
    }

    /// Number of lemma tokens matched in order.
    pub fn matched(&self) -> usize {
        self.lemma_len - self.raw_distance
    }
}

/// Minimum cost to turn `lemma` into `solution` with unit deletions and
/// substitutions and free insertions.
pub fn modified_levenshtein<T: Eq>(lemma: &[T], solution: &[T]) -> Result<usize, SoftUseError> {
    if lemma.is_empty() {
        return Err(SoftUseError::EmptyLemma { lemma_id: None });
    }
    // dist[i][j]: cost of turning lemma[..i] into solution[..j].
    //   dist[0][j] = 0, dist[i][0] = i
    //   dist[i][j] = min(dist[i-1][j] + 1, dist[i][j-1], dist[i-1][j-1] + [a_i != b_j])
    // One rolling vector over the shorter axis.
    if solution.len() <= lemma.len() {
        let mut row: Vec<usize> = vec![0; solution.len() + 1];
        for (i, a) in lemma.iter().enumerate() {
            let mut diag = row[0];
            row[0] = i + 1;
            for (j, b) in solution.iter().enumerate() {
                let up = row[j + 1];
                let sub = diag + usize::from(a != b);
                row[j + 1] = (up + 1).min(row[j]).min(sub);
                diag = up;
            }
        }
        Ok(row[solution.len()])
    } else {
        let mut col: Vec<usize> = (0..=lemma.len()).collect();
        for b in solution {
            let mut diag = col[0];
            for (i, a) in lemma.iter().enumerate() {
                let left = col[i + 1];
                let sub = diag + usize::from(a != b);
                col[i + 1] = (col[i] + 1).min(left).min(sub);
                diag = left;
            }
        }
        Ok(col[lemma.len()])
    }
}

pub fn soft_use_score(lemma: &LemmaRecord, solution: &str) -> Result<SoftUseScore, SoftUseError> {
    let lemma_tokens = tokenize(&lemma.text).tokens;
    let solution_tokens = tokenize(solution).tokens;
    let d = modified_levenshtein(&lemma_tokens, &solution_tokens).map_err(|_| {
        SoftUseError::EmptyLemma {
            lemma_id: Some(lemma.lemma_id.clone()),
        }
    })?;
    Ok(SoftUseScore::from_distance(d, lemma_tokens.len()))
}

/// Maps token strings to dense ids so the scoring kernels compare integers.
#[derive(Debug, Default, Clone)]
pub struct Interner {
    ids: HashMap<String, u32>,
}

impl Interner {
    pub fn intern_text(&mut self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|t| self.intern(t)).collect()
    }

    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.ids.len() as u32;
        self.ids.insert(token.to_owned(), id);
        id
    }
}

/// Precomputed match masks of one lemma for bit-parallel LCS.
#[derive(Debug, Clone)]
pub struct LemmaMatcher {
    len: usize,
    words: usize,
    masks: HashMap<u32, Vec<u64>>,
}

impl LemmaMatcher {
    pub fn new(lemma: &[u32]) -> Result<Self, SoftUseError> {
        if lemma.is_empty() {
            return Err(SoftUseError::EmptyLemma { lemma_id: None });
        }
        let words = lemma.len().div_ceil(64);
        let mut masks: HashMap<u32, Vec<u64>> = HashMap::new();
        for (i, &tok) in lemma.iter().enumerate() {
            masks.entry(tok).or_insert_with(|| vec![0; words])[i / 64] |= 1u64 << (i % 64);
        }
        Ok(Self {
            len: lemma.len(),
            words,
            masks,
        })
    }

    pub fn lemma_len(&self) -> usize {
        self.len
    }

    /// Length of the longest common subsequence with `solution`.
    pub fn lcs_len(&self, solution: &[u32]) -> usize {
        let mut v = vec![u64::MAX; self.words];
        for tok in solution {
            let Some(m) = self.masks.get(tok) else {
                continue;
            };
            let mut carry = 0u64;
            for (vw, &mw) in v.iter_mut().zip(m) {
                let x = *vw;
                let u = x & mw;
                let (s1, c1) = x.overflowing_add(u);
                let (s2, c2) = s1.overflowing_add(carry);
                carry = u64::from(c1 || c2);
                *vw = s2 | (x & !mw);
            }
        }
        let ones: usize = v.iter().map(|w| w.count_ones() as usize).sum();
        self.words * 64 - ones
    }

    pub fn score(&self, solution: &[u32]) -> SoftUseScore {
        SoftUseScore::from_distance(self.len - self.lcs_len(solution), self.len)
    }
}

/// Scores for every requested (lemma, solution) pair, lemma-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    lemma_ids: Vec<String>,
    task_ids: Vec<String>,
    scores: Vec<SoftUseScore>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Score of the first solution labelled `task_id`.
    pub fn get(&self, lemma_id: &str, task_id: &str) -> Option<&SoftUseScore> {
        let li = self.lemma_ids.iter().position(|l| l == lemma_id)?;
        let si = self.task_ids.iter().position(|t| t == task_id)?;
        self.scores.get(li * self.task_ids.len() + si)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &SoftUseScore)> {
        let n = self.task_ids.len();
        self.scores.iter().enumerate().map(move |(k, s)| {
            (
                self.lemma_ids[k / n].as_str(),
                self.task_ids[k % n].as_str(),
                s,
            )
        })
    }
}

/// Runs `f` on a pool of `workers` threads, or on rayon's global pool.
pub fn with_workers<R: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> R + Send,
) -> Result<R, SoftUseError> {
    match workers {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| SoftUseError::WorkerPool(e.to_string())),
    }
}

/// Scores every lemma against every solution.
///
/// The result does not depend on `workers`: each cell is an integer DP
/// written to its own slot.
pub fn score_matrix(
    lemmas: &[LemmaRecord],
    solutions: &[(String, String)],
    workers: Option<usize>,
) -> Result<ScoreTable, SoftUseError> {
    let mut interner = Interner::default();
    let matchers = lemmas
        .iter()
        .map(|l| {
            LemmaMatcher::new(&interner.intern_text(&l.text)).map_err(|_| {
                SoftUseError::EmptyLemma {
                    lemma_id: Some(l.lemma_id.clone()),
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let encoded: Vec<Vec<u32>> = solutions
        .iter()
        .map(|(_, s)| interner.intern_text(s))
        .collect();

    let scores = with_workers(workers, || {
        matchers
            .par_iter()
            .flat_map_iter(|m| encoded.iter().map(move |s| m.score(s)))
            .collect::<Vec<_>>()
    })?;

    Ok(ScoreTable {
        lemma_ids: lemmas.iter().map(|l| l.lemma_id.clone()).collect(),
        task_ids: solutions.iter().map(|(t, _)| t.clone()).collect(),
        scores,
    })
}
