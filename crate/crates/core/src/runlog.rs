//! Run-log data model and JSONL ingestion.
//!
//! A log is a stream of JSON objects, one per line, discriminated by `kind`:
//!
//! ```text
//! {"kind":"lemma","lemma_id":"L1","name":"foo","text":"lemma foo: ...","population":"retrieved"}
//! {"kind":"attempt","run_id":"r0","system":"library_learner","model":"gpt-4o-mini",
//!  "task_id":"amc12a_2021_p9","attempt_index":1,"prompt_lemmas":["L1"],
//!  "solution_text":"...","verified":true,"tokens_in":1200,"tokens_out":800}
//! {"kind":"meta","key":"subset_fraction","value":0.1}
//! ```
//!
//! Records may appear in any order; references are resolved once the whole
//! stream has been read.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::lexref;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum System {
    LibraryLearner,
    Baseline,
    Other(String),
}

impl System {
    pub fn as_str(&self) -> &str {
        match self {
            System::LibraryLearner => "library_learner",
            System::Baseline => "baseline",
            System::Other(s) => s,
        }
    }
}

impl From<&str> for System {
    fn from(s: &str) -> Self {
        match s {
            "library_learner" => System::LibraryLearner,
            "baseline" => System::Baseline,
            other => System::Other(other.to_string()),
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for System {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for System {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(System::from(s.as_str()))
    }
}

/// Which baseline population a lemma belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Retrieved,
    NonRetrieved,
    Corpus,
}

impl Population {
    pub const ALL: [Population; 3] = [
        Population::Retrieved,
        Population::NonRetrieved,
        Population::Corpus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Population::Retrieved => "retrieved",
            Population::NonRetrieved => "non_retrieved",
            Population::Corpus => "corpus",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Population::ALL.into_iter().find(|p| p.label() == s)
    }
}

/// One prover attempt at one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attempt {
    pub run_id: String,
    pub system: System,
    pub model: String,
    pub task_id: String,
    /// 1-based, per task per run.
    pub attempt_index: u32,
    pub prompt_lemmas: Vec<String>,
    /// Raw LLM output, before any proof-repair heuristics.
    pub solution_text: String,
    pub verified: bool,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Set when the log carried no token counts; both counts are then 0.
    pub usage_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaRecord {
    pub lemma_id: String,
    pub name: Option<String>,
    pub text: String,
    /// Whitespace-token count of `text`.
    pub token_count: usize,
    pub population: Population,
}

impl LemmaRecord {
    pub fn new(
        lemma_id: impl Into<String>,
        name: Option<String>,
        text: impl Into<String>,
        population: Population,
    ) -> Self {
        let text = text.into();
        let token_count = lexref::token_count(&text);
        Self {
            lemma_id: lemma_id.into(),
            name,
            text,
            token_count,
            population,
        }
    }

    /// Builds a record whose name is extracted from the text.
    pub fn with_extracted_name(
        lemma_id: impl Into<String>,
        text: impl Into<String>,
        population: Population,
    ) -> Self {
        let text = text.into();
        let name = lexref::extract_name(&text);
        Self::new(lemma_id, name, text, population)
    }
}

/// Attempts, lemmas and free-form metadata of one or more runs.
///
/// Immutable once built; the lemma index is computed at construction.
#[derive(Debug, Clone, Default)]
pub struct RunBundle {
    attempts: Vec<Attempt>,
    lemmas: Vec<LemmaRecord>,
    meta: BTreeMap<String, Value>,
    index: HashMap<String, usize>,
}

impl PartialEq for RunBundle {
    fn eq(&self, other: &Self) -> bool {
        self.attempts == other.attempts && self.lemmas == other.lemmas && self.meta == other.meta
    }
}

impl RunBundle {
    /// Assembles a bundle without checking invariants; see [`validate`].
    ///
    /// When several records share an id, lookups resolve to the first.
    pub fn new(
        attempts: Vec<Attempt>,
        lemmas: Vec<LemmaRecord>,
        meta: BTreeMap<String, Value>,
    ) -> Self {
        let mut index = HashMap::with_capacity(lemmas.len());
        for (i, l) in lemmas.iter().enumerate() {
            index.entry(l.lemma_id.clone()).or_insert(i);
        }
        Self {
            attempts,
            lemmas,
            meta,
            index,
        }
    }

    pub fn attempts(&self) -> &[Attempt] {
        &self.attempts
    }

    pub fn lemmas(&self) -> &[LemmaRecord] {
        &self.lemmas
    }

    pub fn meta(&self) -> &BTreeMap<String, Value> {
        &self.meta
    }

    pub fn lemma(&self, id: &str) -> Option<&LemmaRecord> {
        self.index.get(id).map(|&i| &self.lemmas[i])
    }

    pub fn verified_attempts(&self) -> impl Iterator<Item = &Attempt> {
        self.attempts.iter().filter(|a| a.verified)
    }

    /// Run ids in first-seen order.
    pub fn run_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.attempts
            .iter()
            .filter(|a| seen.insert(a.run_id.as_str()))
            .map(|a| a.run_id.as_str())
            .collect()
    }

    pub fn usage_missing_count(&self) -> usize {
        self.attempts.iter().filter(|a| a.usage_missing).count()
    }

    /// Keeps only the attempts matching `keep`; lemmas and meta are shared.
    pub fn filter_attempts(&self, keep: impl Fn(&Attempt) -> bool) -> RunBundle {
        RunBundle::new(
            self.attempts.iter().filter(|a| keep(a)).cloned().collect(),
            self.lemmas.clone(),
            self.meta.clone(),
        )
    }

    /// Concatenates two bundles. Lemmas already present in `self` are skipped.
    pub fn merge(&self, other: &RunBundle) -> RunBundle {
        let mut lemmas = self.lemmas.clone();
        lemmas.extend(
            other
                .lemmas
                .iter()
                .filter(|l| !self.index.contains_key(&l.lemma_id))
                .cloned(),
        );
        let mut attempts = self.attempts.clone();
        attempts.extend(other.attempts.iter().cloned());
        let mut meta = self.meta.clone();
        meta.extend(other.meta.iter().map(|(k, v)| (k.clone(), v.clone())));
        RunBundle::new(attempts, lemmas, meta)
    }

    /// Writes meta, lemma and attempt records, in that order, one per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (key, value) in &self.meta {
            let rec = Record::Meta(MetaRecord {
                key: key.clone(),
                value: value.clone(),
            });
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        for l in &self.lemmas {
            serde_json::to_writer(&mut w, &Record::Lemma(LemmaWire::from(l)))?;
            w.write_all(b"\n")?;
        }
        for a in &self.attempts {
            serde_json::to_writer(&mut w, &Record::Attempt(AttemptWire::from(a)))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{source_name}:{line}: malformed record: {message}")]
    Malformed {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{source_name}:{line}: attempt references unknown lemma id \"{lemma_id}\"")]
    DanglingLemma {
        source_name: String,
        line: usize,
        lemma_id: String,
    },
    #[error("{source_name}:{line}: duplicate lemma id \"{lemma_id}\" with differing content")]
    DuplicateLemma {
        source_name: String,
        line: usize,
        lemma_id: String,
    },
    #[error(
        "{source_name}:{line}: duplicate attempt (run \"{run_id}\", task \"{task_id}\", index {attempt_index})"
    )]
    DuplicateAttempt {
        source_name: String,
        line: usize,
        run_id: String,
        task_id: String,
        attempt_index: u32,
    },
    #[error("{source_name}:{line}: {message}")]
    Invalid {
        source_name: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogFormat {
    #[default]
    Jsonl,
}

/// Reads and validates one log file. `-` reads standard input.
pub fn ingest(path: impl AsRef<Path>, format: LogFormat) -> Result<RunBundle, IngestError> {
    ingest_many(&[path.as_ref()], format)
}

/// Reads several files as one logical stream, so references may cross files.
pub fn ingest_many<P: AsRef<Path>>(
    paths: &[P],
    format: LogFormat,
) -> Result<RunBundle, IngestError> {
    let LogFormat::Jsonl = format;
    let mut builder = Builder::default();
    for path in paths {
        let path = path.as_ref();
        let name = path.display().to_string();
        if name == "-" {
            let stdin = io::stdin();
            builder.read(stdin.lock(), &name)?;
        } else {
            let file = File::open(path).map_err(|source| IngestError::Io {
                path: name.clone(),
                source,
            })?;
            builder.read(BufReader::new(file), &name)?;
        }
    }
    builder.finish()
}

/// Ingests an in-memory stream; `source_name` labels error locations.
pub fn ingest_reader<R: BufRead>(reader: R, source_name: &str) -> Result<RunBundle, IngestError> {
    let mut builder = Builder::default();
    builder.read(reader, source_name)?;
    builder.finish()
}

pub fn ingest_str(text: &str) -> Result<RunBundle, IngestError> {
    ingest_reader(text.as_bytes(), "<memory>")
}

#[derive(Default)]
struct Builder {
    attempts: Vec<Attempt>,
    attempt_lines: Vec<(String, usize)>,
    attempt_keys: HashSet<(String, String, u32)>,
    lemmas: Vec<LemmaRecord>,
    lemma_index: HashMap<String, usize>,
    meta: BTreeMap<String, Value>,
}

impl Builder {
    fn read<R: BufRead>(&mut self, reader: R, source_name: &str) -> Result<(), IngestError> {
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|source| IngestError::Io {
                path: source_name.to_string(),
                source,
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let record: Record =
                serde_json::from_str(line).map_err(|e| IngestError::Malformed {
                    source_name: source_name.to_string(),
                    line: lineno,
                    message: e.to_string(),
                })?;
            let invalid = |message: String| IngestError::Invalid {
                source_name: source_name.to_string(),
                line: lineno,
                message,
            };
            match record {
                Record::Meta(m) => {
                    self.meta.insert(m.key, m.value);
                }
                Record::Lemma(w) => {
                    let lemma = w.into_record();
                    if let Some(msg) = lemma_problem(&lemma) {
                        return Err(invalid(msg));
                    }
                    match self.lemma_index.get(&lemma.lemma_id) {
                        Some(&j) if self.lemmas[j] == lemma => {}
                        Some(_) => {
                            return Err(IngestError::DuplicateLemma {
                                source_name: source_name.to_string(),
                                line: lineno,
                                lemma_id: lemma.lemma_id,
                            })
                        }
                        None => {
                            self.lemma_index
                                .insert(lemma.lemma_id.clone(), self.lemmas.len());
                            self.lemmas.push(lemma);
                        }
                    }
                }
                Record::Attempt(w) => {
                    let attempt = w.into_attempt();
                    if let Some(msg) = attempt_problem(&attempt) {
                        return Err(invalid(msg));
                    }
                    let key = (
                        attempt.run_id.clone(),
                        attempt.task_id.clone(),
                        attempt.attempt_index,
                    );
                    if !self.attempt_keys.insert(key) {
                        return Err(IngestError::DuplicateAttempt {
                            source_name: source_name.to_string(),
                            line: lineno,
                            run_id: attempt.run_id,
                            task_id: attempt.task_id,
                            attempt_index: attempt.attempt_index,
                        });
                    }
                    self.attempts.push(attempt);
                    self.attempt_lines.push((source_name.to_string(), lineno));
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<RunBundle, IngestError> {
        for (attempt, (source_name, line)) in self.attempts.iter().zip(&self.attempt_lines) {
            if let Some(id) = attempt
                .prompt_lemmas
                .iter()
                .find(|id| !self.lemma_index.contains_key(id.as_str()))
            {
                return Err(IngestError::DanglingLemma {
                    source_name: source_name.clone(),
                    line: *line,
                    lemma_id: id.clone(),
                });
            }
        }
        let missing = self.attempts.iter().filter(|a| a.usage_missing).count();
        if missing > 0 {
            log::warn!("{missing} attempt(s) carry no token counts; treated as zero usage");
        }
        Ok(RunBundle::new(self.attempts, self.lemmas, self.meta))
    }
}

fn lemma_problem(l: &LemmaRecord) -> Option<String> {
    if l.token_count == 0 {
        return Some(format!("lemma \"{}\" has no tokens", l.lemma_id));
    }
    if l.token_count != lexref::token_count(&l.text) {
        return Some(format!(
            "lemma \"{}\" token count {} does not match its text",
            l.lemma_id, l.token_count
        ));
    }
    match &l.name {
        Some(n) if n.is_empty() || n.chars().any(char::is_whitespace) => Some(format!(
            "lemma \"{}\" name must be non-empty and contain no whitespace",
            l.lemma_id
        )),
        _ => None,
    }
}

fn attempt_problem(a: &Attempt) -> Option<String> {
    if a.attempt_index == 0 {
        return Some(format!(
            "attempt (run \"{}\", task \"{}\") has attempt_index 0; indices are 1-based",
            a.run_id, a.task_id
        ));
    }
    if a.verified && a.solution_text.is_empty() {
        return Some(format!(
            "verified attempt (run \"{}\", task \"{}\", index {}) has an empty solution",
            a.run_id, a.task_id, a.attempt_index
        ));
    }
    None
}

/// One invariant violation, naming the offending record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub record: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.record, self.message)
    }
}

fn attempt_label(i: usize, a: &Attempt) -> String {
    format!(
        "attempt #{i} (run \"{}\", task \"{}\", index {})",
        a.run_id, a.task_id, a.attempt_index
    )
}

/// Lists every invariant the bundle breaks. Empty means valid.
pub fn validate(bundle: &RunBundle) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    for (i, l) in bundle.lemmas().iter().enumerate() {
        let label = format!("lemma \"{}\"", l.lemma_id);
        if let Some(&j) = first_seen.get(l.lemma_id.as_str()) {
            out.push(Violation {
                record: label.clone(),
                message: format!("duplicate lemma id (records {j} and {i})"),
            });
        } else {
            first_seen.insert(&l.lemma_id, i);
        }
        if let Some(msg) = lemma_problem(l) {
            out.push(Violation {
                record: label,
                message: msg,
            });
        }
    }

    let mut keys = HashSet::new();
    for (i, a) in bundle.attempts().iter().enumerate() {
        if let Some(msg) = attempt_problem(a) {
            out.push(Violation {
                record: attempt_label(i, a),
                message: msg,
            });
        }
        if a.attempt_index > 0 && !keys.insert((&a.run_id, &a.task_id, a.attempt_index)) {
            out.push(Violation {
                record: attempt_label(i, a),
                message: "duplicate (run_id, task_id, attempt_index)".into(),
            });
        }
        for id in &a.prompt_lemmas {
            if bundle.lemma(id).is_none() {
                out.push(Violation {
                    record: attempt_label(i, a),
                    message: format!("prompt lemma \"{id}\" does not resolve"),
                });
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Meta(MetaRecord),
    Lemma(LemmaWire),
    Attempt(AttemptWire),
}

#[derive(Serialize, Deserialize)]
struct MetaRecord {
    key: String,
    value: Value,
}

#[derive(Serialize, Deserialize)]
struct LemmaWire {
    lemma_id: String,
    #[serde(default)]
    name: Option<String>,
    text: String,
    population: Population,
}

impl LemmaWire {
    fn into_record(self) -> LemmaRecord {
        LemmaRecord::new(
            self.lemma_id,
            self.name,
            normalize_newlines(&self.text),
            self.population,
        )
    }
}

impl From<&LemmaRecord> for LemmaWire {
    fn from(l: &LemmaRecord) -> Self {
        Self {
            lemma_id: l.lemma_id.clone(),
            name: l.name.clone(),
            text: l.text.clone(),
            population: l.population,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct AttemptWire {
    run_id: String,
    system: System,
    model: String,
    task_id: String,
    attempt_index: u32,
    #[serde(default)]
    prompt_lemmas: Vec<String>,
    solution_text: String,
    verified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens_out: Option<u64>,
}

impl AttemptWire {
    fn into_attempt(self) -> Attempt {
        let usage_missing = self.tokens_in.is_none() || self.tokens_out.is_none();
        let (tokens_in, tokens_out) = if usage_missing {
            (0, 0)
        } else {
            (self.tokens_in.unwrap_or(0), self.tokens_out.unwrap_or(0))
        };
        Attempt {
            run_id: self.run_id,
            system: self.system,
            model: self.model,
            task_id: self.task_id,
            attempt_index: self.attempt_index,
            prompt_lemmas: self.prompt_lemmas,
            solution_text: normalize_newlines(&self.solution_text),
            verified: self.verified,
            tokens_in,
            tokens_out,
            usage_missing,
        }
    }
}

impl From<&Attempt> for AttemptWire {
    fn from(a: &Attempt) -> Self {
        let (tokens_in, tokens_out) = if a.usage_missing {
            (None, None)
        } else {
            (Some(a.tokens_in), Some(a.tokens_out))
        };
        Self {
            run_id: a.run_id.clone(),
            system: a.system.clone(),
            model: a.model.clone(),
            task_id: a.task_id.clone(),
            attempt_index: a.attempt_index,
            prompt_lemmas: a.prompt_lemmas.clone(),
            solution_text: a.solution_text.clone(),
            verified: a.verified,
            tokens_in,
            tokens_out,
        }
    }
}

/// CRLF and lone CR become LF.
pub fn normalize_newlines(s: &str) -> String {
    if !s.contains('\r') {
        return s.to_string();
    }
    s.replace("\r\n", "\n").replace('\r', "\n")
}
