//! Use/reuse statistics and soft-use survival curves over a run bundle.
//!
//! A lemma is *used* by a solution when it meets the detection criterion
//! against it, and *reused* `n` times when it is used by the solutions of
//! `n + 1` distinct tasks. Survival curves report, for each threshold `t` on
//! the soft-use score, the fraction of a population that meets the use (or
//! reuse) criterion at level `t`.
//!
//! Every curve is computed from per-item *levels*: the largest threshold at
//! which the item still survives. Thresholds and levels are exact rationals,
//! so `score >= t` is decided without floating-point rounding.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lexref::{self, NameMatch};
use crate::runlog::{Attempt, Population, RunBundle};
use crate::softuse::{self, Interner, LemmaMatcher, SoftUseError};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("no solved tasks")]
    NoSolvedTasks,
    #[error("invalid threshold grid \"{0}\": {1}")]
    Grid(String, String),
    #[error(transparent)]
    Score(#[from] SoftUseError),
    #[error("curve file: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Non-negative rational `num / den`, compared exactly.
#[derive(Debug, Clone, Copy)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        Self { num, den }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ratio {}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        (u128::from(self.num) * u128::from(other.den))
            .cmp(&(u128::from(other.num) * u128::from(self.den)))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Ascending thresholds in `[0, 1]`, held as exact decimals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdGrid {
    points: Vec<Ratio>,
}

impl Default for ThresholdGrid {
    /// 0.00 to 1.00 in steps of 0.01.
    fn default() -> Self {
        Self {
            points: (0..=100).map(|i| Ratio::new(i, 100)).collect(),
        }
    }
}

impl ThresholdGrid {
    /// Parses `start:end:step`, e.g. `0:1:0.01`. Both ends are inclusive.
    pub fn parse(spec: &str) -> Result<Self, AuditError> {
        let err = |m: &str| AuditError::Grid(spec.to_string(), m.to_string());
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(err("expected start:end:step"));
        }
        let decs = parts
            .iter()
            .map(|p| parse_decimal(p.trim()).ok_or_else(|| err("not a non-negative decimal")))
            .collect::<Result<Vec<_>, _>>()?;
        let scale = decs.iter().map(|&(_, d)| d).max().unwrap_or(0);
        if scale > 12 {
            return Err(err("more than 12 decimal places"));
        }
        let den = 10u64.pow(scale);
        let [start, end, step] = [0, 1, 2].map(|i| decs[i].0 * 10u64.pow(scale - decs[i].1));
        if step == 0 {
            return Err(err("step must be positive"));
        }
        if start > end {
            return Err(err("start exceeds end"));
        }
        if end > den {
            return Err(err("thresholds must lie in [0, 1]"));
        }
        let count = (end - start) / step + 1;
        Ok(Self {
            points: (0..count)
                .map(|i| Ratio::new(start + i * step, den))
                .collect(),
        })
    }

    pub fn from_points(points: Vec<Ratio>) -> Result<Self, AuditError> {
        let ok =
            points.windows(2).all(|w| w[0] < w[1]) && points.iter().all(|p| *p <= Ratio::new(1, 1));
        if !ok {
            return Err(AuditError::Grid(
                format!("{points:?}"),
                "points must be strictly ascending within [0, 1]".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Ratio] {
        &self.points
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value()).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `"0.25"` -> `(25, 2)`.
fn parse_decimal(s: &str) -> Option<(u64, u32)> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let value: u64 = if digits.is_empty() {
        0
    } else {
        digits.parse().ok()?
    };
    Some((value, frac.len() as u32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Lemma,
    Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Use,
    Reuse,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Use => "use",
            Mode::Reuse => "reuse",
        }
    }
}

/// Which solutions may witness the *other* use of a retrieved lemma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReuseScope {
    /// Only verified solutions whose prompts contained the lemma.
    #[default]
    Causal,
    /// Any verified solution.
    Permissive,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AuditOptions {
    pub name_match: NameMatch,
    pub reuse_scope: ReuseScope,
    /// Worker threads for scoring; `None` uses every core.
    pub workers: Option<usize>,
}

/// Label of the single population in task-level curves.
pub const TASK_POPULATION: &str = "tasks";

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationCurve {
    pub label: String,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub thresholds: Vec<f64>,
    pub populations: Vec<PopulationCurve>,
    pub level: Level,
    pub mode: Mode,
}

impl SurvivalCurve {
    pub fn population(&self, label: &str) -> Option<&[f64]> {
        self.populations
            .iter()
            .find(|p| p.label == label)
            .map(|p| p.fractions.as_slice())
    }

    /// Writes `threshold,<population>_<mode>,...` with six decimal places.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AuditError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["threshold".to_string()];
        header.extend(
            self.populations
                .iter()
                .map(|p| format!("{}_{}", p.label, self.mode.label())),
        );
        out.write_record(&header).map_err(csv_err)?;
        for (i, t) in self.thresholds.iter().enumerate() {
            let mut row = vec![format!("{t:.6}")];
            row.extend(
                self.populations
                    .iter()
                    .map(|p| format!("{:.6}", p.fractions[i])),
            );
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, AuditError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.get(0) != Some("threshold") {
            return Err(AuditError::Csv("first column must be `threshold`".into()));
        }
        let mut mode = None;
        let mut populations = Vec::new();
        for col in header.iter().skip(1) {
            let (label, m) = col
                .rsplit_once('_')
                .ok_or_else(|| AuditError::Csv(format!("bad column `{col}`")))?;
            let m = match m {
                "use" => Mode::Use,
                "reuse" => Mode::Reuse,
                _ => return Err(AuditError::Csv(format!("bad column `{col}`"))),
            };
            if mode.is_some_and(|prev| prev != m) {
                return Err(AuditError::Csv("mixed modes in one curve".into()));
            }
            mode = Some(m);
            populations.push(PopulationCurve {
                label: label.to_string(),
                fractions: Vec::new(),
            });
        }
        let mut thresholds = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let nums = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| AuditError::Csv(format!("not a number: `{f}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            thresholds.push(nums[0]);
            for (p, v) in populations.iter_mut().zip(&nums[1..]) {
                p.fractions.push(*v);
            }
        }
        let level = if populations.len() == 1 && populations[0].label == TASK_POPULATION {
            Level::Task
        } else {
            Level::Lemma
        };
        Ok(Self {
            thresholds,
            populations,
            level,
            mode: mode.unwrap_or(Mode::Use),
        })
    }
}

fn csv_err(e: csv::Error) -> AuditError {
    AuditError::Csv(e.to_string())
}

pub fn export_curves(curve: &SurvivalCurve, path: impl AsRef<Path>) -> Result<(), AuditError> {
    let file = std::fs::File::create(path)?;
    curve.write_csv(std::io::BufWriter::new(file))
}

pub fn read_curves(path: impl AsRef<Path>) -> Result<SurvivalCurve, AuditError> {
    SurvivalCurve::read_csv(std::fs::File::open(path)?)
}

/// Headline use/reuse counts, summed over the runs in a bundle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct UsageSummary {
    pub successful_attempts: usize,
    pub total_attempts: usize,
    /// Unique prompt lemmas of successful attempts, per run.
    pub prompt_lemma_count: usize,
    /// Successful attempts whose solution contains a prompt lemma verbatim.
    pub verbatim_use_count: usize,
    /// Successful attempts whose solution mentions a prompt lemma's name.
    pub name_use_count: usize,
    /// Lemmas used verbatim by one task or more.
    pub verbatim_used_lemmas: usize,
    pub name_used_lemmas: usize,
    /// Lemmas used verbatim by exactly 2 tasks.
    pub verbatim_reused_once: usize,
    /// Lemmas used verbatim by 3 or more tasks.
    pub verbatim_reused_multi: usize,
    pub name_reused_once: usize,
    pub name_reused_multi: usize,
}

/// Exact-match use and reuse of prompt lemmas in verified solutions.
pub fn summarize_use(bundle: &RunBundle, name_match: NameMatch) -> UsageSummary {
    let mut s = UsageSummary::default();
    for run in bundle.run_ids() {
        let attempts: Vec<&Attempt> = bundle
            .attempts()
            .iter()
            .filter(|a| a.run_id == run)
            .collect();
        s.total_attempts += attempts.len();
        let mut prompt_lemmas = HashSet::new();
        let mut verbatim_tasks: HashMap<&str, HashSet<&str>> = HashMap::new();
        let mut name_tasks: HashMap<&str, HashSet<&str>> = HashMap::new();
        for a in attempts.iter().filter(|a| a.verified) {
            s.successful_attempts += 1;
            let (mut verbatim_hit, mut name_hit) = (false, false);
            for id in &a.prompt_lemmas {
                prompt_lemmas.insert(id.as_str());
                let Some(lemma) = bundle.lemma(id) else {
                    continue;
                };
                if lexref::verbatim_used(lemma, &a.solution_text) {
                    verbatim_hit = true;
                    verbatim_tasks.entry(id).or_default().insert(&a.task_id);
                }
                if lexref::name_used(lemma, &a.solution_text, name_match) {
                    name_hit = true;
                    name_tasks.entry(id).or_default().insert(&a.task_id);
                }
            }
            s.verbatim_use_count += usize::from(verbatim_hit);
            s.name_use_count += usize::from(name_hit);
        }
        s.prompt_lemma_count += prompt_lemmas.len();
        let tally = |m: &HashMap<&str, HashSet<&str>>| {
            let used = m.len();
            let once = m.values().filter(|t| t.len() == 2).count();
            let multi = m.values().filter(|t| t.len() >= 3).count();
            (used, once, multi)
        };
        let (used, once, multi) = tally(&verbatim_tasks);
        s.verbatim_used_lemmas += used;
        s.verbatim_reused_once += once;
        s.verbatim_reused_multi += multi;
        let (used, once, multi) = tally(&name_tasks);
        s.name_used_lemmas += used;
        s.name_reused_once += once;
        s.name_reused_multi += multi;
    }
    s
}

/// Survival levels of one lemma; `None` never survives, not even at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaLevels {
    pub lemma_id: String,
    pub population: Population,
    pub use_level: Option<Ratio>,
    pub reuse_level: Option<Ratio>,
}

/// Survival levels of one solved task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskLevels {
    pub task_id: String,
    pub use_level: Option<Ratio>,
    pub reuse_level: Option<Ratio>,
}

struct Solution<'a> {
    task: usize,
    attempt: &'a Attempt,
}

/// Verified solutions plus the lemma/solution incidence of the bundle.
struct Scorer<'a> {
    bundle: &'a RunBundle,
    solutions: Vec<Solution<'a>>,
    task_ids: Vec<&'a str>,
    /// lemma index -> solutions whose prompts contained it
    prompted: BTreeMap<usize, Vec<usize>>,
}

impl<'a> Scorer<'a> {
    fn new(bundle: &'a RunBundle) -> Self {
        let lemma_pos: HashMap<&str, usize> = bundle
            .lemmas()
            .iter()
            .enumerate()
            .map(|(i, l)| (l.lemma_id.as_str(), i))
            .rev()
            .collect();
        let mut task_pos: HashMap<&str, usize> = HashMap::new();
        let mut task_ids = Vec::new();
        let mut solutions = Vec::new();
        let mut prompted: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for a in bundle.verified_attempts() {
            let task = *task_pos.entry(&a.task_id).or_insert_with(|| {
                task_ids.push(a.task_id.as_str());
                task_ids.len() - 1
            });
            let sol = solutions.len();
            solutions.push(Solution { task, attempt: a });
            let mut seen = HashSet::new();
            for id in &a.prompt_lemmas {
                if let Some(&li) = lemma_pos.get(id.as_str()) {
                    if seen.insert(li) {
                        prompted.entry(li).or_default().push(sol);
                    }
                }
            }
        }
        Self {
            bundle,
            solutions,
            task_ids,
            prompted,
        }
    }

    /// Matched-token counts for each requested (lemma, solutions) job.
    fn score(
        &self,
        jobs: &[(usize, Vec<usize>)],
        workers: Option<usize>,
    ) -> Result<Vec<Vec<u64>>, SoftUseError> {
        let mut interner = Interner::default();
        let lemmas: Vec<Vec<u32>> = jobs
            .iter()
            .map(|(li, _)| interner.intern_text(&self.bundle.lemmas()[*li].text))
            .collect();
        let sols: Vec<Vec<u32>> = self
            .solutions
            .iter()
            .map(|s| interner.intern_text(&s.attempt.solution_text))
            .collect();
        softuse::with_workers(workers, || {
            jobs.par_iter()
                .zip(lemmas.par_iter())
                .map(|((li, targets), toks)| {
                    let m = LemmaMatcher::new(toks).map_err(|_| SoftUseError::EmptyLemma {
                        lemma_id: Some(self.bundle.lemmas()[*li].lemma_id.clone()),
                    })?;
                    Ok(targets
                        .iter()
                        .map(|&s| m.lcs_len(&sols[s]) as u64)
                        .collect())
                })
                .collect::<Result<Vec<_>, SoftUseError>>()
        })?
    }

    fn all_solutions(&self) -> Vec<usize> {
        (0..self.solutions.len()).collect()
    }

    /// Best matched count per task, descending.
    fn per_task_best(&self, targets: &[usize], matched: &[u64]) -> Vec<(usize, u64)> {
        let mut best: BTreeMap<usize, u64> = BTreeMap::new();
        for (&s, &m) in targets.iter().zip(matched) {
            let e = best.entry(self.solutions[s].task).or_insert(0);
            *e = (*e).max(m);
        }
        let mut v: Vec<(usize, u64)> = best.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

/// Per-lemma survival levels for every population present in the bundle.
///
/// Retrieved lemmas are in scope when some verified attempt prompted them;
/// their use is measured against those prompted solutions only. Lemmas of
/// the other populations are measured against every verified solution.
pub fn lemma_levels(
    bundle: &RunBundle,
    options: &AuditOptions,
) -> Result<Vec<LemmaLevels>, AuditError> {
    let scorer = Scorer::new(bundle);
    let all = scorer.all_solutions();
    let mut jobs = Vec::new();
    for (li, lemma) in bundle.lemmas().iter().enumerate() {
        match lemma.population {
            Population::Retrieved => {
                if let Some(prompted) = scorer.prompted.get(&li) {
                    let targets = match options.reuse_scope {
                        ReuseScope::Causal => prompted.clone(),
                        ReuseScope::Permissive => all.clone(),
                    };
                    jobs.push((li, targets));
                }
            }
            _ => jobs.push((li, all.clone())),
        }
    }
    let matched = scorer.score(&jobs, options.workers)?;

    let mut out = Vec::with_capacity(jobs.len());
    for ((li, targets), counts) in jobs.iter().zip(&matched) {
        let lemma = &bundle.lemmas()[*li];
        let n = lemma.token_count as u64;
        let ratio = |m: u64| Ratio::new(m, n);
        let by_task = scorer.per_task_best(targets, counts);
        let second = by_task.get(1).map(|&(_, m)| m);
        let (use_level, reuse_level) = if lemma.population == Population::Retrieved {
            let prompted: HashSet<usize> = scorer.prompted[li].iter().copied().collect();
            let use_m = targets
                .iter()
                .zip(counts)
                .filter(|(s, _)| prompted.contains(s))
                .map(|(_, &m)| m)
                .max();
            let reuse_m = match (use_m, second) {
                (Some(u), Some(s)) => Some(u.min(s)),
                _ => None,
            };
            (use_m, reuse_m)
        } else {
            (by_task.first().map(|&(_, m)| m), second)
        };
        out.push(LemmaLevels {
            lemma_id: lemma.lemma_id.clone(),
            population: lemma.population,
            use_level: use_level.map(ratio),
            reuse_level: reuse_level.map(ratio),
        });
    }
    Ok(out)
}

fn fraction_surviving(levels: &[Option<Ratio>], t: Ratio) -> f64 {
    let alive = levels.iter().filter(|l| l.is_some_and(|l| l >= t)).count();
    alive as f64 / levels.len() as f64
}

/// Fraction of each lemma population that meets the use (or reuse)
/// criterion at each threshold. Empty populations are omitted.
pub fn lemma_survival(
    bundle: &RunBundle,
    mode: Mode,
    thresholds: &ThresholdGrid,
    options: &AuditOptions,
) -> Result<SurvivalCurve, AuditError> {
    let levels = lemma_levels(bundle, options)?;
    let mut populations = Vec::new();
    for pop in Population::ALL {
        let lv: Vec<Option<Ratio>> = levels
            .iter()
            .filter(|l| l.population == pop)
            .map(|l| match mode {
                Mode::Use => l.use_level,
                Mode::Reuse => l.reuse_level,
            })
            .collect();
        if lv.is_empty() {
            log::warn!("population `{}` is empty; omitted from curve", pop.label());
            continue;
        }
        populations.push(PopulationCurve {
            label: pop.label().to_string(),
            fractions: thresholds
                .points()
                .iter()
                .map(|&t| fraction_surviving(&lv, t))
                .collect(),
        });
    }
    Ok(SurvivalCurve {
        thresholds: thresholds.values(),
        populations,
        level: Level::Lemma,
        mode,
    })
}

/// Per-task survival levels over the solved tasks of the bundle.
///
/// A task uses a lemma at level `t` when some lemma in the prompt of one of
/// its verified attempts scores `>= t` against that attempt's solution. It
/// reuses it when the same lemma also scores `>= t` against a verified
/// solution of a different task.
pub fn task_levels(
    bundle: &RunBundle,
    options: &AuditOptions,
) -> Result<Vec<TaskLevels>, AuditError> {
    let scorer = Scorer::new(bundle);
    if scorer.task_ids.is_empty() {
        return Err(AuditError::NoSolvedTasks);
    }
    let all = scorer.all_solutions();
    let jobs: Vec<(usize, Vec<usize>)> = scorer
        .prompted
        .iter()
        .map(|(&li, prompted)| {
            let targets = match options.reuse_scope {
                ReuseScope::Causal => prompted.clone(),
                ReuseScope::Permissive => all.clone(),
            };
            (li, targets)
        })
        .collect();
    let matched = scorer.score(&jobs, options.workers)?;

    let mut use_level: Vec<Option<Ratio>> = vec![None; scorer.task_ids.len()];
    let mut reuse_level: Vec<Option<Ratio>> = vec![None; scorer.task_ids.len()];
    for ((li, targets), counts) in jobs.iter().zip(&matched) {
        let n = bundle.lemmas()[*li].token_count as u64;
        let by_task = scorer.per_task_best(targets, counts);
        for &s in &scorer.prompted[li] {
            let task = scorer.solutions[s].task;
            let pos = targets
                .iter()
                .position(|&x| x == s)
                .expect("prompted ⊆ targets");
            let own = Ratio::new(counts[pos], n);
            let other = by_task
                .iter()
                .find(|&&(t, _)| t != task)
                .map(|&(_, m)| Ratio::new(m, n));
            use_level[task] = use_level[task].max(Some(own));
            if let Some(other) = other {
                reuse_level[task] = reuse_level[task].max(Some(own.min(other)));
            }
        }
    }
    Ok(scorer
        .task_ids
        .iter()
        .enumerate()
        .map(|(i, t)| TaskLevels {
            task_id: t.to_string(),
            use_level: use_level[i],
            reuse_level: reuse_level[i],
        })
        .collect())
}

/// Fraction of solved tasks exhibiting use (or reuse) at each threshold.
pub fn task_survival(
    bundle: &RunBundle,
    mode: Mode,
    thresholds: &ThresholdGrid,
    options: &AuditOptions,
) -> Result<SurvivalCurve, AuditError> {
    let levels = task_levels(bundle, options)?;
    let lv: Vec<Option<Ratio>> = levels
        .iter()
        .map(|l| match mode {
            Mode::Use => l.use_level,
            Mode::Reuse => l.reuse_level,
        })
        .collect();
    Ok(SurvivalCurve {
        thresholds: thresholds.values(),
        populations: vec![PopulationCurve {
            label: TASK_POPULATION.to_string(),
            fractions: thresholds
                .points()
                .iter()
                .map(|&t| fraction_surviving(&lv, t))
                .collect(),
        }],
        level: Level::Task,
        mode,
    })
}
