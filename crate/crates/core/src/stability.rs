//! Prompt-paraphrase stability: baseline vs paraphrase accuracy and the
//! maximum potential gain and loss across trial sets.
//!
//! A problem counts as solved by a partition when at least one run in that
//! partition solved it.
//!
//! CSV layout:
//!
//! ```text
//! partition,baseline,baseline,paraphrase,paraphrase
//! problem,b0,b1,p0,p1
//! amc12a_2021_p9,1,0,1,1
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::budget::mean_and_sample_std;
use crate::runlog::RunBundle;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("solve matrix has no problems")]
    EmptyProblems,
    #[error("invalid solve matrix: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Baseline,
    Paraphrase,
}

impl Partition {
    pub fn label(self) -> &'static str {
        match self {
            Partition::Baseline => "baseline",
            Partition::Paraphrase => "paraphrase",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(Partition::Baseline),
            "paraphrase" => Some(Partition::Paraphrase),
            _ => None,
        }
    }
}

/// Problems x runs, each run tagged with its partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveMatrix {
    problems: Vec<String>,
    runs: Vec<String>,
    partition: Vec<Partition>,
    /// Row-major, one row per problem.
    cells: Vec<Vec<bool>>,
}

impl SolveMatrix {
    pub fn new(
        problems: Vec<String>,
        runs: Vec<String>,
        partition: Vec<Partition>,
        cells: Vec<Vec<bool>>,
    ) -> Result<Self, StabilityError> {
        let invalid = |m: String| Err(StabilityError::Invalid(m));
        if runs.len() != partition.len() {
            return invalid(format!(
                "{} runs but {} partition labels",
                runs.len(),
                partition.len()
            ));
        }
        for p in [Partition::Baseline, Partition::Paraphrase] {
            if !partition.contains(&p) {
                return invalid(format!("no {} runs", p.label()));
            }
        }
        if cells.len() != problems.len() {
            return invalid(format!(
                "{} problems but {} rows",
                problems.len(),
                cells.len()
            ));
        }
        if let Some((i, row)) = cells
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != runs.len())
        {
            return invalid(format!(
                "row for {} has {} cells, expected {}",
                problems[i],
                row.len(),
                runs.len()
            ));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = runs.iter().find(|r| !seen.insert(*r)) {
            return invalid(format!("duplicate run id {dup}"));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = problems.iter().find(|p| !seen.insert(*p)) {
            return invalid(format!("duplicate problem id {dup}"));
        }
        Ok(Self {
            problems,
            runs,
            partition,
            cells,
        })
    }

    pub fn problems(&self) -> &[String] {
        &self.problems
    }

    pub fn runs(&self) -> &[String] {
        &self.runs
    }

    pub fn partition(&self) -> &[Partition] {
        &self.partition
    }

    pub fn solved(&self, problem: usize, run: usize) -> bool {
        self.cells[problem][run]
    }

    /// Builds the matrix from the verified attempts of two bundles.
    ///
    /// Problems are the union of task ids of both bundles, sorted. Run columns
    /// are named `<partition>/<run_id>` and keep first-seen order, baseline
    /// runs first.
    pub fn from_bundles(
        baseline: &RunBundle,
        paraphrase: &RunBundle,
    ) -> Result<Self, StabilityError> {
        let mut problems = BTreeSet::new();
        let mut runs = Vec::new();
        let mut partition = Vec::new();
        let mut solved: BTreeSet<(String, String)> = BTreeSet::new();
        let column = |part: Partition, run: &str| format!("{}/{run}", part.label());
        for (bundle, part) in [
            (baseline, Partition::Baseline),
            (paraphrase, Partition::Paraphrase),
        ] {
            for r in bundle.run_ids() {
                runs.push(column(part, r));
                partition.push(part);
            }
            for a in bundle.attempts() {
                problems.insert(a.task_id.clone());
                if a.verified {
                    solved.insert((a.task_id.clone(), column(part, &a.run_id)));
                }
            }
        }
        let problems: Vec<String> = problems.into_iter().collect();
        let cells = problems
            .iter()
            .map(|p| {
                runs.iter()
                    .map(|r| solved.contains(&(p.clone(), r.clone())))
                    .collect()
            })
            .collect();
        Self::new(problems, runs, partition, cells)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, StabilityError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(r);
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| StabilityError::Csv {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        let bad = |line: u64, message: String| StabilityError::Csv { line, message };
        if records.len() < 2 {
            return Err(bad(1, "expected a partition line and a run-id line".into()));
        }
        let head = &records[0];
        if head.get(0) != Some("partition") {
            return Err(bad(1, "first cell must be `partition`".into()));
        }
        let partition = head
            .iter()
            .skip(1)
            .map(|s| {
                Partition::from_label(s.trim())
                    .ok_or_else(|| bad(1, format!("unknown partition `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ids = &records[1];
        if ids.get(0) != Some("problem") {
            return Err(bad(2, "first cell must be `problem`".into()));
        }
        let runs: Vec<String> = ids.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut problems = Vec::new();
        let mut cells = Vec::new();
        for (i, rec) in records.iter().enumerate().skip(2) {
            let line = i as u64 + 1;
            let mut it = rec.iter();
            problems.push(it.next().unwrap_or("").trim().to_string());
            let row = it
                .map(|c| match c.trim() {
                    "1" => Ok(true),
                    "0" => Ok(false),
                    other => Err(bad(line, format!("cell `{other}` is not 0 or 1"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            cells.push(row);
        }
        Self::new(problems, runs, partition, cells)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), StabilityError> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| StabilityError::Invalid(e.to_string());
        let mut head = vec!["partition"];
        head.extend(self.partition.iter().map(|p| p.label()));
        out.write_record(&head).map_err(err)?;
        let mut ids = vec!["problem"];
        ids.extend(self.runs.iter().map(String::as_str));
        out.write_record(&ids).map_err(err)?;
        for (p, row) in self.problems.iter().zip(&self.cells) {
            let mut rec = vec![p.as_str()];
            rec.extend(row.iter().map(|&b| if b { "1" } else { "0" }));
            out.write_record(&rec).map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }

    fn solved_by(&self, problem: usize, part: Partition) -> bool {
        self.cells[problem]
            .iter()
            .zip(&self.partition)
            .any(|(&s, &p)| s && p == part)
    }

    fn fraction_where(&self, f: impl Fn(bool, bool) -> bool) -> Result<f64, StabilityError> {
        if self.problems.is_empty() {
            return Err(StabilityError::EmptyProblems);
        }
        let n = (0..self.problems.len())
            .filter(|&i| {
                f(
                    self.solved_by(i, Partition::Baseline),
                    self.solved_by(i, Partition::Paraphrase),
                )
            })
            .count();
        Ok(n as f64 / self.problems.len() as f64)
    }

    fn column_accuracies(&self, part: Partition) -> Vec<f64> {
        let n = self.problems.len() as f64;
        (0..self.runs.len())
            .filter(|&j| self.partition[j] == part)
            .map(|j| self.cells.iter().filter(|row| row[j]).count() as f64 / n)
            .collect()
    }
}

/// Fraction of problems solved by some paraphrase run and no baseline run.
pub fn max_potential_gain(m: &SolveMatrix) -> Result<f64, StabilityError> {
    m.fraction_where(|base, para| !base && para)
}

/// Fraction of problems solved by some baseline run and no paraphrase run.
pub fn max_potential_loss(m: &SolveMatrix) -> Result<f64, StabilityError> {
    m.fraction_where(|base, para| base && !para)
}

/// Fractions solved by both partitions and by neither.
pub fn overlap_fractions(m: &SolveMatrix) -> Result<(f64, f64), StabilityError> {
    Ok((
        m.fraction_where(|b, p| b && p)?,
        m.fraction_where(|b, p| !b && !p)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub problems: usize,
    pub baseline_runs: usize,
    pub paraphrase_runs: usize,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub paraphrase_mean: f64,
    pub paraphrase_std: f64,
    pub max_potential_gain: f64,
    pub max_potential_loss: f64,
}

/// Per-run accuracies aggregated within each partition (sample std), plus
/// gain and loss.
pub fn stability_report(m: &SolveMatrix) -> Result<StabilityReport, StabilityError> {
    let gain = max_potential_gain(m)?;
    let loss = max_potential_loss(m)?;
    let base = m.column_accuracies(Partition::Baseline);
    let para = m.column_accuracies(Partition::Paraphrase);
    let (baseline_mean, baseline_std) = mean_and_sample_std(&base);
    let (paraphrase_mean, paraphrase_std) = mean_and_sample_std(&para);
    Ok(StabilityReport {
        problems: m.problems.len(),
        baseline_runs: base.len(),
        paraphrase_runs: para.len(),
        baseline_mean,
        baseline_std,
        paraphrase_mean,
        paraphrase_std,
        max_potential_gain: gain,
        max_potential_loss: loss,
    })
}

/// Builds a matrix from per-run sets of solved problem indices.
pub fn matrix_from_solved_sets(
    n_problems: usize,
    baseline: &[&[usize]],
    paraphrase: &[&[usize]],
) -> Result<SolveMatrix, StabilityError> {
    let problems: Vec<String> = (0..n_problems).map(|i| format!("p{i:03}")).collect();
    let mut runs = Vec::new();
    let mut partition = Vec::new();
    let mut columns: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (part, sets) in [
        (Partition::Baseline, baseline),
        (Partition::Paraphrase, paraphrase),
    ] {
        for (k, set) in sets.iter().enumerate() {
            let j = runs.len();
            runs.push(format!("{}{k}", &part.label()[..1]));
            partition.push(part);
            for &p in *set {
                if p >= n_problems {
                    return Err(StabilityError::Invalid(format!(
                        "problem index {p} out of range"
                    )));
                }
                columns.entry(j).or_default().insert(p);
            }
        }
    }
    let cells = (0..n_problems)
        .map(|i| {
            (0..runs.len())
                .map(|j| columns.get(&j).is_some_and(|s| s.contains(&i)))
                .collect()
        })
        .collect();
    SolveMatrix::new(problems, runs, partition, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn gain_zero_when_baseline_covers_everything() {
        let m = matrix_from_solved_sets(3, &[&[0, 1], &[2]], &[&[0]]).unwrap();
        assert_eq!(max_potential_gain(&m).unwrap(), 0.0);
    }

    #[test]
    fn one_paraphrase_only_problem_of_six() {
        let m = matrix_from_solved_sets(6, &[&[0, 1], &[0]], &[&[0, 5], &[1]]).unwrap();
        assert!(close(max_potential_gain(&m).unwrap(), 1.0 / 6.0));
        assert_eq!(
            format!("{:.1}", 100.0 * max_potential_gain(&m).unwrap()),
            "16.7"
        );
    }

    #[test]
    fn nothing_solved() {
        let m = matrix_from_solved_sets(4, &[&[]], &[&[]]).unwrap();
        assert_eq!(max_potential_gain(&m).unwrap(), 0.0);
        assert_eq!(max_potential_loss(&m).unwrap(), 0.0);
    }

    #[test]
    fn loss_examples() {
        let m = matrix_from_solved_sets(10, &[&[0, 3]], &[&[0, 1, 2]]).unwrap();
        assert!(close(max_potential_loss(&m).unwrap(), 0.1));
        let sup = matrix_from_solved_sets(10, &[&[0, 3]], &[&[0, 1, 3]]).unwrap();
        assert_eq!(max_potential_loss(&sup).unwrap(), 0.0);
    }

    #[test]
    fn all_solved_report() {
        let all: Vec<usize> = (0..4).collect();
        let m = matrix_from_solved_sets(4, &[&all, &all], &[&all, &all, &all]).unwrap();
        let r = stability_report(&m).unwrap();
        assert_eq!((r.baseline_mean, r.baseline_std), (1.0, 0.0));
        assert_eq!((r.paraphrase_mean, r.paraphrase_std), (1.0, 0.0));
        assert_eq!((r.max_potential_gain, r.max_potential_loss), (0.0, 0.0));
    }

    #[test]
    fn invalid_matrices() {
        assert!(matrix_from_solved_sets(3, &[], &[&[0]]).is_err());
        assert!(matrix_from_solved_sets(3, &[&[0]], &[]).is_err());
        let empty = matrix_from_solved_sets(0, &[&[]], &[&[]]).unwrap();
        assert!(matches!(
            max_potential_gain(&empty),
            Err(StabilityError::EmptyProblems)
        ));
        assert!(SolveMatrix::new(
            vec!["a".into()],
            vec!["r".into(), "r".into()],
            vec![Partition::Baseline, Partition::Paraphrase],
            vec![vec![true, false]],
        )
        .is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = matrix_from_solved_sets(3, &[&[0], &[1]], &[&[2]]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("partition,baseline,baseline,paraphrase\nproblem,b0,b1,p0\n"));
        assert_eq!(SolveMatrix::read_csv(text.as_bytes()).unwrap(), m);
        assert!(SolveMatrix::read_csv("partition,baseline,x\nproblem,a,b\n".as_bytes()).is_err());
        assert!(SolveMatrix::read_csv(
            "partition,baseline,paraphrase\nproblem,a,b\nq,1,2\n".as_bytes()
        )
        .is_err());
    }

    /// Straight enumeration over problems, independent of the matrix helpers.
    fn brute(n: usize, base: &[Vec<usize>], para: &[Vec<usize>]) -> [f64; 4] {
        let mut c = [0usize; 4];
        for p in 0..n {
            let b = base.iter().any(|s| s.contains(&p));
            let q = para.iter().any(|s| s.contains(&p));
            c[usize::from(b) * 2 + usize::from(q)] += 1;
        }
        // [neither, para only, base only, both]
        c.map(|x| x as f64 / n as f64)
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_partition_identity(
            n in 1usize..20,
            base in prop::collection::vec(prop::collection::vec(0usize..20, 0..20), 1..6),
            para in prop::collection::vec(prop::collection::vec(0usize..20, 0..20), 1..6),
        ) {
            let clip = |v: &Vec<Vec<usize>>| -> Vec<Vec<usize>> {
                v.iter().map(|s| s.iter().copied().filter(|&p| p < n).collect()).collect()
            };
            let (base, para) = (clip(&base), clip(&para));
            let b: Vec<&[usize]> = base.iter().map(Vec::as_slice).collect();
            let p: Vec<&[usize]> = para.iter().map(Vec::as_slice).collect();
            let m = matrix_from_solved_sets(n, &b, &p).unwrap();
            let [neither, gain, loss, both] = brute(n, &base, &para);
            prop_assert!(close(max_potential_gain(&m).unwrap(), gain));
            prop_assert!(close(max_potential_loss(&m).unwrap(), loss));
            let (bo, ne) = overlap_fractions(&m).unwrap();
            prop_assert!(close(bo, both) && close(ne, neither));
            prop_assert!(close(gain + bo + loss + ne, 1.0));

            // an idle paraphrase run
            let mut p2 = p.clone();
            p2.push(&[]);
            let m2 = matrix_from_solved_sets(n, &b, &p2).unwrap();
            prop_assert!(max_potential_gain(&m2).unwrap() <= gain + 1e-12);
            prop_assert!(max_potential_loss(&m2).unwrap() >= loss - 1e-12);

            // permuting runs within a partition
            let mut b_rev = b.clone();
            b_rev.reverse();
            let m3 = matrix_from_solved_sets(n, &b_rev, &p).unwrap();
            let (r3, r) = (stability_report(&m3).unwrap(), stability_report(&m).unwrap());
            prop_assert!(close(r3.baseline_mean, r.baseline_mean) && close(r3.baseline_std, r.baseline_std));
            prop_assert_eq!(r3.max_potential_gain, r.max_potential_gain);
            prop_assert_eq!(r3.max_potential_loss, r.max_potential_loss);
        }
    }
}
