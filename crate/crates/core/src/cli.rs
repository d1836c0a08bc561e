//! Command-line front end. Each subcommand is a thin shell over one library
//! operation; tables go to `--out` (or stdout), scalars and JSON summaries
//! to stdout.
//!
//! Exit status: 0 on success, 1 on data or validation errors, 2 on usage
//! errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::audit::{self, AuditOptions, Mode, ReuseScope, ThresholdGrid};
use crate::budget::{self, PricingTable, XAxis};
use crate::corpus::{self, SampleSize};
use crate::lexref::NameMatch;
use crate::runlog::{self, LogFormat, Population, RunBundle};
use crate::stability::{self, SolveMatrix};
use crate::synth::{self, SynthConfig};

/// Environment variable naming the pricing file when `--pricing` is absent.
pub const PRICING_ENV: &str = "LEMMA_AUDIT_PRICING";

#[derive(Debug, Parser)]
#[command(
    name = "lemma-audit",
    version,
    about = "Use/reuse and compute-budget audits of library-learning run logs"
)]
struct Cli {
    /// Worker threads for soft-use scoring [default: all cores]
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate logs and print a summary
    IngestCheck(LogArgs),
    /// Exact-match use/reuse counts as JSON
    AuditUse {
        #[command(flatten)]
        logs: LogArgs,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Soft-use survival curves as CSV
    Survival {
        #[command(flatten)]
        logs: LogArgs,
        #[arg(long, value_enum, default_value_t = LevelArg::Lemma)]
        level: LevelArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Use)]
        mode: ModeArg,
        /// Threshold grid as start:end:step
        #[arg(long, default_value = "0:1:0.01")]
        thresholds: String,
        #[command(flatten)]
        matching: MatchArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract lemma blocks from a directory of .thy files as JSONL lemma records
    CorpusExtract {
        #[arg(long)]
        root: PathBuf,
        /// `all` or a number of lemmas to sample
        #[arg(long, default_value = "all", value_parser = parse_sample)]
        sample: SampleSize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Token cost summary as JSON
    CostReport {
        #[command(flatten)]
        logs: LogArgs,
        #[command(flatten)]
        pricing: PricingArgs,
    },
    /// Cumulative accuracy curve as CSV (x,mean,std)
    CostCurve {
        #[command(flatten)]
        logs: LogArgs,
        #[arg(long, value_enum, default_value_t = AxisArg::Attempts)]
        axis: AxisArg,
        #[command(flatten)]
        pricing: PricingArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attempts a system may spend to match the baseline's budget
    MatchBudget {
        #[arg(long)]
        baseline_attempts: u64,
        /// Cost ratio system/baseline; computed from logs when absent
        #[arg(long, required_unless_present_all = ["system_log", "baseline_log"])]
        ratio: Option<f64>,
        #[arg(long, conflicts_with = "ratio")]
        system_log: Vec<PathBuf>,
        #[arg(long, conflicts_with = "ratio")]
        baseline_log: Vec<PathBuf>,
        #[command(flatten)]
        pricing: PricingArgs,
    },
    /// Baseline-aligned accuracy comparison as CSV (x,baseline_mean,system_mean,gap)
    Compare {
        #[arg(long, required = true)]
        system_log: Vec<PathBuf>,
        #[arg(long, required = true)]
        baseline_log: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = AxisArg::Attempts)]
        axis: AxisArg,
        #[command(flatten)]
        pricing: PricingArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paraphrase stability report as JSON
    Stability {
        /// Solve matrix CSV
        #[arg(long, required_unless_present_all = ["baseline_log", "paraphrase_log"])]
        matrix: Option<PathBuf>,
        #[arg(long, conflicts_with = "matrix")]
        baseline_log: Vec<PathBuf>,
        #[arg(long, conflicts_with = "matrix")]
        paraphrase_log: Vec<PathBuf>,
        /// Also write the solve matrix derived from logs
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Generate a synthetic bundle (JSONL) with planted ground truth
    SynthGenerate {
        /// TOML file with generator settings; flags override it
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tasks: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        attempts: Option<u32>,
        #[arg(long)]
        solve_probability: Option<f64>,
        #[arg(long)]
        lemmas_per_prompt: Option<usize>,
        #[arg(long)]
        direct_reuse: Option<usize>,
        #[arg(long)]
        soft_reuse: Option<usize>,
        #[arg(long)]
        perturbation: Option<f64>,
        #[arg(long)]
        reuse_tasks: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ground-truth JSON sidecar
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct LogArgs {
    /// Run-log JSONL file; repeatable, `-` reads stdin
    #[arg(long = "log", required = true, value_name = "PATH")]
    logs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    /// Count lemma names inside longer identifiers too
    #[arg(long)]
    substring_names: bool,
    /// Let any verified solution witness reuse, not only prompted ones
    #[arg(long)]
    permissive_reuse: bool,
}

#[derive(Debug, Args)]
struct PricingArgs {
    /// Pricing table (TOML or .json); falls back to $LEMMA_AUDIT_PRICING
    #[arg(long)]
    pricing: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LevelArg {
    Lemma,
    Task,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Use,
    Reuse,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    Attempts,
    Cost,
}

impl From<AxisArg> for XAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Attempts => XAxis::Attempts,
            AxisArg::Cost => XAxis::Cost,
        }
    }
}

fn parse_sample(s: &str) -> Result<SampleSize, String> {
    if s == "all" {
        return Ok(SampleSize::All);
    }
    s.parse::<usize>()
        .map(SampleSize::Count)
        .map_err(|_| format!("expected `all` or a count, got `{s}`"))
}

enum Failure {
    Usage(String),
    Data(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    2
                }
            };
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            2
        }
        Err(Failure::Data(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            1
        }
    }
}

fn load(paths: &[PathBuf]) -> Result<RunBundle, Failure> {
    Ok(runlog::ingest_many(paths, LogFormat::Jsonl)?)
}

fn options(workers: Option<usize>, m: &MatchArgs) -> AuditOptions {
    AuditOptions {
        name_match: if m.substring_names {
            NameMatch::Substring
        } else {
            NameMatch::WholeWord
        },
        reuse_scope: if m.permissive_reuse {
            ReuseScope::Permissive
        } else {
            ReuseScope::Causal
        },
        workers,
    }
}

fn pricing(args: &PricingArgs) -> Result<Option<PricingTable>, Failure> {
    let path = args
        .pricing
        .clone()
        .or_else(|| std::env::var_os(PRICING_ENV).map(PathBuf::from));
    path.map(|p| PricingTable::load(p).map_err(Failure::from))
        .transpose()
}

fn require_pricing(args: &PricingArgs) -> Result<PricingTable, Failure> {
    pricing(args)?.ok_or_else(|| {
        Failure::Usage(format!(
            "a pricing table is required (--pricing or ${PRICING_ENV})"
        ))
    })
}

/// Writes to `out` when given, otherwise to stdout.
fn emit(
    out: Option<&Path>,
    stdout: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> CliResult,
) -> CliResult {
    match out {
        Some(p) => {
            let file =
                File::create(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(stdout),
    }
}

fn write_json<T: Serialize>(w: &mut dyn Write, value: &T) -> CliResult {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

#[derive(Serialize)]
struct IngestSummary {
    runs: usize,
    attempts: usize,
    verified_attempts: usize,
    lemmas: BTreeMap<&'static str, usize>,
    usage_missing: usize,
    violations: Vec<String>,
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> CliResult {
    let workers = cli.workers.map(usize::from);
    match cli.command {
        Command::IngestCheck(logs) => {
            let bundle = load(&logs.logs)?;
            let violations: Vec<String> = runlog::validate(&bundle)
                .iter()
                .map(ToString::to_string)
                .collect();
            let mut lemmas = BTreeMap::new();
            for pop in Population::ALL {
                lemmas.insert(
                    pop.label(),
                    bundle
                        .lemmas()
                        .iter()
                        .filter(|l| l.population == pop)
                        .count(),
                );
            }
            let summary = IngestSummary {
                runs: bundle.run_ids().len(),
                attempts: bundle.attempts().len(),
                verified_attempts: bundle.verified_attempts().count(),
                lemmas,
                usage_missing: bundle.usage_missing_count(),
                violations,
            };
            write_json(stdout, &summary)?;
            if summary.violations.is_empty() {
                Ok(())
            } else {
                Err(Failure::Data(format!(
                    "{} invariant violation(s); first: {}",
                    summary.violations.len(),
                    summary.violations[0]
                )))
            }
        }
        Command::AuditUse { logs, matching } => {
            let bundle = load(&logs.logs)?;
            let opts = options(workers, &matching);
            write_json(stdout, &audit::summarize_use(&bundle, opts.name_match))
        }
        Command::Survival {
            logs,
            level,
            mode,
            thresholds,
            matching,
            out,
        } => {
            let grid =
                ThresholdGrid::parse(&thresholds).map_err(|e| Failure::Usage(e.to_string()))?;
            let bundle = load(&logs.logs)?;
            let opts = options(workers, &matching);
            let mode = match mode {
                ModeArg::Use => Mode::Use,
                ModeArg::Reuse => Mode::Reuse,
            };
            let curve = match level {
                LevelArg::Lemma => audit::lemma_survival(&bundle, mode, &grid, &opts)?,
                LevelArg::Task => audit::task_survival(&bundle, mode, &grid, &opts)?,
            };
            emit(out.as_deref(), stdout, |w| Ok(curve.write_csv(w)?))
        }
        Command::CorpusExtract {
            root,
            sample,
            seed,
            out,
        } => {
            let extracted = corpus::extract_dir(&root, workers)?;
            let lemmas = corpus::build_population(&extracted, sample, seed)?;
            let bundle = RunBundle::new(Vec::new(), lemmas, BTreeMap::new());
            emit(out.as_deref(), stdout, |w| Ok(bundle.write_jsonl(w)?))
        }
        Command::CostReport { logs, pricing } => {
            let table = require_pricing(&pricing)?;
            let bundle = load(&logs.logs)?;
            write_json(stdout, &budget::cost_report(&bundle, &table)?)
        }
        Command::CostCurve {
            logs,
            axis,
            pricing: p,
            out,
        } => {
            let table = match axis {
                AxisArg::Cost => Some(require_pricing(&p)?),
                AxisArg::Attempts => None,
            };
            let bundle = load(&logs.logs)?;
            let curve = budget::accuracy_curve(&bundle, axis.into(), table.as_ref())?;
            emit(out.as_deref(), stdout, |w| Ok(curve.write_csv(w)?))
        }
        Command::MatchBudget {
            baseline_attempts,
            ratio,
            system_log,
            baseline_log,
            pricing: p,
        } => {
            let ratio = match ratio {
                Some(r) => r,
                None => {
                    let table = require_pricing(&p)?;
                    let sys = budget::cost_report(&load(&system_log)?, &table)?;
                    let base = budget::cost_report(&load(&baseline_log)?, &table)?;
                    budget::budget_ratio(&sys, &base)?
                }
            };
            let n = budget::budget_matched_attempts(baseline_attempts, ratio)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            writeln!(stdout, "{n}")?;
            Ok(())
        }
        Command::Compare {
            system_log,
            baseline_log,
            axis,
            pricing: p,
            out,
        } => {
            let table = match axis {
                AxisArg::Cost => Some(require_pricing(&p)?),
                AxisArg::Attempts => None,
            };
            let sys = budget::accuracy_curve(&load(&system_log)?, axis.into(), table.as_ref())?;
            let base = budget::accuracy_curve(&load(&baseline_log)?, axis.into(), table.as_ref())?;
            let cmp = budget::compare_at_budget(&sys, &base)?;
            let to_file = out.is_some();
            emit(out.as_deref(), stdout, |w| Ok(cmp.write_csv(w)?))?;
            if to_file {
                match cmp.crossover {
                    Some(x) => writeln!(stdout, "crossover: {x}")?,
                    None => writeln!(stdout, "crossover: none")?,
                }
            }
            Ok(())
        }
        Command::Stability {
            matrix,
            baseline_log,
            paraphrase_log,
            matrix_out,
        } => {
            let m = match matrix {
                Some(path) => {
                    let f = File::open(&path)
                        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
                    SolveMatrix::read_csv(f)?
                }
                None => SolveMatrix::from_bundles(&load(&baseline_log)?, &load(&paraphrase_log)?)?,
            };
            if let Some(p) = matrix_out {
                emit(Some(&p), stdout, |w| Ok(m.write_csv(w)?))?;
            }
            write_json(stdout, &stability::stability_report(&m)?)
        }
        Command::SynthGenerate {
            config,
            seed,
            tasks,
            runs,
            attempts,
            solve_probability,
            lemmas_per_prompt,
            direct_reuse,
            soft_reuse,
            perturbation,
            reuse_tasks,
            out,
            truth,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
                    toml::from_str::<SynthConfig>(&text)
                        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?
                }
                None => SynthConfig::default(),
            };
            macro_rules! set {
                ($($flag:ident => $field:ident),*) => {
                    $(if let Some(v) = $flag { cfg.$field = v; })*
                };
            }
            set!(seed => seed, tasks => n_tasks, runs => n_runs, attempts => attempts_per_task,
                solve_probability => solve_probability, lemmas_per_prompt => lemmas_per_prompt,
                direct_reuse => planted_direct_reuse, soft_reuse => planted_soft_reuse,
                perturbation => perturbation_rate, reuse_tasks => reuse_tasks);
            let (bundle, gt) = synth::generate(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
            if let Some(p) = truth {
                emit(Some(&p), stdout, |w| write_json(w, &gt))?;
            }
            emit(out.as_deref(), stdout, |w| Ok(bundle.write_jsonl(w)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("lemma-audit").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn match_budget_prints_cap() {
        let (code, out, _) = run_capture(&[
            "match-budget",
            "--baseline-attempts",
            "100",
            "--ratio",
            "5.84",
        ]);
        assert_eq!((code, out.as_str()), (0, "17\n"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_capture(&["no-such-command"]).0, 2);
        assert_eq!(
            run_capture(&["match-budget", "--baseline-attempts", "100"]).0,
            2
        );
        assert_eq!(
            run_capture(&["match-budget", "--baseline-attempts", "0", "--ratio", "2"]).0,
            2
        );
        assert_eq!(run_capture(&["survival", "--log", "x", "--bogus"]).0, 2);
        assert_eq!(
            run_capture(&["survival", "--log", "x", "--thresholds", "0:2:0.1"]).0,
            2
        );
        assert_eq!(
            run_capture(&["audit-use", "--log", "x", "--workers", "0"]).0,
            2
        );
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let (code, _, err) = run_capture(&["audit-use", "--log", "/nonexistent/run.jsonl"]);
        assert_eq!(code, 1);
        assert!(err.contains("/nonexistent/run.jsonl"));
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("survival"));
    }
}
