//! Cost accounting and compute-budget normalization.
//!
//! Token usage is priced per model, averaged into a cost per prover attempt,
//! and used both to compare systems at equal spend and to cap the attempts
//! of the more expensive system so that its budget matches the baseline's.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runlog::RunBundle;

#[derive(Debug, Error)]
pub enum BudgetError {
    #[error("no price for model \"{model}\" (run \"{run_id}\")")]
    UnknownModel { model: String, run_id: String },
    #[error("no attempts to account for")]
    NoAttempts,
    #[error("cost per attempt must be positive ({which} is {value})")]
    NonPositiveCost { which: &'static str, value: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("pricing for a cost axis is missing")]
    MissingPricing,
    #[error("curves use different x axes ({system:?} vs {baseline:?})")]
    AxisMismatch { system: XAxis, baseline: XAxis },
    #[error("pricing file {path}: {message}")]
    Pricing { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPrice {
    pub usd_per_million_input_tokens: f64,
    pub usd_per_million_output_tokens: f64,
    /// Embedding models are priced but never counted.
    #[serde(default)]
    pub embedding: bool,
}

/// Prices per model, loaded from TOML (`[models."name"]` tables) or JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingTable {
    pub models: BTreeMap<String, ModelPrice>,
}

impl PricingTable {
    pub fn new(models: BTreeMap<String, ModelPrice>) -> Result<Self, BudgetError> {
        let t = Self { models };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<(), BudgetError> {
        for (name, p) in &self.models {
            for v in [
                p.usd_per_million_input_tokens,
                p.usd_per_million_output_tokens,
            ] {
                if !v.is_finite() || v < 0.0 {
                    return Err(BudgetError::InvalidInput(format!(
                        "price for \"{name}\" must be finite and non-negative, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, model: &str) -> Option<&ModelPrice> {
        self.models.get(model)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, BudgetError> {
        let t: Self = toml::from_str(s).map_err(|e| BudgetError::Pricing {
            path: "<toml>".into(),
            message: e.to_string(),
        })?;
        t.check()?;
        Ok(t)
    }

    pub fn from_json_str(s: &str) -> Result<Self, BudgetError> {
        let t: Self = serde_json::from_str(s).map_err(|e| BudgetError::Pricing {
            path: "<json>".into(),
            message: e.to_string(),
        })?;
        t.check()?;
        Ok(t)
    }

    /// `.json` files are read as JSON, anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BudgetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BudgetError::Pricing {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            BudgetError::Pricing { message, .. } => BudgetError::Pricing {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunCost {
    pub run_id: String,
    pub attempts: usize,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub cost_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub total_cost_usd: f64,
    pub total_attempts: usize,
    pub cost_per_attempt: f64,
    /// Sum over runs of the largest attempt index, i.e. passes over the task pool.
    pub attempt_rounds: u64,
    pub cost_per_round: f64,
    pub per_run: Vec<RunCost>,
    pub excluded_embedding_attempts: usize,
    pub warnings: Vec<String>,
}

/// Prices every attempt and averages over the attempts of all runs.
///
/// Summation runs per run in `run_id` order, then attempt order, so totals
/// are reproducible bit for bit.
pub fn cost_report(bundle: &RunBundle, pricing: &PricingTable) -> Result<CostReport, BudgetError> {
    let mut runs: BTreeMap<&str, Vec<&crate::runlog::Attempt>> = BTreeMap::new();
    for a in bundle.attempts() {
        runs.entry(&a.run_id).or_default().push(a);
    }
    let mut per_run = Vec::with_capacity(runs.len());
    let mut excluded = 0;
    let mut rounds = 0u64;
    for (run_id, attempts) in &runs {
        let mut rc = RunCost {
            run_id: run_id.to_string(),
            attempts: 0,
            tokens_in: 0,
            tokens_out: 0,
            cost_usd: 0.0,
        };
        let mut max_index = 0;
        for a in attempts {
            let price = pricing
                .get(&a.model)
                .ok_or_else(|| BudgetError::UnknownModel {
                    model: a.model.clone(),
                    run_id: a.run_id.clone(),
                })?;
            if price.embedding {
                excluded += 1;
                continue;
            }
            rc.attempts += 1;
            rc.tokens_in += a.tokens_in;
            rc.tokens_out += a.tokens_out;
            rc.cost_usd += (a.tokens_in as f64 * price.usd_per_million_input_tokens
                + a.tokens_out as f64 * price.usd_per_million_output_tokens)
                / 1e6;
            max_index = max_index.max(a.attempt_index);
        }
        rounds += u64::from(max_index);
        per_run.push(rc);
    }
    let total_attempts: usize = per_run.iter().map(|r| r.attempts).sum();
    if total_attempts == 0 {
        return Err(BudgetError::NoAttempts);
    }
    let total_cost_usd: f64 = per_run.iter().map(|r| r.cost_usd).sum();

    let mut warnings = Vec::new();
    if per_run
        .iter()
        .all(|r| r.tokens_in == 0 && r.tokens_out == 0)
    {
        warnings.push("bundle records no token usage; all costs are zero".to_string());
    }
    let missing = bundle.usage_missing_count();
    if missing > 0 {
        warnings.push(format!(
            "{missing} attempt(s) had no usage logged and cost nothing"
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(CostReport {
        total_cost_usd,
        total_attempts,
        cost_per_attempt: total_cost_usd / total_attempts as f64,
        attempt_rounds: rounds,
        cost_per_round: if rounds > 0 {
            total_cost_usd / rounds as f64
        } else {
            0.0
        },
        per_run,
        excluded_embedding_attempts: excluded,
        warnings,
    })
}

/// How many times more a system spends per attempt than the baseline.
pub fn budget_ratio(system: &CostReport, baseline: &CostReport) -> Result<f64, BudgetError> {
    for (which, r) in [("system", system), ("baseline", baseline)] {
        if r.cost_per_attempt.is_nan() || r.cost_per_attempt <= 0.0 {
            return Err(BudgetError::NonPositiveCost {
                which,
                value: r.cost_per_attempt,
            });
        }
    }
    Ok(system.cost_per_attempt / baseline.cost_per_attempt)
}

/// Attempts a system costing `ratio` times the baseline can afford within
/// the baseline's budget: `floor(baseline_attempts / ratio)`, at least 1.
pub fn budget_matched_attempts(baseline_attempts: u64, ratio: f64) -> Result<u64, BudgetError> {
    if baseline_attempts == 0 {
        return Err(BudgetError::InvalidInput(
            "baseline attempts must be at least 1".into(),
        ));
    }
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(BudgetError::InvalidInput(format!(
            "ratio must be positive and finite, got {ratio}"
        )));
    }
    // Quotients that are integers in decimal can land a hair below in binary.
    let q = baseline_attempts as f64 / ratio;
    let k = (q * (1.0 + 1e-12)).floor();
    Ok((k as u64).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XAxis {
    Attempts,
    Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
}

/// Mean cumulative accuracy (with sample std over runs) against budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyCurve {
    pub axis: XAxis,
    pub points: Vec<CurvePoint>,
}

impl AccuracyCurve {
    /// Checks that `x` strictly increases and `mean` never decreases.
    pub fn new(axis: XAxis, points: Vec<CurvePoint>) -> Result<Self, BudgetError> {
        for w in points.windows(2) {
            if w[1].x.is_nan() || w[1].x <= w[0].x {
                return Err(BudgetError::InvalidInput(format!(
                    "x must strictly increase ({} then {})",
                    w[0].x, w[1].x
                )));
            }
            if w[1].mean < w[0].mean {
                return Err(BudgetError::InvalidInput(format!(
                    "mean accuracy must not decrease ({} then {})",
                    w[0].mean, w[1].mean
                )));
            }
        }
        Ok(Self { axis, points })
    }

    /// Mean accuracy at the largest x not exceeding `x`; 0 before the first point.
    pub fn mean_at(&self, x: f64) -> f64 {
        let i = self.points.partition_point(|p| p.x <= x);
        if i == 0 {
            0.0
        } else {
            self.points[i - 1].mean
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), BudgetError> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| BudgetError::InvalidInput(e.to_string());
        out.write_record(["x", "mean", "std"]).map_err(err)?;
        for p in &self.points {
            out.write_record([
                p.x.to_string(),
                format!("{:.6}", p.mean),
                format!("{:.6}", p.std),
            ])
            .map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn mean_and_sample_std(xs: &[f64]) -> (f64, f64) {
    let k = xs.len();
    if k == 0 {
        return (0.0, 0.0);
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let mean = xs.iter().sum::<f64>() / k as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (k - 1) as f64).sqrt())
}

/// Per-run solve matrix: for each run, the task count and each task's first
/// verified attempt index.
struct SolveTimes {
    runs: Vec<(usize, Vec<u32>)>,
    max_index: u32,
}

fn solve_times(bundle: &RunBundle) -> SolveTimes {
    let mut runs: BTreeMap<&str, BTreeMap<&str, Option<u32>>> = BTreeMap::new();
    let mut max_index = 0;
    for a in bundle.attempts() {
        max_index = max_index.max(a.attempt_index);
        let slot = runs
            .entry(&a.run_id)
            .or_default()
            .entry(&a.task_id)
            .or_insert(None);
        if a.verified {
            *slot = Some(slot.map_or(a.attempt_index, |s| s.min(a.attempt_index)));
        }
    }
    SolveTimes {
        runs: runs
            .into_values()
            .map(|tasks| (tasks.len(), tasks.into_values().flatten().collect()))
            .collect(),
        max_index,
    }
}

/// Cumulative accuracy after each attempt index.
///
/// On the cost axis, `x(i)` is the modelled cost of attempts `1..=i` on the
/// problems still unsolved before each attempt, priced at the bundle's
/// average cost per attempt and averaged over runs. Points stop once every
/// run has solved every task.
pub fn accuracy_curve(
    bundle: &RunBundle,
    axis: XAxis,
    pricing: Option<&PricingTable>,
) -> Result<AccuracyCurve, BudgetError> {
    let cost_per_attempt = match axis {
        XAxis::Attempts => 0.0,
        XAxis::Cost => {
            let pricing = pricing.ok_or(BudgetError::MissingPricing)?;
            let c = cost_report(bundle, pricing)?.cost_per_attempt;
            if c.is_nan() || c <= 0.0 {
                return Err(BudgetError::NonPositiveCost {
                    which: "bundle",
                    value: c,
                });
            }
            c
        }
    };
    let st = solve_times(bundle);
    if st.runs.is_empty() {
        return Err(BudgetError::NoAttempts);
    }
    let k = st.runs.len() as f64;
    let mut points = Vec::new();
    let mut spent = 0.0f64;
    for i in 1..=st.max_index {
        let solved_before = |tasks: &Vec<u32>| tasks.iter().filter(|&&s| s < i).count();
        let unsolved: f64 = st
            .runs
            .iter()
            .map(|(n, t)| (n - solved_before(t)) as f64)
            .sum::<f64>()
            / k;
        if axis == XAxis::Cost && unsolved == 0.0 {
            break;
        }
        spent += unsolved;
        let accs: Vec<f64> = st
            .runs
            .iter()
            .map(|(n, t)| t.iter().filter(|&&s| s <= i).count() as f64 / *n as f64)
            .collect();
        let (mean, std) = mean_and_sample_std(&accs);
        let x = match axis {
            XAxis::Attempts => f64::from(i),
            XAxis::Cost => spent * cost_per_attempt,
        };
        points.push(CurvePoint { x, mean, std });
    }
    AccuracyCurve::new(axis, points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub x: f64,
    pub baseline_mean: f64,
    pub system_mean: f64,
    /// `system_mean - baseline_mean`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetComparison {
    pub rows: Vec<ComparisonRow>,
    /// First baseline x at which the sign of the gap flips.
    pub crossover: Option<f64>,
}

impl BudgetComparison {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), BudgetError> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| BudgetError::InvalidInput(e.to_string());
        out.write_record(["x", "baseline_mean", "system_mean", "gap"])
            .map_err(err)?;
        for r in &self.rows {
            out.write_record([
                r.x.to_string(),
                format!("{:.6}", r.baseline_mean),
                format!("{:.6}", r.system_mean),
                format!("{:.6}", r.gap),
            ])
            .map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Aligns the system curve onto the baseline's budgets (step interpolation).
pub fn compare_at_budget(
    system: &AccuracyCurve,
    baseline: &AccuracyCurve,
) -> Result<BudgetComparison, BudgetError> {
    if system.axis != baseline.axis {
        return Err(BudgetError::AxisMismatch {
            system: system.axis,
            baseline: baseline.axis,
        });
    }
    let rows: Vec<ComparisonRow> = baseline
        .points
        .iter()
        .map(|p| {
            let system_mean = system.mean_at(p.x);
            ComparisonRow {
                x: p.x,
                baseline_mean: p.mean,
                system_mean,
                gap: system_mean - p.mean,
            }
        })
        .collect();
    let mut crossover = None;
    let mut last_sign = 0.0;
    for r in &rows {
        if r.gap != 0.0 {
            let sign = r.gap.signum();
            if last_sign != 0.0 && sign != last_sign {
                crossover = Some(r.x);
                break;
            }
            last_sign = sign;
        }
    }
    Ok(BudgetComparison { rows, crossover })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runlog::{Attempt, System};

    fn attempt(run: &str, task: &str, idx: u32, ok: bool, tin: u64, tout: u64) -> Attempt {
        Attempt {
            run_id: run.into(),
            system: System::Baseline,
            model: "m".into(),
            task_id: task.into(),
            attempt_index: idx,
            prompt_lemmas: vec![],
            solution_text: if ok { "done".into() } else { String::new() },
            verified: ok,
            tokens_in: tin,
            tokens_out: tout,
            usage_missing: false,
        }
    }

    fn bundle(attempts: Vec<Attempt>) -> RunBundle {
        RunBundle::new(attempts, vec![], Default::default())
    }

    fn pricing(input: f64, output: f64) -> PricingTable {
        PricingTable::new(BTreeMap::from([(
            "m".to_string(),
            ModelPrice {
                usd_per_million_input_tokens: input,
                usd_per_million_output_tokens: output,
                embedding: false,
            },
        )]))
        .unwrap()
    }

    #[test]
    fn one_million_input_tokens_cost_one_dollar() {
        let r = cost_report(
            &bundle(vec![attempt("r", "t", 1, false, 1_000_000, 0)]),
            &pricing(1.0, 5.0),
        )
        .unwrap();
        assert_eq!(r.total_cost_usd, 1.0);
        assert_eq!(r.cost_per_attempt, 1.0);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn zero_usage_warns() {
        let r = cost_report(
            &bundle(vec![attempt("r", "t", 1, false, 0, 0)]),
            &pricing(1.0, 1.0),
        )
        .unwrap();
        assert_eq!(r.total_cost_usd, 0.0);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn unknown_model_and_empty_bundle() {
        let mut a = attempt("r", "t", 1, false, 1, 1);
        a.model = "other".into();
        assert!(matches!(
            cost_report(&bundle(vec![a]), &pricing(1.0, 1.0)),
            Err(BudgetError::UnknownModel { .. })
        ));
        assert!(matches!(
            cost_report(&bundle(vec![]), &pricing(1.0, 1.0)),
            Err(BudgetError::NoAttempts)
        ));
    }

    #[test]
    fn embedding_models_are_excluded() {
        let mut p = pricing(1.0, 1.0);
        p.models.insert(
            "ada".into(),
            ModelPrice {
                usd_per_million_input_tokens: 0.1,
                usd_per_million_output_tokens: 0.0,
                embedding: true,
            },
        );
        let mut e = attempt("r", "t", 2, false, 5_000_000, 0);
        e.model = "ada".into();
        let r = cost_report(
            &bundle(vec![attempt("r", "t", 1, false, 2_000_000, 0), e]),
            &p,
        )
        .unwrap();
        assert_eq!(r.total_attempts, 1);
        assert_eq!(r.total_cost_usd, 2.0);
        assert_eq!(r.excluded_embedding_attempts, 1);
    }

    #[test]
    fn ratios() {
        let base = cost_report(
            &bundle(vec![attempt("r", "t", 1, false, 1000, 100)]),
            &pricing(1.0, 2.0),
        )
        .unwrap();
        assert_eq!(budget_ratio(&base, &base).unwrap(), 1.0);
        let sys = cost_report(
            &bundle(vec![attempt("r", "t", 1, false, 2000, 200)]),
            &pricing(1.0, 2.0),
        )
        .unwrap();
        assert_eq!(budget_ratio(&sys, &base).unwrap(), 2.0);
        let zero = cost_report(
            &bundle(vec![attempt("r", "t", 1, false, 0, 0)]),
            &pricing(1.0, 2.0),
        )
        .unwrap();
        assert!(budget_ratio(&sys, &zero).is_err());
    }

    #[test]
    fn matched_attempts() {
        assert_eq!(budget_matched_attempts(100, 5.84).unwrap(), 17);
        assert_eq!(budget_matched_attempts(50, 1.0).unwrap(), 50);
        assert_eq!(budget_matched_attempts(50, 14.23).unwrap(), 3);
        assert_eq!(budget_matched_attempts(50, 5.94).unwrap(), 8);
        assert_eq!(budget_matched_attempts(3, 0.3).unwrap(), 10);
        assert_eq!(budget_matched_attempts(1, 100.0).unwrap(), 1);
        assert!(budget_matched_attempts(0, 1.0).is_err());
        assert!(budget_matched_attempts(10, 0.0).is_err());
        assert!(budget_matched_attempts(10, f64::NAN).is_err());
    }

    #[test]
    fn everything_solved_first_try() {
        let b = bundle(vec![
            attempt("r", "a", 1, true, 1, 1),
            attempt("r", "b", 1, true, 1, 1),
        ]);
        let c = accuracy_curve(&b, XAxis::Attempts, None).unwrap();
        assert_eq!(
            c.points,
            vec![CurvePoint {
                x: 1.0,
                mean: 1.0,
                std: 0.0
            }]
        );
    }

    #[test]
    fn two_runs_one_late_solve() {
        let b = bundle(vec![
            attempt("r1", "t", 1, false, 1, 1),
            attempt("r1", "t", 2, true, 1, 1),
            attempt("r2", "t", 1, false, 1, 1),
            attempt("r2", "t", 2, false, 1, 1),
            attempt("r2", "t", 3, false, 1, 1),
        ]);
        let c = accuracy_curve(&b, XAxis::Attempts, None).unwrap();
        let means: Vec<f64> = c.points.iter().map(|p| p.mean).collect();
        assert_eq!(means, [0.0, 0.5, 0.5]);
        assert_eq!(c.points[0].std, 0.0);
        assert_eq!(c.points[1].std, 0.5f64.sqrt());
    }

    #[test]
    fn cost_axis_counts_unsolved_problems() {
        // Two tasks; one solved at attempt 1, the other at attempt 3.
        let b = bundle(vec![
            attempt("r", "a", 1, true, 1_000_000, 0),
            attempt("r", "b", 1, false, 1_000_000, 0),
            attempt("r", "b", 2, false, 1_000_000, 0),
            attempt("r", "b", 3, true, 1_000_000, 0),
        ]);
        assert!(matches!(
            accuracy_curve(&b, XAxis::Cost, None),
            Err(BudgetError::MissingPricing)
        ));
        let c = accuracy_curve(&b, XAxis::Cost, Some(&pricing(1.0, 0.0))).unwrap();
        let xs: Vec<f64> = c.points.iter().map(|p| p.x).collect();
        assert_eq!(xs, [2.0, 3.0, 4.0]);
        assert_eq!(c.points[2].mean, 1.0);
    }

    #[test]
    fn comparison_gaps() {
        let pts = |v: &[(f64, f64)]| {
            AccuracyCurve::new(
                XAxis::Attempts,
                v.iter()
                    .map(|&(x, mean)| CurvePoint { x, mean, std: 0.0 })
                    .collect(),
            )
            .unwrap()
        };
        let a = pts(&[(1.0, 0.1), (2.0, 0.2)]);
        let same = compare_at_budget(&a, &a).unwrap();
        assert!(same.rows.iter().all(|r| r.gap == 0.0));
        assert_eq!(same.crossover, None);

        let low = pts(&[(1.0, 0.0), (2.0, 0.1)]);
        let cmp = compare_at_budget(&low, &a).unwrap();
        assert!(cmp.rows.iter().all(|r| r.gap < 0.0));

        let crossing = pts(&[(1.0, 0.0), (2.0, 0.5)]);
        assert_eq!(
            compare_at_budget(&crossing, &a).unwrap().crossover,
            Some(2.0)
        );

        let cost = AccuracyCurve::new(XAxis::Cost, vec![]).unwrap();
        assert!(matches!(
            compare_at_budget(&cost, &a),
            Err(BudgetError::AxisMismatch { .. })
        ));
    }

    #[test]
    fn curve_constructor_rejects_bad_points() {
        let p = |x, mean| CurvePoint { x, mean, std: 0.0 };
        assert!(AccuracyCurve::new(XAxis::Attempts, vec![p(1.0, 0.5), p(1.0, 0.6)]).is_err());
        assert!(AccuracyCurve::new(XAxis::Attempts, vec![p(1.0, 0.5), p(2.0, 0.4)]).is_err());
    }

    #[test]
    fn pricing_formats() {
        let toml = r#"
            [models."gpt-4o-mini"]
            usd_per_million_input_tokens = 0.15
            usd_per_million_output_tokens = 0.6
        "#;
        let t = PricingTable::from_toml_str(toml).unwrap();
        assert_eq!(
            t.get("gpt-4o-mini").unwrap().usd_per_million_output_tokens,
            0.6
        );
        let json = r#"{"models":{"x":{"usd_per_million_input_tokens":1,"usd_per_million_output_tokens":2}}}"#;
        assert!(PricingTable::from_json_str(json).is_ok());
        let neg = toml.replace("0.15", "-1.0");
        assert!(PricingTable::from_toml_str(&neg).is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matched_attempts_floor_bound(a in 1u64..10_000, r in 0.01f64..50.0, dr in 0.0f64..10.0) {
            let k = budget_matched_attempts(a, r).unwrap();
            prop_assert!(k as f64 * r <= a as f64 + r + 1e-9);
            prop_assert!(budget_matched_attempts(a, r + dr).unwrap() <= k);
        }

        #[test]
        fn identical_runs_have_zero_std(k in 1usize..6, solve_at in prop::collection::vec(1u32..6, 1..8)) {
            let mut attempts = Vec::new();
            for run in 0..k {
                for (t, &s) in solve_at.iter().enumerate() {
                    for i in 1..=s {
                        attempts.push(attempt(&format!("r{run}"), &format!("t{t}"), i, i == s, 1, 1));
                    }
                }
            }
            let c = accuracy_curve(&bundle(attempts), XAxis::Attempts, None).unwrap();
            prop_assert!(c.points.iter().all(|p| p.std == 0.0));
            prop_assert!(c.points.windows(2).all(|w| w[0].mean <= w[1].mean));
        }
    }
}
