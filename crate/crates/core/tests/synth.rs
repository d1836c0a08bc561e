use std::collections::BTreeMap;

use lemma_audit::audit::{lemma_survival, summarize_use, AuditOptions, Mode, ThresholdGrid};
use lemma_audit::budget::{cost_report, ModelPrice, PricingTable};
use lemma_audit::lexref::NameMatch;
use lemma_audit::runlog::RunBundle;
use lemma_audit::softuse::soft_use_score;
use lemma_audit::synth::{generate, PlantKind, SynthConfig};

fn soft_config(seed: u64, p: f64) -> SynthConfig {
    SynthConfig {
        seed,
        n_tasks: 10,
        attempts_per_task: 2,
        lemmas_per_prompt: 1,
        planted_soft_reuse: 1,
        perturbation_rate: p,
        lemma_tokens_min: 50,
        lemma_tokens_max: 50,
        non_retrieved_lemmas: 0,
        ..SynthConfig::default()
    }
}

#[test]
fn perturbed_plants_score_near_one_minus_p() {
    // 100 seeds x 1 plant x 2 copies x 50 tokens = 10,000 planted tokens
    let p = 0.1;
    let (mut total, mut pairs, mut tokens) = (0.0, 0, 0);
    for seed in 0..100 {
        let (bundle, truth) = generate(&soft_config(seed, p)).unwrap();
        for plant in truth.plants() {
            let lemma = bundle.lemma(&plant.lemma_id).unwrap();
            for c in &plant.copies {
                let sol = bundle
                    .verified_attempts()
                    .find(|a| a.task_id == c.task_id)
                    .unwrap();
                let s = soft_use_score(lemma, &sol.solution_text).unwrap();
                assert!(s.matched() >= plant.lemma_tokens - c.replaced_positions.len());
                total += s.score;
                pairs += 1;
                tokens += plant.lemma_tokens;
            }
        }
    }
    assert_eq!(tokens, 10_000);
    let mean = total / pairs as f64;
    assert!(
        mean >= 1.0 - p - 0.02 && mean <= 1.0 - p + 0.02,
        "mean {mean}"
    );
}

#[test]
fn summary_matches_ground_truth_across_runs() {
    for seed in [1, 2, 3] {
        let cfg = SynthConfig {
            seed,
            n_runs: 3,
            n_tasks: 30,
            planted_direct_reuse: 2,
            planted_soft_reuse: 4,
            reuse_tasks: 3,
            lemma_tokens_min: 30,
            lemma_tokens_max: 60,
            ..SynthConfig::default()
        };
        let (bundle, truth) = generate(&cfg).unwrap();
        let s = summarize_use(&bundle, NameMatch::WholeWord);
        assert_eq!(s.verbatim_reused_once, truth.verbatim_reused_once());
        assert_eq!(s.verbatim_reused_multi, truth.verbatim_reused_multi());
        assert_eq!(s.verbatim_reused_multi, 6);
        assert_eq!(s.prompt_lemma_count, truth.prompted_lemmas());
        assert_eq!(s.successful_attempts, 3 * cfg.solved_per_run());
    }
}

#[test]
fn lemma_reuse_levels_respect_surviving_tokens() {
    let cfg = SynthConfig {
        seed: 5,
        n_tasks: 40,
        planted_direct_reuse: 1,
        planted_soft_reuse: 10,
        perturbation_rate: 0.2,
        lemma_tokens_min: 40,
        lemma_tokens_max: 80,
        ..SynthConfig::default()
    };
    let (bundle, truth) = generate(&cfg).unwrap();
    let levels = reuse_levels(&bundle);
    for plant in truth.plants() {
        let level = levels[&plant.lemma_id];
        assert!(
            level >= plant.min_surviving_fraction() - 1e-12,
            "{}",
            plant.lemma_id
        );
        if plant.kind == PlantKind::Verbatim {
            assert_eq!(level, 1.0);
        }
    }
    let grid = ThresholdGrid::parse("0:1:0.25").unwrap();
    let curve = lemma_survival(&bundle, Mode::Reuse, &grid, &AuditOptions::default()).unwrap();
    let at_zero = curve.population("retrieved").unwrap()[0];
    assert_eq!(at_zero, 11.0 / cfg.prompted_pool() as f64);
}

fn reuse_levels(bundle: &RunBundle) -> BTreeMap<String, f64> {
    lemma_audit::audit::lemma_levels(bundle, &AuditOptions::default())
        .unwrap()
        .into_iter()
        .filter_map(|l| l.reuse_level.map(|r| (l.lemma_id, r.value())))
        .collect()
}

#[test]
fn cost_report_equals_naive_resummation_and_is_additive() {
    let pricing = PricingTable::new(BTreeMap::from([(
        "gpt-4o-mini".to_string(),
        ModelPrice {
            usd_per_million_input_tokens: 0.15,
            usd_per_million_output_tokens: 0.6,
            embedding: false,
        },
    )]))
    .unwrap();
    let cfg = SynthConfig {
        seed: 21,
        n_runs: 3,
        ..SynthConfig::default()
    };
    let (bundle, _) = generate(&cfg).unwrap();
    let report = cost_report(&bundle, &pricing).unwrap();

    // spreadsheet-style: one row per attempt, one column total
    let rows: Vec<f64> = bundle
        .attempts()
        .iter()
        .map(|a| a.tokens_in as f64 * 0.15e-6 + a.tokens_out as f64 * 0.6e-6)
        .collect();
    let total: f64 = rows.iter().sum();
    assert!((report.total_cost_usd - total).abs() < 1e-9);
    assert_eq!(report.total_attempts, rows.len());
    assert_eq!(
        report.cost_per_attempt,
        report.total_cost_usd / report.total_attempts as f64
    );
    assert_eq!(report.per_run.len(), 3);

    let a = bundle.filter_attempts(|x| x.run_id == "run0");
    let b = bundle.filter_attempts(|x| x.run_id != "run0");
    let (ra, rb) = (
        cost_report(&a, &pricing).unwrap(),
        cost_report(&b, &pricing).unwrap(),
    );
    assert!((ra.total_cost_usd + rb.total_cost_usd - report.total_cost_usd).abs() < 1e-9);
    assert_eq!(ra.total_attempts + rb.total_attempts, report.total_attempts);
}
