use std::path::Path;

use fancy_regex::Regex;
use lemma_audit::corpus::{
    build_population, extract_dir, extract_lemmas, ExtractedLemma, SampleSize,
};
use lemma_audit::rng::SplitMix64;
use proptest::prelude::*;

const PATTERN: &str = r"(?:lemma|theorem)\s+[^:]+?\s*:(?:[\s\S](?!lemma|theorem))+?qed";

fn spans(src: &str) -> Vec<(usize, usize)> {
    extract_lemmas(src, "x.thy")
        .iter()
        .map(|e| e.byte_span)
        .collect()
}

fn regex_spans(re: &Regex, src: &str) -> Vec<(usize, usize)> {
    re.find_iter(src)
        .map(|m| {
            let m = m.unwrap();
            (m.start(), m.end())
        })
        .collect()
}

#[test]
fn reference_fixture_matches() {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus/regex_reference.json");
    let cases: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let re = Regex::new(PATTERN).unwrap();
    for case in cases.as_array().unwrap() {
        let src = case["source"].as_str().unwrap();
        let expected: Vec<(usize, usize)> = case["matches"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| {
                (
                    m["start"].as_u64().unwrap() as usize,
                    m["end"].as_u64().unwrap() as usize,
                )
            })
            .collect();
        assert_eq!(spans(src), expected, "{}", case["name"]);
        // the fixtures stay within the subset where both engines agree on \s
        assert_eq!(
            regex_spans(&re, src),
            expected,
            "fancy-regex on {}",
            case["name"]
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn agrees_with_backtracking_engine(
        parts in prop::collection::vec(
            prop_oneof![
                Just("lemma"), Just("theorem"), Just("qed"), Just(":"), Just(" "), Just("\n"),
                Just("x"), Just("foo"), Just("lemmas"), Just("é"), Just("  "), Just("\t"),
            ],
            0..40,
        )
    ) {
        let src: String = parts.concat();
        let re = Regex::new(PATTERN).unwrap();
        prop_assert_eq!(spans(&src), regex_spans(&re, &src), "source {:?}", src);
    }
}

#[test]
fn extractions_are_well_formed() {
    let mut rng = SplitMix64::new(11);
    let words = [
        "lemma", "theorem", "qed", ":", "foo", "by", "simp", "proof", "\n", " ",
    ];
    for _ in 0..200 {
        let src: String = (0..80)
            .map(|_| words[rng.below(words.len() as u64) as usize])
            .collect::<Vec<_>>()
            .join(" ");
        let ex = extract_lemmas(&src, "x.thy");
        for w in ex.windows(2) {
            assert!(w[0].byte_span.1 <= w[1].byte_span.0);
        }
        for e in &ex {
            assert!(e.text.starts_with("lemma") || e.text.starts_with("theorem"));
            assert!(e.text.ends_with("qed"));
            assert_eq!(&src[e.byte_span.0..e.byte_span.1], e.text);
        }
    }
}

#[test]
fn directory_walk_is_sorted_and_relative() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("b")).unwrap();
    std::fs::write(dir.path().join("b/Z.thy"), "lemma z: X qed").unwrap();
    std::fs::write(dir.path().join("A.thy"), "lemma a: X qed\ntheorem t: Y qed").unwrap();
    std::fs::write(dir.path().join("notes.txt"), "lemma n: X qed").unwrap();
    let ex = extract_dir(dir.path(), Some(2)).unwrap();
    let got: Vec<(&str, usize)> = ex
        .iter()
        .map(|e| (e.source_path.as_str(), e.byte_span.0))
        .collect();
    assert_eq!(got, [("A.thy", 0), ("A.thy", 15), ("b/Z.thy", 0)]);
    assert_eq!(extract_dir(dir.path(), None).unwrap(), ex);
}

fn fake_extractions(n: usize) -> Vec<ExtractedLemma> {
    (0..n)
        .map(|i| ExtractedLemma {
            text: format!("lemma l{i}: X qed"),
            byte_span: (i * 20, i * 20 + 15),
            source_path: "F.thy".into(),
        })
        .collect()
}

#[test]
fn full_sample_is_a_deterministic_permutation() {
    let ex = fake_extractions(50);
    let a = build_population(&ex, SampleSize::Count(50), 4).unwrap();
    let b = build_population(&ex, SampleSize::Count(50), 4).unwrap();
    assert_eq!(a, b);
    let mut ids: Vec<String> = a.iter().map(|l| l.lemma_id.clone()).collect();
    let in_order: Vec<String> = build_population(&ex, SampleSize::All, 0)
        .unwrap()
        .into_iter()
        .map(|l| l.lemma_id)
        .collect();
    assert_ne!(ids, in_order);
    ids.sort();
    let mut sorted = in_order.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

fn ln_choose(n: u64, k: u64) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// P(X = k) for X ~ Binomial(n, p).
fn binom_pmf(n: u64, k: u64, p: f64) -> f64 {
    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

#[test]
fn inclusion_frequencies_are_binomial() {
    const LEMMAS: usize = 1000;
    const SEEDS: u64 = 200;
    let ex = fake_extractions(LEMMAS);
    let mut counts = vec![0u64; LEMMAS];
    for seed in 0..SEEDS {
        for l in build_population(&ex, SampleSize::Count(100), seed).unwrap() {
            let i: usize = l
                .lemma_id
                .trim_start_matches("F.thy#")
                .parse::<usize>()
                .unwrap()
                / 20;
            counts[i] += 1;
        }
    }
    let p = 0.1;
    let mean = SEEDS as f64 * p;
    let sigma = (SEEDS as f64 * p * (1.0 - p)).sqrt();
    let outside = |k: u64| (k as f64 - mean).abs() > 3.0 * sigma;

    // With 1000 lemmas a handful of 3-sigma excursions is expected by chance;
    // compare their number against the exact binomial tail.
    let tail: f64 = (0..=SEEDS)
        .filter(|&k| outside(k))
        .map(|k| binom_pmf(SEEDS, k, p))
        .sum();
    let expected = tail * LEMMAS as f64;
    let observed = counts.iter().filter(|&&c| outside(c)).count() as f64;
    assert!(
        observed <= expected + 4.0 * expected.sqrt() + 1.0,
        "{observed} lemmas outside 3 sigma, expected about {expected:.2}"
    );

    // Bonferroni: every lemma within the band that holds jointly at 1%.
    let alpha = 0.01 / LEMMAS as f64;
    let (mut lo, mut acc) = (0u64, 0.0);
    while acc + binom_pmf(SEEDS, lo, p) < alpha / 2.0 {
        acc += binom_pmf(SEEDS, lo, p);
        lo += 1;
    }
    let (mut hi, mut acc) = (SEEDS, 0.0);
    while acc + binom_pmf(SEEDS, hi, p) < alpha / 2.0 {
        acc += binom_pmf(SEEDS, hi, p);
        hi -= 1;
    }
    for (i, &c) in counts.iter().enumerate() {
        assert!(
            (lo..=hi).contains(&c),
            "lemma {i} drawn {c} times, band {lo}..={hi}"
        );
    }
    assert_eq!(counts.iter().sum::<u64>(), 100 * SEEDS);
}
