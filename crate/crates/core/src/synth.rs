//! Seeded synthetic run logs with planted use/reuse ground truth.
//!
//! Every solved task owns `lemmas_per_prompt` retrieved lemmas. Planted
//! lemmas are copied into the verified solution of their owner and of
//! `reuse_tasks - 1` other solved tasks of the same run, and are added to
//! those tasks' prompts. Verbatim plants keep the original text; soft plants
//! replace each token independently with probability `p` by a fresh token.
//!
//! Lemma bodies, filler and replacement tokens come from disjoint alphabets,
//! so a copy's score is driven by its surviving tokens and nothing else in
//! the solution contributes more than the shared `lemma`/`qed` keywords.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;
use crate::runlog::{Attempt, LemmaRecord, Population, RunBundle, System};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_tasks: usize,
    pub n_runs: usize,
    pub attempts_per_task: u32,
    pub solve_probability: f64,
    pub lemmas_per_prompt: usize,
    /// Lemmas copied verbatim into `reuse_tasks` solutions, per run.
    pub planted_direct_reuse: usize,
    /// Lemmas copied with token replacement into `reuse_tasks` solutions, per run.
    pub planted_soft_reuse: usize,
    pub perturbation_rate: f64,
    /// Distinct tasks that receive each plant (k >= 2).
    pub reuse_tasks: usize,
    pub non_retrieved_lemmas: usize,
    pub lemma_tokens_min: usize,
    pub lemma_tokens_max: usize,
    pub mean_tokens_in: u64,
    pub mean_tokens_out: u64,
    pub system: String,
    pub model: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_tasks: 50,
            n_runs: 1,
            attempts_per_task: 10,
            solve_probability: 0.5,
            lemmas_per_prompt: 4,
            planted_direct_reuse: 0,
            planted_soft_reuse: 0,
            perturbation_rate: 0.1,
            reuse_tasks: 2,
            non_retrieved_lemmas: 20,
            lemma_tokens_min: 100,
            lemma_tokens_max: 160,
            mean_tokens_in: 2000,
            mean_tokens_out: 800,
            system: "library_learner".into(),
            model: "gpt-4o-mini".into(),
        }
    }
}

impl SynthConfig {
    /// Tasks solved per run.
    pub fn solved_per_run(&self) -> usize {
        (self.solve_probability * self.n_tasks as f64).round() as usize
    }

    /// Retrieved lemmas in scope per run (prompted by some verified attempt).
    pub fn prompted_pool(&self) -> usize {
        self.solved_per_run() * self.lemmas_per_prompt
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Infeasible(m));
        for (name, p) in [
            ("solve_probability", self.solve_probability),
            ("perturbation_rate", self.perturbation_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.n_tasks == 0 || self.n_runs == 0 || self.attempts_per_task == 0 {
            return bad("n_tasks, n_runs and attempts_per_task must be positive".into());
        }
        if self.lemma_tokens_min < 3 || self.lemma_tokens_min > self.lemma_tokens_max {
            return bad(format!(
                "lemma length range {}..={} is empty or below 3 tokens",
                self.lemma_tokens_min, self.lemma_tokens_max
            ));
        }
        let plants = self.planted_direct_reuse + self.planted_soft_reuse;
        if plants > 0 {
            if self.reuse_tasks < 2 {
                return bad(format!(
                    "reuse_tasks must be at least 2, got {}",
                    self.reuse_tasks
                ));
            }
            if self.solved_per_run() < self.reuse_tasks {
                return bad(format!(
                    "{} solved tasks per run cannot host plants in {} tasks",
                    self.solved_per_run(),
                    self.reuse_tasks
                ));
            }
            if plants > self.prompted_pool() {
                return bad(format!(
                    "{plants} planted lemmas exceed the pool of {} prompted lemmas",
                    self.prompted_pool()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    Verbatim,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantCopy {
    pub task_id: String,
    /// Token positions of the lemma replaced by fresh tokens.
    pub replaced_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub lemma_id: String,
    pub kind: PlantKind,
    pub perturbation_rate: f64,
    pub lemma_tokens: usize,
    /// First copy goes to the owning task.
    pub copies: Vec<PlantCopy>,
}

impl Plant {
    /// Copies that reproduce the lemma exactly.
    pub fn verbatim_copies(&self) -> usize {
        self.copies
            .iter()
            .filter(|c| c.replaced_positions.is_empty())
            .count()
    }

    /// Smallest surviving-token fraction over copies; a lower bound on the
    /// lemma's reuse level.
    pub fn min_surviving_fraction(&self) -> f64 {
        self.copies
            .iter()
            .map(|c| 1.0 - c.replaced_positions.len() as f64 / self.lemma_tokens as f64)
            .fold(1.0, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTruth {
    pub run_id: String,
    /// (task_id, attempt index of the verified attempt)
    pub solved: Vec<(String, u32)>,
    pub prompted_lemmas: usize,
    pub plants: Vec<Plant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub runs: Vec<RunTruth>,
}

impl GroundTruth {
    pub fn plants(&self) -> impl Iterator<Item = &Plant> {
        self.runs.iter().flat_map(|r| r.plants.iter())
    }

    /// Lemmas reproduced verbatim in exactly 2 tasks.
    pub fn verbatim_reused_once(&self) -> usize {
        self.plants().filter(|p| p.verbatim_copies() == 2).count()
    }

    pub fn verbatim_reused_multi(&self) -> usize {
        self.plants().filter(|p| p.verbatim_copies() >= 3).count()
    }

    pub fn prompted_lemmas(&self) -> usize {
        self.runs.iter().map(|r| r.prompted_lemmas).sum()
    }
}

const FILLER_VOCAB: u64 = 997;

struct Gen {
    rng: SplitMix64,
    fresh: u64,
}

impl Gen {
    fn filler(&mut self, lo: u64, hi: u64) -> Vec<String> {
        let n = self.rng.range_inclusive(lo, hi);
        (0..n)
            .map(|_| format!("f{}", self.rng.below(FILLER_VOCAB)))
            .collect()
    }

    fn usage(&mut self, mean: u64) -> u64 {
        // uniform on [mean/2, 3*mean/2]
        let half = mean / 2;
        self.rng.range_inclusive(mean - half, mean + half)
    }

    /// `lemma <name>: <body> qed`, body laid out eight tokens per line.
    fn lemma_text(&mut self, serial: usize, min: usize, max: usize) -> String {
        let n = self.rng.range_inclusive(min as u64, max as u64) as usize;
        let mut s = format!("lemma synth_{serial}:");
        for j in 0..n - 3 {
            s.push_str(if j % 8 == 0 { "\n  " } else { " " });
            s.push_str(&format!("w{serial}_{j}"));
        }
        s.push_str("\nqed");
        s
    }

    fn perturb(&mut self, text: &str, p: f64) -> (String, Vec<usize>) {
        let mut replaced = Vec::new();
        let toks: Vec<String> = text
            .split_whitespace()
            .enumerate()
            .map(|(i, t)| {
                if self.rng.bernoulli(p) {
                    replaced.push(i);
                    self.fresh += 1;
                    format!("z{}", self.fresh)
                } else {
                    t.to_string()
                }
            })
            .collect();
        (toks.join(" "), replaced)
    }
}

struct TaskPlan {
    task_id: String,
    solved_at: Option<u32>,
    prompt: Vec<String>,
    copies: Vec<String>,
}

/// Generates a bundle and its ground truth; a pure function of `config`.
pub fn generate(config: &SynthConfig) -> Result<(RunBundle, GroundTruth), SynthError> {
    config.validate()?;
    let mut g = Gen {
        rng: SplitMix64::new(config.seed),
        fresh: 0,
    };
    let system = System::from(config.system.as_str());
    let mut serial = 0usize;
    let mut lemmas = Vec::new();
    let mut attempts = Vec::new();
    let mut runs = Vec::new();

    for r in 0..config.n_runs {
        let run_id = format!("run{r}");
        let mut solved_flags = vec![false; config.n_tasks];
        for i in g
            .rng
            .sample_indices(config.n_tasks, config.solved_per_run())
        {
            solved_flags[i] = true;
        }
        let mut plans: Vec<TaskPlan> = Vec::with_capacity(config.n_tasks);
        let mut texts: BTreeMap<String, String> = BTreeMap::new();
        let mut pool: Vec<(usize, String)> = Vec::new();
        for (t, &solved) in solved_flags.iter().enumerate() {
            let solved_at = solved.then(|| {
                g.rng
                    .range_inclusive(1, u64::from(config.attempts_per_task)) as u32
            });
            let mut prompt = Vec::with_capacity(config.lemmas_per_prompt);
            for _ in 0..config.lemmas_per_prompt {
                let id = format!("L{serial:05}");
                let text = g.lemma_text(serial, config.lemma_tokens_min, config.lemma_tokens_max);
                serial += 1;
                lemmas.push(LemmaRecord::new(
                    id.clone(),
                    crate::lexref::extract_name(&text),
                    text.clone(),
                    Population::Retrieved,
                ));
                if solved {
                    pool.push((t, id.clone()));
                }
                texts.insert(id.clone(), text);
                prompt.push(id);
            }
            plans.push(TaskPlan {
                task_id: format!("task{t:04}"),
                solved_at,
                prompt,
                copies: Vec::new(),
            });
        }

        let solved_tasks: Vec<usize> = (0..config.n_tasks).filter(|&t| solved_flags[t]).collect();
        let n_plants = config.planted_direct_reuse + config.planted_soft_reuse;
        let chosen = g.rng.sample_indices(pool.len(), n_plants);
        let mut plants = Vec::with_capacity(n_plants);
        for (k, &pi) in chosen.iter().enumerate() {
            let (owner, ref lemma_id) = pool[pi];
            let kind = if k < config.planted_direct_reuse {
                PlantKind::Verbatim
            } else {
                PlantKind::Soft
            };
            let others: Vec<usize> = solved_tasks
                .iter()
                .copied()
                .filter(|&t| t != owner)
                .collect();
            let mut targets = vec![owner];
            targets.extend(
                g.rng
                    .sample_indices(others.len(), config.reuse_tasks - 1)
                    .into_iter()
                    .map(|i| others[i]),
            );
            let text = &texts[lemma_id];
            let mut copies = Vec::with_capacity(targets.len());
            for &t in &targets {
                let (copy, replaced) = match kind {
                    PlantKind::Verbatim => (text.clone(), Vec::new()),
                    PlantKind::Soft => g.perturb(text, config.perturbation_rate),
                };
                if t != owner {
                    plans[t].prompt.push(lemma_id.clone());
                }
                plans[t].copies.push(copy);
                copies.push(PlantCopy {
                    task_id: plans[t].task_id.clone(),
                    replaced_positions: replaced,
                });
            }
            plants.push(Plant {
                lemma_id: lemma_id.clone(),
                kind,
                perturbation_rate: match kind {
                    PlantKind::Verbatim => 0.0,
                    PlantKind::Soft => config.perturbation_rate,
                },
                lemma_tokens: crate::lexref::token_count(text),
                copies,
            });
        }

        let mut solved = Vec::new();
        for plan in &plans {
            let last = plan.solved_at.unwrap_or(config.attempts_per_task);
            for i in 1..=last {
                let verified = plan.solved_at == Some(i);
                let solution_text = if verified {
                    let mut parts = vec![g.filler(10, 30).join(" ")];
                    for c in &plan.copies {
                        parts.push(c.clone());
                        parts.push(g.filler(5, 15).join(" "));
                    }
                    parts.join("\n")
                } else {
                    g.filler(20, 60).join(" ")
                };
                attempts.push(Attempt {
                    run_id: run_id.clone(),
                    system: system.clone(),
                    model: config.model.clone(),
                    task_id: plan.task_id.clone(),
                    attempt_index: i,
                    prompt_lemmas: plan.prompt.clone(),
                    solution_text,
                    verified,
                    tokens_in: g.usage(config.mean_tokens_in),
                    tokens_out: g.usage(config.mean_tokens_out),
                    usage_missing: false,
                });
            }
            if let Some(at) = plan.solved_at {
                solved.push((plan.task_id.clone(), at));
            }
        }
        runs.push(RunTruth {
            run_id,
            solved,
            prompted_lemmas: pool.len(),
            plants,
        });
    }

    for _ in 0..config.non_retrieved_lemmas {
        let id = format!("N{serial:05}");
        let text = g.lemma_text(serial, config.lemma_tokens_min, config.lemma_tokens_max);
        serial += 1;
        lemmas.push(LemmaRecord::with_extracted_name(
            id,
            text,
            Population::NonRetrieved,
        ));
    }

    let mut meta = BTreeMap::new();
    meta.insert(
        "synth_seed".to_string(),
        serde_json::Value::from(config.seed),
    );
    Ok((
        RunBundle::new(attempts, lemmas, meta),
        GroundTruth {
            config: config.clone(),
            runs,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::summarize_use;
    use crate::lexref::NameMatch;
    use crate::runlog::validate;
    use crate::softuse::soft_use_score;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            n_tasks: 20,
            attempts_per_task: 4,
            planted_direct_reuse: 3,
            planted_soft_reuse: 5,
            lemma_tokens_min: 20,
            lemma_tokens_max: 40,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, ta) = generate(&small(3)).unwrap();
        let (b, tb) = generate(&small(3)).unwrap();
        assert_eq!(a.to_jsonl_string(), b.to_jsonl_string());
        assert_eq!(ta, tb);
        let (c, _) = generate(&small(4)).unwrap();
        assert_ne!(a.to_jsonl_string(), c.to_jsonl_string());
    }

    #[test]
    fn bundle_is_valid() {
        let (b, _) = generate(&small(1)).unwrap();
        assert!(validate(&b).is_empty(), "{:?}", validate(&b));
    }

    #[test]
    fn direct_plants_are_reused_once() {
        let (b, truth) = generate(&small(9)).unwrap();
        let s = summarize_use(&b, NameMatch::WholeWord);
        assert_eq!(truth.verbatim_reused_once(), 3);
        assert_eq!(s.verbatim_reused_once, truth.verbatim_reused_once());
        assert_eq!(s.verbatim_reused_multi, 0);
    }

    #[test]
    fn zero_perturbation_scores_one() {
        let cfg = SynthConfig {
            perturbation_rate: 0.0,
            ..small(5)
        };
        let (b, truth) = generate(&cfg).unwrap();
        for p in truth.plants() {
            let lemma = b.lemma(&p.lemma_id).unwrap();
            for c in &p.copies {
                let sol = b
                    .verified_attempts()
                    .find(|a| a.task_id == c.task_id)
                    .unwrap();
                assert_eq!(
                    soft_use_score(lemma, &sol.solution_text).unwrap().score,
                    1.0
                );
            }
        }
    }

    #[test]
    fn surviving_tokens_bound_the_score() {
        let (b, truth) = generate(&small(2)).unwrap();
        for p in truth.plants() {
            let lemma = b.lemma(&p.lemma_id).unwrap();
            for c in &p.copies {
                let sol = b
                    .verified_attempts()
                    .find(|a| a.task_id == c.task_id)
                    .unwrap();
                let got = soft_use_score(lemma, &sol.solution_text).unwrap();
                assert!(got.matched() >= p.lemma_tokens - c.replaced_positions.len());
            }
        }
    }

    #[test]
    fn infeasible_configs() {
        let too_many = SynthConfig {
            planted_soft_reuse: 1000,
            ..small(0)
        };
        assert!(generate(&too_many).is_err());
        let bad_p = SynthConfig {
            perturbation_rate: 1.5,
            ..small(0)
        };
        assert!(generate(&bad_p).is_err());
        let k1 = SynthConfig {
            reuse_tasks: 1,
            ..small(0)
        };
        assert!(generate(&k1).is_err());
        let none_solved = SynthConfig {
            solve_probability: 0.0,
            ..small(0)
        };
        assert!(generate(&none_solved).is_err());
        let quiet = SynthConfig {
            planted_direct_reuse: 0,
            planted_soft_reuse: 0,
            ..none_solved
        };
        assert!(generate(&quiet).is_ok());
    }

    #[test]
    fn ground_truth_round_trips_through_json() {
        let (_, truth) = generate(&small(6)).unwrap();
        let json = serde_json::to_string(&truth).unwrap();
        assert_eq!(serde_json::from_str::<GroundTruth>(&json).unwrap(), truth);
    }
}
