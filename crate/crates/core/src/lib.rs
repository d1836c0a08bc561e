//! Audits of LLM "library learning" run logs.
//!
//! The crate answers two questions about a prover that retrieves previously
//! learned lemmas into its prompts:
//!
//! * does the prover actually *use* the retrieved lemmas, and does it *reuse*
//!   any of them across different tasks ([`lexref`], [`softuse`], [`audit`],
//!   with [`corpus`] supplying an unrelated human-written baseline population);
//! * does its accuracy advantage over a plain prompting baseline survive once
//!   both systems are given the same compute budget ([`budget`], [`stability`]).
//!
//! All analyses run over a [`runlog::RunBundle`] ingested from line-delimited
//! JSON. [`synth`] generates bundles with planted ground truth for end-to-end
//! validation and [`cli`] wires everything into a batch command-line tool.

pub mod audit;
pub mod budget;
pub mod cli;
pub mod corpus;
pub mod lexref;
pub mod rng;
pub mod runlog;
pub mod softuse;
pub mod stability;
pub mod synth;

pub use audit::{SurvivalCurve, ThresholdGrid, UsageSummary};
pub use runlog::{Attempt, LemmaRecord, Population, RunBundle, System};
pub use softuse::SoftUseScore;
