//! Point-by-point academic rebuttal generation.
//!
//! The crate decomposes a referee review into individual weakness points,
//! retrieves the most relevant paper paragraphs for each point, plans a
//! response perspective with a learned scorer, and generates a structured
//! rebuttal. An evaluation harness covers pairwise comparison with
//! Bradley-Terry ratings, rubric judging, and multi-round discussion
//! simulation.
//!
//! Every capability has a runnable demonstration under `examples/`:
//!
//! ```text
//! cargo run --example run_pipeline
//! cargo run --example segment_paper
//! cargo run --example retrieve_context
//! cargo run --example train_planner
//! cargo run --example explain_planner
//! cargo run --example evaluate_elo
//! cargo run --example multi_round
//! cargo run --example ingest_samples
//! ```
//!
//! All examples run offline against deterministic mock providers; pass a
//! different seed to see the outputs shift.

pub mod cli;
pub mod corpus;
pub mod decomposer;
pub mod dialogue;
pub mod error;
pub mod evaluation;
pub mod executor;
pub mod llm_output;
pub mod pipeline;
pub mod planner;
pub mod prompts;
pub mod providers;
pub mod retriever;

pub use error::{Error, Result};
