//! Describe how two image sets differ.
//!
//! Given two sets of images, the pipeline proposes natural-language
//! candidate differences ("more often true of set A than set B") with
//! vision/language models, then ranks the candidates by how well they
//! actually separate the two sets, keeping only statistically significant
//! ones. A judging stage scores ranked output against ground truth for
//! benchmark evaluation, and an experiments layer measures robustness as
//! the sets are made noisier.
//!
//! Everything runs offline against a deterministic mock backend
//! ([`backend::MockBackend`]); real deployments talk to OpenAI-compatible
//! HTTP endpoints configured in a TOML file. Start with the runnable
//! examples (`cargo run --example describe_mock`) or the `setdiff` binary.

pub mod backend;
pub mod commands;
pub mod config;
pub mod error;
pub mod evaluator;
pub mod experiments;
pub mod manifest;
pub mod model;
pub mod prompts;
pub mod proposer;
pub mod ranker;
pub mod report;
pub mod sample;
pub mod seeds;
pub mod stats;

pub use error::{Error, Result};
