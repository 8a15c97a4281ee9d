//! End-to-end difference description, fully offline: build a synthetic
//! cats-vs-dogs pair, propose hypotheses from captions, rank them by AUROC
//! with the significance filter, and print the outcome.
//!
//!     cargo run --example describe_two_sets

use setdiff::backend::Gateway;
use setdiff::config::RunConfig;
use setdiff::evaluator::run_pipeline;
use setdiff::experiments::{generate_synthetic, SyntheticSpec};
use setdiff::prompts::PromptSet;

fn main() -> setdiff::Result<()> {
    let spec = SyntheticSpec {
        concept_tag_a: "cats".into(),
        concept_tag_b: "dogs".into(),
        n_per_set: 25,
        noise_sigma: 0.1,
        distractor_tags: Vec::new(),
    };
    let pair = generate_synthetic(&spec, 7)?;

    let (gateway, _mock) = setdiff::commands::mock_gateway(7, &["cats", "dogs"], None)?;
    let cfg = RunConfig::default();
    let run = run_pipeline(&gateway, &PromptSet::default(), &pair, &cfg)?;

    println!(
        "pair {:?}: {} hypotheses proposed over {} rounds\n",
        pair.name, run.hypothesis_count, cfg.proposer.rounds
    );
    println!("{:<40} {:>8} {:>12}  filter", "ranked hypothesis", "auroc", "p-value");
    for r in &run.outcome.ranked {
        println!(
            "{:<40} {:>8.4} {:>12.3e}  significant",
            r.hypothesis.text, r.score, r.p_value
        );
    }
    for r in &run.outcome.rejected {
        println!(
            "{:<40} {:>8.4} {:>12.3e}  rejected (p >= {})",
            r.hypothesis.text, r.score, r.p_value, cfg.ranker.alpha
        );
    }

    println!("\nbackend calls:");
    for (kind, counts) in Gateway::ledger(&gateway) {
        println!(
            "  {kind:<12} network {:>4}   cache hits {:>4}",
            counts.network, counts.cache_hits
        );
    }
    Ok(())
}
