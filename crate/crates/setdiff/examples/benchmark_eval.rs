//! Benchmark evaluation offline: three planted pairs with ground truths,
//! judged top-k, Acc@1/Acc@5 per split and globally.
//!
//!     cargo run --example benchmark_eval

use setdiff::config::RunConfig;
use setdiff::evaluator::run_benchmark;
use setdiff::experiments::{generate_synthetic, SyntheticSpec};
use setdiff::model::{BenchmarkManifest, Split};
use setdiff::prompts::PromptSet;
use setdiff::report::benchmark_report;

fn main() -> setdiff::Result<()> {
    let synthetic = |a: &str, b: &str, seed: u64| {
        generate_synthetic(
            &SyntheticSpec {
                concept_tag_a: a.into(),
                concept_tag_b: b.into(),
                n_per_set: 20,
                noise_sigma: 0.1,
                distractor_tags: Vec::new(),
            },
            seed,
        )
    };
    let manifest = BenchmarkManifest {
        split: Split::Easy,
        pairs: vec![
            synthetic("cats", "dogs", 0)?,
            synthetic("horses", "zebras", 1)?,
            synthetic("pianos", "guitars", 2)?,
        ],
    };

    let tags = ["cats", "dogs", "guitars", "horses", "pianos", "zebras"];
    let (gateway, _mock) = setdiff::commands::mock_gateway(11, &tags, None)?;
    let cfg = RunConfig::default();
    let metrics = run_benchmark(&gateway, &PromptSet::default(), &manifest, &cfg)?;

    println!("split {:?}: {} pairs, {} quarantined", metrics.split, metrics.per_pair.len(), metrics.quarantined.len());
    for (name, eval) in &metrics.per_pair {
        let top = eval
            .judged
            .first()
            .map(|j| format!("{:?} (judge {})", j.ranked.hypothesis.text, j.verdict.score))
            .unwrap_or_else(|| "nothing ranked".into());
        println!("  {name:<28} truth {:?}  top: {top}", eval.ground_truth);
    }
    for (k, acc) in &metrics.acc_at {
        println!("Acc@{k} = {acc:.3}");
    }

    let report = benchmark_report(&cfg, vec![metrics], &gateway)?;
    println!(
        "\nreport: {} pairs total, global Acc@1 = {:.3}",
        report.total_pairs, report.global_acc_at[&1]
    );
    Ok(())
}
