//! Why rank at all? The mock proposer is adversarial: it emits decoy
//! hypotheses first and the planted difference last, so judging proposals
//! in emission order scores poorly while the ranked pipeline recovers the
//! truth. Also compares the three ranking metrics.
//!
//!     cargo run --example ranker_ablation

use setdiff::config::RunConfig;
use setdiff::experiments::{ablate, generate_synthetic, AblationDimension, SyntheticSpec};
use setdiff::model::{BenchmarkManifest, Split};
use setdiff::prompts::PromptSet;

fn main() -> setdiff::Result<()> {
    let manifest = BenchmarkManifest {
        split: Split::Easy,
        pairs: vec![
            generate_synthetic(
                &SyntheticSpec {
                    concept_tag_a: "cats".into(),
                    concept_tag_b: "dogs".into(),
                    n_per_set: 20,
                    noise_sigma: 0.1,
                    distractor_tags: Vec::new(),
                },
                0,
            )?,
            generate_synthetic(
                &SyntheticSpec {
                    concept_tag_a: "horses".into(),
                    concept_tag_b: "zebras".into(),
                    n_per_set: 20,
                    noise_sigma: 0.1,
                    distractor_tags: Vec::new(),
                },
                1,
            )?,
        ],
    };
    let tags = ["cats", "dogs", "horses", "zebras"];
    let (gateway, _mock) = setdiff::commands::mock_gateway(5, &tags, None)?;
    let prompts = PromptSet::default();
    let cfg = RunConfig::default();

    let table = ablate(
        &gateway,
        &prompts,
        &manifest,
        AblationDimension::NoRanker,
        &[],
        &cfg,
    )?;
    println!("ranker necessity:");
    for row in &table.rows {
        println!(
            "  {:<10} Acc@1 {:.2}  Acc@5 {:.2}",
            row.value, row.acc_at[&1], row.acc_at[&5]
        );
    }

    let metrics: Vec<String> = ["auroc", "p_value", "diff_means"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let table = ablate(
        &gateway,
        &prompts,
        &manifest,
        AblationDimension::Metric,
        &metrics,
        &cfg,
    )?;
    println!("\nranking metric:");
    for row in &table.rows {
        println!(
            "  {:<10} Acc@1 {:.2}  Acc@5 {:.2}",
            row.value, row.acc_at[&1], row.acc_at[&5]
        );
    }
    Ok(())
}
