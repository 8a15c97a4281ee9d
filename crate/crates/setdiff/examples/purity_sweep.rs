//! Robustness under set contamination: swap a growing share of images
//! between the two sets and watch accuracy and the significance filter
//! respond. At purity 1.0 the planted difference is found and ranked first;
//! at purity 0.0 the sets are statistically identical and the ranker's
//! t-test filters everything out.
//!
//!     cargo run --example purity_sweep

use setdiff::config::RunConfig;
use setdiff::experiments::{generate_synthetic, purity_sweep, PurityConfig, SyntheticSpec};
use setdiff::prompts::PromptSet;
use setdiff::proposer::ProposerConfig;

fn main() -> setdiff::Result<()> {
    let pair = generate_synthetic(
        &SyntheticSpec {
            concept_tag_a: "cats".into(),
            concept_tag_b: "dogs".into(),
            n_per_set: 20,
            noise_sigma: 0.1,
            distractor_tags: Vec::new(),
        },
        3,
    )?;

    let (gateway, _mock) = setdiff::commands::mock_gateway(3, &["cats", "dogs"], None)?;
    let cfg = RunConfig {
        proposer: ProposerConfig {
            rounds: 2,
            per_set: 12,
            ..Default::default()
        },
        ..Default::default()
    };
    let pcfg = PurityConfig {
        purity_levels: vec![0.0, 0.4, 0.8, 1.0],
        trials: 3,
        seed: 0,
    };
    let sweep = purity_sweep(&gateway, &PromptSet::default(), &pair, &pcfg, &cfg)?;

    println!(
        "{:>6} {:>7} {:>16} {:>16} {:>14}",
        "purity", "trials", "Acc@1 (95% CI)", "Acc@5 (95% CI)", "truth ranked"
    );
    for s in &sweep.summary {
        println!(
            "{:>6} {:>7} {:>8.2} ±{:>5.2} {:>9.2} ±{:>5.2} {:>13.0}%",
            s.purity,
            s.trials,
            s.mean_acc_at[&1],
            s.ci95_at[&1],
            s.mean_acc_at[&5],
            s.ci95_at[&5],
            100.0 * s.truth_ranked_rate
        );
    }
    println!("\nper-cell detail:");
    for c in &sweep.cells {
        println!(
            "  purity {:>3} trial {}  Acc@1 {:.1}  ranked {}  truth ranked: {}",
            c.purity, c.trial, c.acc_at[&1], c.ranked_total, c.truth_ranked
        );
    }
    Ok(())
}
