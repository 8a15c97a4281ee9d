//! The image-based proposal path: tile both subsets into one labeled grid
//! (set A in the top half, set B below), send the composite to the chat
//! backend, and parse hypotheses out of the reply. Writes the composite
//! PNG next to the target directory so you can look at it.
//!
//!     cargo run --example grid_proposer

use setdiff::backend::grid::{grid_compose, GRID_HEIGHT, GRID_WIDTH};
use setdiff::backend::mock::{MockBackend, MockSource};
use setdiff::config::RunConfig;
use setdiff::evaluator::run_pipeline;
use setdiff::experiments::{generate_synthetic, SyntheticSpec};
use setdiff::prompts::PromptSet;
use setdiff::proposer::ProposerKind;

fn main() -> setdiff::Result<()> {
    // Compose a small grid by hand first, straight from mock PNGs.
    let tile = |tag: &str, salt: u32| -> setdiff::Result<(String, Vec<u8>)> {
        let png = MockBackend::synthesize_png(&MockSource::new(tag, 0.0, salt))
            .map_err(|e| setdiff::Error::Internal(e.message))?;
        Ok((format!("{tag}-{salt}"), png))
    };
    let tiles_a = vec![tile("cats", 0)?, tile("cats", 1)?, tile("cats", 2)?];
    let tiles_b = vec![tile("dogs", 0)?, tile("dogs", 1)?, tile("dogs", 2)?];
    let composite = grid_compose(&tiles_a, &tiles_b)?;
    let out = std::env::temp_dir().join("setdiff-grid.png");
    std::fs::write(&out, &composite)?;
    println!(
        "wrote a {GRID_WIDTH}x{GRID_HEIGHT} composite of {} tiles to {}",
        tiles_a.len() + tiles_b.len(),
        out.display()
    );

    // Then run the full pipeline with the grid proposer instead of captions.
    let pair = generate_synthetic(
        &SyntheticSpec {
            concept_tag_a: "sailing ships".into(),
            concept_tag_b: "lighthouses".into(),
            n_per_set: 16,
            noise_sigma: 0.1,
            distractor_tags: Vec::new(),
        },
        2,
    )?;
    let (gateway, _mock) =
        setdiff::commands::mock_gateway(2, &["sailing ships", "lighthouses"], None)?;
    let mut cfg = RunConfig::default();
    cfg.proposer.kind = ProposerKind::Image;
    cfg.proposer.rounds = 2;
    cfg.proposer.per_set = 10;

    let run = run_pipeline(&gateway, &PromptSet::default(), &pair, &cfg)?;
    println!(
        "\ngrid proposer: {} hypotheses, {} survived ranking",
        run.hypothesis_count,
        run.outcome.ranked.len()
    );
    for r in run.outcome.ranked.iter().take(3) {
        println!("  {:<36} auroc {:.3}  p {:.2e}", r.hypothesis.text, r.score, r.p_value);
    }
    Ok(())
}
