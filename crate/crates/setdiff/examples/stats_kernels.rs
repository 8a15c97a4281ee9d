//! The statistics the ranker stands on, shown on small hand-checkable
//! inputs: AUROC with ties, Welch's t-test, and what "significant at 0.05"
//! means for hypothesis filtering.
//!
//!     cargo run --example stats_kernels

use setdiff::stats::{auroc, mean_difference, welch_t_test};

fn main() -> setdiff::Result<()> {
    // Perfect separation: every A value beats every B value.
    let a = [0.9, 0.8, 0.7];
    let b = [0.3, 0.2, 0.1];
    println!("separated      auroc = {:.3}", auroc(&a, &b)?);

    // Identical samples: chance level, driven entirely by tie half-credit.
    let t = [0.5, 0.5, 0.5];
    println!("all ties       auroc = {:.3}", auroc(&t, &t)?);

    // Swapping the sets complements the score exactly.
    let x = [0.9, 0.4, 0.6, 0.2];
    let y = [0.5, 0.3, 0.8, 0.1];
    println!(
        "antisymmetry   auroc(x,y) = {:.4}, auroc(y,x) = {:.4}",
        auroc(&x, &y)?,
        auroc(&y, &x)?
    );

    // Overlapping shifted samples: a real but weak signal.
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 3.0, 4.0, 5.0, 6.0];
    let w = welch_t_test(&a, &b)?;
    println!(
        "\nshift by 1     t = {:.4}, df = {:.2}, p = {:.4}  (mean diff {:.1})",
        w.t,
        w.df,
        w.p,
        mean_difference(&a, &b)?
    );
    println!(
        "               not significant at alpha = 0.05: {}",
        w.p >= 0.05
    );

    // A clean separation on the same sample sizes.
    let hi = [5.0, 5.5, 6.0, 6.5, 7.0];
    let lo = [1.0, 1.5, 2.0, 2.5, 3.0];
    let w = welch_t_test(&hi, &lo)?;
    println!(
        "separated      t = {:.2}, p = {:.2e}  -> passes the filter",
        w.t, w.p
    );
    Ok(())
}
