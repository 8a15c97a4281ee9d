//! Statistical kernel: cosine similarity, AUROC, Welch's t-test, Pearson
//! correlation.
//!
//! The t-distribution CDF is computed from the regularized incomplete beta
//! function (Lanczos log-gamma + Lentz continued fraction); no numerical
//! dependencies. AUROC uses average ranks over tie groups, counted in exact
//! integer half-units, so `auroc(a, b) + auroc(b, a) == 1.0` holds *exactly*
//! in floating point — see the note on `auroc`.

use crate::error::{Error, Result};

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("{name} contains non-finite values")));
    }
    Ok(())
}

/// Cosine similarity of two raw vectors, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Domain(format!(
            "cosine: dimension mismatch {} vs {}",
            u.len(),
            v.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::Domain("cosine: empty vectors".into()));
    }
    check_finite("cosine input", u)?;
    check_finite("cosine input", v)?;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Domain("cosine: zero vector".into()));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Area under the ROC curve for separating `values_a` (positives) from
/// `values_b` (negatives): the probability that a random element of A
/// exceeds a random element of B, counting exact ties as half.
///
/// Computed from average ranks in O(n log n). The rank bookkeeping stays in
/// integer half-units, and the final division picks whichever of `U` and its
/// complement is larger, deriving the other side as `1.0 - larger`. That
/// subtraction is exact (Sterbenz), which makes the complement identity
/// `auroc(a, b) + auroc(b, a) == 1.0` exact for every input, ties included.
pub fn auroc(values_a: &[f64], values_b: &[f64]) -> Result<f64> {
    if values_a.is_empty() || values_b.is_empty() {
        return Err(Error::Domain("auroc: both sides must be non-empty".into()));
    }
    check_finite("auroc values_a", values_a)?;
    check_finite("auroc values_b", values_b)?;

    let n_a = values_a.len() as u64;
    let n_b = values_b.len() as u64;
    let mut combined: Vec<(f64, bool)> = values_a
        .iter()
        .map(|&v| (v, true))
        .chain(values_b.iter().map(|&v| (v, false)))
        .collect();
    combined.sort_by(|x, y| x.0.total_cmp(&y.0));

    // Doubled rank sum for side A: tie group spanning 0-based positions
    // i..=j has doubled average rank (i + j + 2), an integer.
    let mut doubled_rank_sum_a: u64 = 0;
    let mut i = 0;
    while i < combined.len() {
        let mut j = i;
        while j + 1 < combined.len() && combined[j + 1].0 == combined[i].0 {
            j += 1;
        }
        let doubled_rank = (i + j + 2) as u64;
        for item in &combined[i..=j] {
            if item.1 {
                doubled_rank_sum_a += doubled_rank;
            }
        }
        i = j + 1;
    }

    // N = 2U in half-units; M = 2 * n_a * n_b.
    let n = doubled_rank_sum_a - n_a * (n_a + 1);
    let m = 2 * n_a * n_b;
    let comp = m - n;
    if n >= comp {
        Ok(n as f64 / m as f64)
    } else {
        Ok(1.0 - (comp as f64 / m as f64))
    }
}

/// Result of a two-sample Welch t-test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WelchTTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

fn mean_and_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of
/// freedom and a two-sided p-value.
///
/// Degenerate inputs follow fixed conventions: if both sides have zero
/// variance, equal means give `p = 1` (t = 0) and unequal means give
/// `p = 0` (t = ±inf); `df` is reported as `n_a + n_b - 2` in both cases.
pub fn welch_t_test(values_a: &[f64], values_b: &[f64]) -> Result<WelchTTest> {
    if values_a.len() < 2 || values_b.len() < 2 {
        return Err(Error::Domain(format!(
            "welch_t_test: need at least 2 values per side, got {} and {}",
            values_a.len(),
            values_b.len()
        )));
    }
    check_finite("welch values_a", values_a)?;
    check_finite("welch values_b", values_b)?;

    let n_a = values_a.len() as f64;
    let n_b = values_b.len() as f64;
    let (mean_a, var_a) = mean_and_var(values_a);
    let (mean_b, var_b) = mean_and_var(values_b);

    if var_a == 0.0 && var_b == 0.0 {
        let df = n_a + n_b - 2.0;
        return Ok(if mean_a == mean_b {
            WelchTTest { t: 0.0, df, p: 1.0 }
        } else {
            let t = if mean_a > mean_b { f64::INFINITY } else { f64::NEG_INFINITY };
            WelchTTest { t, df, p: 0.0 }
        });
    }

    let se2 = var_a / n_a + var_b / n_b;
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2
        / ((var_a / n_a) * (var_a / n_a) / (n_a - 1.0)
            + (var_b / n_b) * (var_b / n_b) / (n_b - 1.0));
    let p = two_sided_t_p(t, df);
    Ok(WelchTTest { t, df, p })
}

/// Pearson correlation coefficient, clamped to `[-1, 1]`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "pearson: length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Domain("pearson: need at least 2 points".into()));
    }
    check_finite("pearson x", x)?;
    check_finite("pearson y", y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Domain("pearson: a side has zero variance".into()));
    }
    Ok((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

/// Difference of means, `mean(values_a) - mean(values_b)`.
pub fn mean_difference(values_a: &[f64], values_b: &[f64]) -> Result<f64> {
    if values_a.is_empty() || values_b.is_empty() {
        return Err(Error::Domain(
            "mean_difference: both sides must be non-empty".into(),
        ));
    }
    check_finite("mean_difference values_a", values_a)?;
    check_finite("mean_difference values_b", values_b)?;
    let ma = values_a.iter().sum::<f64>() / values_a.len() as f64;
    let mb = values_b.iter().sum::<f64>() / values_b.len() as f64;
    Ok(ma - mb)
}

/// CDF of Student's t distribution with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * inc_beta(df / (df + t * t), 0.5 * df, 0.5);
    if t > 0.0 {
        1.0 - half
    } else {
        half
    }
}

/// Two-sided p-value P(|T| >= |t|), via the identity
/// P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
fn two_sided_t_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(df / (df + t * t), 0.5 * df, 0.5)
}

/// Natural log of the gamma function (Lanczos approximation), x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    let mut y = y;
    for c in COEF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Regularized incomplete beta function I_x(a, b) via the Lentz continued
/// fraction, using the symmetry relation to stay in the fast-converging
/// region.
fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // Even step.
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
