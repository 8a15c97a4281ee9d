//! Seeded subset sampling for proposer rounds.

use rand::seq::index::sample as index_sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ImageSetPair;
use crate::seeds;

/// Indices (into `set_a` / `set_b`) drawn for one proposer round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledSubset {
    pub indices_a: Vec<usize>,
    pub indices_b: Vec<usize>,
    pub round: u32,
    pub seed: u64,
}

/// Draw `rounds` independent subsets of up to `per_set` indices per side,
/// uniformly without replacement.
///
/// Each round uses a sub-seed mixed from `(seed, round)`, so the subsets for
/// rounds `0..k` are identical whether the caller asks for `k` or `k+n`
/// rounds. Sides smaller than `per_set` are used whole.
pub fn sample_subsets(
    pair: &ImageSetPair,
    per_set: usize,
    rounds: u32,
    seed: u64,
) -> Result<Vec<SampledSubset>> {
    if per_set == 0 {
        return Err(Error::Validation("per_set must be positive".into()));
    }
    if rounds == 0 {
        return Err(Error::Validation("rounds must be positive".into()));
    }
    pair.validate()?;

    let mut out = Vec::with_capacity(rounds as usize);
    for round in 0..rounds {
        let round_seed = seeds::mix(seed, "subset-round", &[round as u64]);
        let mut rng = seeds::rng(round_seed, "subset", &[]);
        let draw = |rng: &mut rand_chacha::ChaCha20Rng, len: usize| -> Vec<usize> {
            if len <= per_set {
                (0..len).collect()
            } else {
                index_sample(rng, len, per_set).into_vec()
            }
        };
        let indices_a = draw(&mut rng, pair.set_a.len());
        let indices_b = draw(&mut rng, pair.set_b.len());
        out.push(SampledSubset {
            indices_a,
            indices_b,
            round,
            seed: round_seed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ImageRecord;

    fn pair(n_a: usize, n_b: usize) -> ImageSetPair {
        let recs = |prefix: &str, n: usize| {
            (0..n)
                .map(|i| ImageRecord::new(format!("{prefix}{i}"), "src"))
                .collect()
        };
        ImageSetPair::new("t", recs("a", n_a), recs("b", n_b), None).unwrap()
    }

    #[test]
    fn identical_seed_reproduces_byte_for_byte() {
        let p = pair(100, 100);
        let s1 = sample_subsets(&p, 20, 3, 99).unwrap();
        let s2 = sample_subsets(&p, 20, 3, 99).unwrap();
        assert_eq!(
            serde_json::to_vec(&s1).unwrap(),
            serde_json::to_vec(&s2).unwrap()
        );
    }

    #[test]
    fn three_rounds_from_100_are_pairwise_different() {
        let p = pair(100, 100);
        let s = sample_subsets(&p, 20, 3, 0).unwrap();
        assert_eq!(s.len(), 3);
        for sub in &s {
            assert_eq!(sub.indices_a.len(), 20);
            assert_eq!(sub.indices_b.len(), 20);
        }
        assert_ne!(s[0].indices_a, s[1].indices_a);
        assert_ne!(s[1].indices_a, s[2].indices_a);
        assert_ne!(s[0].indices_a, s[2].indices_a);
    }

    #[test]
    fn earlier_rounds_stable_when_rounds_grow() {
        let p = pair(60, 60);
        let short = sample_subsets(&p, 10, 2, 7).unwrap();
        let long = sample_subsets(&p, 10, 5, 7).unwrap();
        assert_eq!(short[..], long[..2]);
    }

    #[test]
    fn small_side_is_used_whole() {
        let p = pair(10, 50);
        let s = sample_subsets(&p, 20, 1, 3).unwrap();
        assert_eq!(s[0].indices_a, (0..10).collect::<Vec<_>>());
        assert_eq!(s[0].indices_b.len(), 20);
    }

    #[test]
    fn indices_are_unique_and_in_range() {
        let p = pair(35, 41);
        for s in sample_subsets(&p, 20, 5, 11).unwrap() {
            for (idx, len) in [(&s.indices_a, 35), (&s.indices_b, 41)] {
                let mut seen = std::collections::HashSet::new();
                for &i in idx.iter() {
                    assert!(i < len);
                    assert!(seen.insert(i), "duplicate index {i}");
                }
            }
        }
    }

    #[test]
    fn zero_parameters_rejected() {
        let p = pair(5, 5);
        assert!(sample_subsets(&p, 0, 1, 0).is_err());
        assert!(sample_subsets(&p, 5, 0, 0).is_err());
    }

    /// Frequency smoke test: 10,000 single-element draws from 10 elements
    /// land each element's frequency within ±0.05 of the uniform 0.10.
    #[test]
    fn single_element_draws_are_roughly_uniform() {
        let p = pair(10, 10);
        let mut counts = [0usize; 10];
        for draw in 0..10_000u64 {
            let s = sample_subsets(&p, 1, 1, draw).unwrap();
            counts[s[0].indices_a[0]] += 1;
        }
        for (elem, &c) in counts.iter().enumerate() {
            let freq = c as f64 / 10_000.0;
            assert!(
                (freq - 0.10).abs() <= 0.05,
                "element {elem}: frequency {freq} outside 0.10 +/- 0.05"
            );
        }
    }
}
