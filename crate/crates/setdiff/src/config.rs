//! Whole-run configuration shared by the CLI, benchmark runner and
//! experiment drivers.

use serde::{Deserialize, Serialize};

use crate::proposer::ProposerConfig;
use crate::ranker::RankerConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub proposer: ProposerConfig,
    pub ranker: RankerConfig,
    /// Cut-offs at which accuracy is reported (Acc@k).
    pub top_k: Vec<usize>,
    pub seed: u64,
    /// How many benchmark pairs / sweep cells may run concurrently.
    pub eval_width: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            proposer: ProposerConfig::default(),
            ranker: RankerConfig::default(),
            top_k: vec![1, 5],
            seed: 0,
            eval_width: 4,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.proposer.validate()?;
        self.ranker.validate()?;
        if self.top_k.is_empty() {
            return Err(Error::Config("top_k must name at least one cut-off".into()));
        }
        if self.top_k.iter().any(|&k| k == 0) {
            return Err(Error::Config("top_k entries must be at least 1".into()));
        }
        if self.eval_width == 0 {
            return Err(Error::Config("eval width must be at least 1".into()));
        }
        Ok(())
    }

    /// Deepest cut-off: how many ranked hypotheses the judge must see.
    pub fn max_k(&self) -> usize {
        self.top_k.iter().copied().max().unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_mirror_the_protocol() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.proposer.rounds, 3);
        assert_eq!(cfg.proposer.per_set, 20);
        assert_eq!(cfg.proposer.n_hypotheses, 10);
        assert_eq!(cfg.ranker.alpha, 0.05);
        assert_eq!(cfg.top_k, vec![1, 5]);
        assert_eq!(cfg.max_k(), 5);
    }

    #[test]
    fn validation_rejects_degenerate_values() {
        let mut cfg = RunConfig::default();
        cfg.top_k = vec![];
        assert!(cfg.validate().is_err());
        cfg.top_k = vec![0];
        assert!(cfg.validate().is_err());
        cfg.top_k = vec![1];
        cfg.eval_width = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }
}
