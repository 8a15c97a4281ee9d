//! Hypothesis generation: turn sampled subsets into candidate difference
//! descriptions via a chat model over captions (primary) or a tiled image
//! grid shown to a VLM (alternate), then union rounds with dedup.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::backend::{grid, ChatMessage, Gateway};
use crate::model::{ImageRecord, ImageSetPair};
use crate::prompts::{self, PromptSet};
use crate::sample::{sample_subsets, SampledSubset};
use crate::{Error, Result};

/// Longest hypothesis accepted, in characters after normalization.
pub const MAX_HYPOTHESIS_CHARS: usize = 200;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum ProposerKind {
    /// Chat model over the two caption lists.
    Caption,
    /// VLM over one composite grid image.
    Image,
}

impl ProposerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProposerKind::Caption => "caption",
            ProposerKind::Image => "image",
        }
    }
}

impl std::str::FromStr for ProposerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "caption" => Ok(ProposerKind::Caption),
            "image" => Ok(ProposerKind::Image),
            other => Err(Error::Config(format!(
                "unknown proposer kind {other:?} (expected caption or image)"
            ))),
        }
    }
}

/// Where a hypothesis came from: which proposer, round, and subset draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ProposerKind,
    pub round: u32,
    pub subset_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: String,
    pub provenance: Provenance,
}

/// Case/whitespace/terminal-punctuation-insensitive key used for dedup and
/// for matching hypotheses against ground truth.
pub fn normalize_text(s: &str) -> String {
    s.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', '!', '?', ';', ':', ','])
        .to_string()
}

/// Ordered, deduplicated hypothesis collection (first occurrence wins).
#[derive(Debug, Clone, Default)]
pub struct HypothesisSet {
    hypotheses: Vec<Hypothesis>,
    seen: HashSet<String>,
}

impl HypothesisSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert unless a normalized duplicate is already present.
    pub fn push(&mut self, hypothesis: Hypothesis) -> bool {
        let key = normalize_text(&hypothesis.text);
        if key.is_empty() || !self.seen.insert(key) {
            return false;
        }
        self.hypotheses.push(hypothesis);
        true
    }

    pub fn extend(&mut self, hypotheses: impl IntoIterator<Item = Hypothesis>) {
        for h in hypotheses {
            self.push(h);
        }
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Hypothesis> {
        self.hypotheses.iter()
    }

    pub fn as_slice(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn into_vec(self) -> Vec<Hypothesis> {
        self.hypotheses
    }
}

/// Drop degenerate captions: empty once special tokens are stripped, any
/// token repeated three or more times in a row, or (for captions of at
/// least four tokens) a single token making up more than half of them.
pub fn filter_captions(captions: &[String]) -> Vec<String> {
    captions
        .iter()
        .filter_map(|c| {
            let cleaned = strip_special_tokens(c);
            if cleaned.is_empty() {
                return None;
            }
            let tokens: Vec<&str> = cleaned.split_whitespace().collect();
            let runs = tokens
                .windows(3)
                .any(|w| w[0].eq_ignore_ascii_case(w[1]) && w[1].eq_ignore_ascii_case(w[2]));
            if runs {
                return None;
            }
            if tokens.len() >= 4 {
                let mut counts: std::collections::HashMap<String, usize> =
                    std::collections::HashMap::new();
                for t in &tokens {
                    *counts.entry(t.to_lowercase()).or_default() += 1;
                }
                if counts.values().any(|&n| 2 * n > tokens.len()) {
                    return None;
                }
            }
            Some(cleaned)
        })
        .collect()
}

fn strip_special_tokens(caption: &str) -> String {
    let mut out = String::with_capacity(caption.len());
    let mut depth = 0usize;
    for ch in caption.chars() {
        match ch {
            '<' => depth += 1,
            '>' => depth = depth.saturating_sub(1),
            _ if depth == 0 => out.push(ch),
            _ => {}
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse a chat response into at most `n` hypotheses: one per line, with
/// enumeration markers, bullets and surrounding quotes stripped; caption
/// list artifacts ("Group A:" style lines) and over-long lines rejected.
pub fn parse_hypotheses(response: &str, n: usize, provenance: Provenance) -> Vec<Hypothesis> {
    let mut out = Vec::new();
    for line in response.lines() {
        if out.len() >= n {
            break;
        }
        let text = clean_line(line);
        if text.is_empty() || text.len() > MAX_HYPOTHESIS_CHARS {
            continue;
        }
        if text.starts_with("Group A") || text.starts_with("Group B") {
            continue;
        }
        out.push(Hypothesis { text, provenance });
    }
    out
}

fn clean_line(line: &str) -> String {
    let mut s = line.trim();
    // "12." / "3)" enumeration prefixes.
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            s = r.trim_start();
        }
    }
    // Bullets, possibly repeated.
    while let Some(r) = s
        .strip_prefix("- ")
        .or_else(|| s.strip_prefix("* "))
        .or_else(|| s.strip_prefix("• "))
    {
        s = r.trim_start();
    }
    let s = s.trim_matches(|c| c == '"' || c == '\'' || c == '`');
    s.trim().to_string()
}

fn caption_of(gateway: &Gateway, record: &ImageRecord) -> Result<String> {
    match &record.caption {
        Some(c) => Ok(c.clone()),
        None => gateway.caption(record),
    }
}

fn subset_records<'p>(pair: &'p ImageSetPair, subset: &SampledSubset) -> (Vec<&'p ImageRecord>, Vec<&'p ImageRecord>) {
    let a = subset.indices_a.iter().map(|&i| &pair.set_a[i]).collect();
    let b = subset.indices_b.iter().map(|&i| &pair.set_b[i]).collect();
    (a, b)
}

/// Caption both subset halves and ask the chat model for differences.
pub fn propose_from_captions(
    gateway: &Gateway,
    prompts: &PromptSet,
    subset: &SampledSubset,
    pair: &ImageSetPair,
    n_hypotheses: usize,
) -> Result<Vec<Hypothesis>> {
    let (records_a, records_b) = subset_records(pair, subset);
    let captions_a = filter_captions(
        &records_a.iter().map(|r| caption_of(gateway, r)).collect::<Result<Vec<_>>>()?,
    );
    let captions_b = filter_captions(
        &records_b.iter().map(|r| caption_of(gateway, r)).collect::<Result<Vec<_>>>()?,
    );
    let prompt = prompts::render(
        &prompts.caption_proposer,
        &[
            ("captions_a", &prompts::bullet_list(&captions_a)),
            ("captions_b", &prompts::bullet_list(&captions_b)),
            ("n", &n_hypotheses.to_string()),
        ],
    );
    let response = gateway.complete_chat(&[ChatMessage::user(prompt)])?;
    let provenance = Provenance {
        kind: ProposerKind::Caption,
        round: subset.round,
        subset_seed: subset.seed,
    };
    let parsed = parse_hypotheses(&response, n_hypotheses, provenance);
    if parsed.is_empty() {
        return Err(Error::ResponseParse {
            message: "proposer response contained no parseable hypothesis lines".into(),
            raw: response,
        });
    }
    Ok(parsed)
}

/// Compose the subset into one grid image and ask the VLM for differences.
pub fn propose_from_grid(
    gateway: &Gateway,
    prompts: &PromptSet,
    subset: &SampledSubset,
    pair: &ImageSetPair,
    n_hypotheses: usize,
) -> Result<Vec<Hypothesis>> {
    let (records_a, records_b) = subset_records(pair, subset);
    let fetch = |records: &[&ImageRecord]| -> Result<Vec<(String, Vec<u8>)>> {
        records
            .iter()
            .map(|r| Ok((r.id.clone(), gateway.fetch_image(r)?.as_ref().clone())))
            .collect()
    };
    let composite = grid::grid_compose(&fetch(&records_a)?, &fetch(&records_b)?)?;
    let prompt = prompts::render(&prompts.grid_proposer, &[("n", &n_hypotheses.to_string())]);
    let response =
        gateway.complete_chat(&[ChatMessage::user_with_image(prompt, std::sync::Arc::new(composite))])?;
    let provenance = Provenance {
        kind: ProposerKind::Image,
        round: subset.round,
        subset_seed: subset.seed,
    };
    let parsed = parse_hypotheses(&response, n_hypotheses, provenance);
    if parsed.is_empty() {
        return Err(Error::ResponseParse {
            message: "grid proposer response contained no parseable hypothesis lines".into(),
            raw: response,
        });
    }
    Ok(parsed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerConfig {
    pub kind: ProposerKind,
    pub rounds: u32,
    pub per_set: usize,
    pub n_hypotheses: usize,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        ProposerConfig {
            kind: ProposerKind::Caption,
            rounds: 3,
            per_set: 20,
            n_hypotheses: 10,
        }
    }
}

impl ProposerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.per_set == 0 || self.n_hypotheses == 0 {
            return Err(Error::Config(
                "rounds, samples per round and hypotheses per round must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// All rounds, unioned in round order with first-occurrence dedup. Rounds
/// that fail are logged and skipped; every round failing is an error.
pub fn run_proposer(
    gateway: &Gateway,
    prompts: &PromptSet,
    pair: &ImageSetPair,
    config: &ProposerConfig,
    seed: u64,
) -> Result<HypothesisSet> {
    config.validate()?;
    let subsets = sample_subsets(pair, config.per_set, config.rounds, seed)?;
    let mut set = HypothesisSet::new();
    let mut errors: Vec<String> = Vec::new();
    for subset in &subsets {
        let proposed = match config.kind {
            ProposerKind::Caption => {
                propose_from_captions(gateway, prompts, subset, pair, config.n_hypotheses)
            }
            ProposerKind::Image => {
                propose_from_grid(gateway, prompts, subset, pair, config.n_hypotheses)
            }
        };
        match proposed {
            Ok(hs) => set.extend(hs),
            Err(e) => {
                tracing::warn!(round = subset.round, error = %e, "proposal round failed");
                errors.push(format!("round {}: {e}", subset.round));
            }
        }
    }
    if set.is_empty() {
        if errors.is_empty() {
            return Err(Error::EmptyOutput("proposer produced no hypotheses".into()));
        }
        return Err(Error::ResponseParse {
            message: format!("all {} proposal rounds failed", config.rounds),
            raw: errors.join("; "),
        });
    }
    Ok(set)
}
