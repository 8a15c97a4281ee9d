//! Hypothesis verification and ranking.
//!
//! Every hypothesis is scored against every image by the chosen backend
//! (embedding cosine, caption QA, or VQA), its two score populations are
//! compared with a two-sided Welch test, non-significant hypotheses are
//! filtered out, and survivors are sorted by the configured metric.

use serde::{Deserialize, Serialize};

use crate::backend::{parse_yes_no, ChatMessage, Gateway};
use crate::model::{Embedding, ImageRecord, ImageSetPair};
use crate::prompts::{self, PromptSet};
use crate::proposer::{Hypothesis, HypothesisSet};
use crate::stats;
use crate::{Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum RankerKind {
    /// Cosine similarity between image embeddings and the hypothesis text
    /// embedding.
    Feature,
    /// Yes/no question about each image's caption, asked of the chat model.
    Caption,
    /// Yes/no question about each image, asked of the VQA model.
    Image,
}

impl RankerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RankerKind::Feature => "feature",
            RankerKind::Caption => "caption",
            RankerKind::Image => "image",
        }
    }
}

impl std::str::FromStr for RankerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature" => Ok(RankerKind::Feature),
            "caption" => Ok(RankerKind::Caption),
            "image" => Ok(RankerKind::Image),
            other => Err(Error::Config(format!(
                "unknown ranker kind {other:?} (expected feature, caption or image)"
            ))),
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    Auroc,
    PValue,
    DiffMeans,
}

impl RankMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            RankMetric::Auroc => "auroc",
            RankMetric::PValue => "p_value",
            RankMetric::DiffMeans => "diff_means",
        }
    }
}

impl std::str::FromStr for RankMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auroc" => Ok(RankMetric::Auroc),
            "p_value" | "p-value" => Ok(RankMetric::PValue),
            "diff_means" | "diff-means" => Ok(RankMetric::DiffMeans),
            other => Err(Error::Config(format!(
                "unknown rank metric {other:?} (expected auroc, p_value or diff_means)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerConfig {
    pub kind: RankerKind,
    pub metric: RankMetric,
    /// Two-sided significance threshold; hypotheses with p ≥ alpha are
    /// dropped.
    pub alpha: f64,
    /// Applied to the hypothesis before text embedding; `{hypothesis}` is
    /// the placeholder.
    pub text_template: String,
    /// QA answers that fail to parse are dropped (their image skipped on
    /// that hypothesis) up to this budget; one more aborts the hypothesis.
    pub max_unparseable: usize,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig {
            kind: RankerKind::Feature,
            metric: RankMetric::Auroc,
            alpha: 0.05,
            text_template: "{hypothesis}".to_string(),
            max_unparseable: 0,
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie strictly between 0 and 1, got {}",
                self.alpha
            )));
        }
        if !self.text_template.contains("{hypothesis}") {
            return Err(Error::Config(
                "text template must contain the {hypothesis} placeholder".into(),
            ));
        }
        Ok(())
    }
}

/// Per-image verification scores for one hypothesis.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub hypothesis: Hypothesis,
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedHypothesis {
    pub hypothesis: Hypothesis,
    pub score: f64,
    pub metric: RankMetric,
    pub p_value: f64,
    pub significant: bool,
    pub n_a: usize,
    pub n_b: usize,
}

/// A hypothesis whose scoring failed (budget exhausted, backend error).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoringFailure {
    pub text: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RankOutcome {
    /// Significant hypotheses, best first.
    pub ranked: Vec<RankedHypothesis>,
    /// Hypotheses that scored but failed the significance filter.
    pub rejected: Vec<RankedHypothesis>,
    pub failures: Vec<ScoringFailure>,
}

/// Feature ranker state: every image embedded exactly once, reused across
/// all hypotheses, so M hypotheses over N images cost N + M embedding
/// calls.
pub struct FeatureScorer {
    embeds_a: Vec<Embedding>,
    embeds_b: Vec<Embedding>,
}

impl FeatureScorer {
    pub fn new(gateway: &Gateway, pair: &ImageSetPair) -> Result<Self> {
        let embed_side = |records: &[ImageRecord]| -> Result<Vec<Embedding>> {
            records
                .iter()
                .map(|r| match &r.embedding {
                    Some(e) => Ok(e.clone()),
                    None => gateway.embed_image(r),
                })
                .collect()
        };
        Ok(FeatureScorer {
            embeds_a: embed_side(&pair.set_a)?,
            embeds_b: embed_side(&pair.set_b)?,
        })
    }

    pub fn score(
        &self,
        gateway: &Gateway,
        hypothesis: &Hypothesis,
        template: &str,
    ) -> Result<ScoreMatrix> {
        let text = prompts::render(template, &[("hypothesis", &hypothesis.text)]);
        let e_y = gateway.embed_text(&text)?;
        let against = |embeds: &[Embedding]| -> Result<Vec<f64>> {
            embeds
                .iter()
                .map(|e| stats::cosine(e.as_slice(), e_y.as_slice()))
                .collect()
        };
        Ok(ScoreMatrix {
            hypothesis: hypothesis.clone(),
            values_a: against(&self.embeds_a)?,
            values_b: against(&self.embeds_b)?,
        })
    }
}

/// Binary QA scoring: one backend question per (hypothesis, image), so M
/// hypotheses over N images cost M·N calls.
pub fn score_qa(
    gateway: &Gateway,
    prompts: &PromptSet,
    pair: &ImageSetPair,
    hypothesis: &Hypothesis,
    kind: RankerKind,
    max_unparseable: usize,
) -> Result<ScoreMatrix> {
    let mut dropped = 0usize;
    let mut ask_side = |records: &[ImageRecord]| -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(records.len());
        for record in records {
            let answer = match kind {
                RankerKind::Caption => {
                    let caption = match &record.caption {
                        Some(c) => c.clone(),
                        None => gateway.caption(record)?,
                    };
                    let prompt = prompts::render(
                        &prompts.qa_caption,
                        &[("caption", caption.as_str()), ("hypothesis", &hypothesis.text)],
                    );
                    gateway
                        .complete_chat(&[ChatMessage::user(prompt)])
                        .and_then(|r| parse_yes_no(&r))
                }
                RankerKind::Image => {
                    let question = prompts::render(
                        &prompts.qa_image,
                        &[("hypothesis", &hypothesis.text)],
                    );
                    gateway.vqa(record, &question)
                }
                RankerKind::Feature => {
                    return Err(Error::Internal(
                        "feature ranker does not take the QA path".into(),
                    ))
                }
            };
            match answer {
                Ok(yes) => values.push(if yes { 1.0 } else { 0.0 }),
                Err(Error::ResponseParse { message, raw }) => {
                    dropped += 1;
                    if dropped > max_unparseable {
                        return Err(Error::ResponseParse {
                            message: format!(
                                "unparseable answer for image {:?} exceeded the budget of {max_unparseable}: {message}",
                                record.id
                            ),
                            raw,
                        });
                    }
                    tracing::warn!(image = %record.id, "dropping unparseable QA answer");
                }
                Err(other) => return Err(other),
            }
        }
        Ok(values)
    };
    let values_a = ask_side(&pair.set_a)?;
    let values_b = ask_side(&pair.set_b)?;
    Ok(ScoreMatrix { hypothesis: hypothesis.clone(), values_a, values_b })
}

struct Scored {
    ranked: RankedHypothesis,
}

fn score_matrix(matrix: &ScoreMatrix, config: &RankerConfig) -> Result<Scored> {
    for v in matrix.values_a.iter().chain(&matrix.values_b) {
        if !v.is_finite() {
            return Err(Error::Domain("score matrix contains a non-finite value".into()));
        }
    }
    let welch = stats::welch_t_test(&matrix.values_a, &matrix.values_b)?;
    let score = match config.metric {
        RankMetric::Auroc => stats::auroc(&matrix.values_a, &matrix.values_b)?,
        RankMetric::PValue => 1.0 - welch.p,
        RankMetric::DiffMeans => stats::mean_difference(&matrix.values_a, &matrix.values_b)?,
    };
    Ok(Scored {
        ranked: RankedHypothesis {
            hypothesis: matrix.hypothesis.clone(),
            score,
            metric: config.metric,
            p_value: welch.p,
            significant: welch.p < config.alpha,
            n_a: matrix.values_a.len(),
            n_b: matrix.values_b.len(),
        },
    })
}

fn sort_ranked(list: &mut [RankedHypothesis]) {
    list.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .expect("scores are finite")
            .then_with(|| x.hypothesis.provenance.round.cmp(&y.hypothesis.provenance.round))
            .then_with(|| x.hypothesis.text.cmp(&y.hypothesis.text))
    });
}

/// Filter-then-rank over pre-computed matrices: drop hypotheses with
/// p ≥ alpha, sort the rest by score descending (ties: earlier round, then
/// lexicographic text).
pub fn rank(matrices: &[ScoreMatrix], config: &RankerConfig) -> Result<Vec<RankedHypothesis>> {
    config.validate()?;
    let mut ranked = Vec::new();
    for m in matrices {
        let scored = score_matrix(m, config)?;
        if scored.ranked.significant {
            ranked.push(scored.ranked);
        }
    }
    sort_ranked(&mut ranked);
    Ok(ranked)
}

/// Score every hypothesis with the configured backend and rank. Individual
/// hypotheses that fail to score are reported in `failures`; the run only
/// errors if every hypothesis failed.
pub fn run_ranker(
    gateway: &Gateway,
    prompts: &PromptSet,
    pair: &ImageSetPair,
    hypotheses: &HypothesisSet,
    config: &RankerConfig,
) -> Result<RankOutcome> {
    config.validate()?;
    let mut outcome = RankOutcome::default();
    if hypotheses.is_empty() {
        return Ok(outcome);
    }

    let feature_scorer = match config.kind {
        RankerKind::Feature => Some(FeatureScorer::new(gateway, pair)?),
        _ => None,
    };

    for hypothesis in hypotheses.iter() {
        let matrix = match &feature_scorer {
            Some(scorer) => scorer.score(gateway, hypothesis, &config.text_template),
            None => score_qa(gateway, prompts, pair, hypothesis, config.kind, config.max_unparseable),
        };
        let scored = matrix.and_then(|m| score_matrix(&m, config));
        match scored {
            Ok(s) => {
                if s.ranked.significant {
                    outcome.ranked.push(s.ranked);
                } else {
                    outcome.rejected.push(s.ranked);
                }
            }
            Err(e) => {
                tracing::warn!(hypothesis = %hypothesis.text, error = %e, "scoring failed");
                outcome.failures.push(ScoringFailure {
                    text: hypothesis.text.clone(),
                    error: e.to_string(),
                });
            }
        }
    }

    if outcome.ranked.is_empty() && outcome.rejected.is_empty() {
        return Err(Error::ResponseParse {
            message: format!(
                "every one of the {} hypotheses failed scoring",
                hypotheses.len()
            ),
            raw: outcome
                .failures
                .iter()
                .map(|f| f.error.as_str())
                .collect::<Vec<_>>()
                .join("; "),
        });
    }

    sort_ranked(&mut outcome.ranked);
    sort_ranked(&mut outcome.rejected);
    Ok(outcome)
}
