//! Judging and benchmark evaluation.
//!
//! Predicted differences are graded against ground truth by a chat model on
//! the three-level scale {0, 0.5, 1}; benchmark accuracy is Acc@k — the best
//! verdict among the top-k ranked hypotheses, averaged over pairs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatMessage, Gateway};
use crate::config::RunConfig;
use crate::model::{BenchmarkManifest, ImageSetPair};
use crate::prompts::{self, PromptSet};
use crate::proposer::run_proposer;
use crate::ranker::{run_ranker, RankOutcome, RankedHypothesis};
use crate::stats;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub predicted: String,
    pub ground_truth: String,
    /// One of 0, 0.5, 1.
    pub score: f64,
    pub raw_response: String,
}

/// Extract the score from a judge reply: the last token of the final
/// non-empty line that parses to one of the three levels.
pub fn parse_judge_score(response: &str) -> Option<f64> {
    let line = response.lines().rev().find(|l| !l.trim().is_empty())?;
    for token in line.split_whitespace().rev() {
        let token = token.trim_matches(|c: char| !(c.is_ascii_digit() || c == '.'));
        if let Ok(v) = token.parse::<f64>() {
            if v == 0.0 || v == 0.5 || v == 1.0 {
                return Some(v);
            }
        }
    }
    None
}

/// Grade one prediction against the ground truth. An unparseable reply is
/// retried once past the cache; a second failure is an error carrying the
/// raw response.
pub fn judge(
    gateway: &Gateway,
    prompts: &PromptSet,
    predicted: &str,
    ground_truth: &str,
) -> Result<JudgeVerdict> {
    if predicted.trim().is_empty() || ground_truth.trim().is_empty() {
        return Err(Error::Validation(
            "judge requires non-empty prediction and ground truth".into(),
        ));
    }
    let prompt = prompts::render(
        &prompts.judge,
        &[("truth", ground_truth), ("predicted", predicted)],
    );
    let messages = [ChatMessage::user(prompt)];
    let mut response = gateway.complete_chat(&messages)?;
    let score = match parse_judge_score(&response) {
        Some(s) => s,
        None => {
            tracing::warn!(raw = %response, "judge reply unparseable; retrying once");
            response = gateway.complete_chat_tagged(&messages, Some("judge-retry-1"))?;
            parse_judge_score(&response).ok_or_else(|| Error::ResponseParse {
                message: "judge reply unparseable after one retry".into(),
                raw: response.clone(),
            })?
        }
    };
    Ok(JudgeVerdict {
        predicted: predicted.to_string(),
        ground_truth: ground_truth.to_string(),
        score,
        raw_response: response,
    })
}

/// Acc@k over per-pair verdict lists: each pair contributes the best score
/// among its first min(k, available) verdicts, pairs with no verdicts
/// contribute 0, and the mean is taken over all pairs.
pub fn acc_at_k(verdict_lists: &[(String, Vec<JudgeVerdict>)], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if verdict_lists.is_empty() {
        return Err(Error::Domain("Acc@k over an empty benchmark".into()));
    }
    let total: f64 = verdict_lists
        .iter()
        .map(|(_, verdicts)| {
            verdicts
                .iter()
                .take(k)
                .map(|v| v.score)
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / verdict_lists.len() as f64)
}

/// One proposer+ranker run over a pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineRun {
    pub hypothesis_count: usize,
    pub outcome: RankOutcome,
}

pub fn run_pipeline(
    gateway: &Gateway,
    prompts: &PromptSet,
    pair: &ImageSetPair,
    cfg: &RunConfig,
) -> Result<PipelineRun> {
    cfg.validate()?;
    let hypotheses = run_proposer(gateway, prompts, pair, &cfg.proposer, cfg.seed)?;
    let outcome = run_ranker(gateway, prompts, pair, &hypotheses, &cfg.ranker)?;
    Ok(PipelineRun { hypothesis_count: hypotheses.len(), outcome })
}

/// A ranked hypothesis together with its judged verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgedHypothesis {
    /// 1-based position in the ranking.
    pub rank: usize,
    pub ranked: RankedHypothesis,
    pub verdict: JudgeVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub pair: String,
    pub ground_truth: String,
    pub hypothesis_count: usize,
    pub ranked_total: usize,
    pub rejected_total: usize,
    /// Top max-k ranked hypotheses with their verdicts, rank order.
    pub judged: Vec<JudgedHypothesis>,
}

impl PairEvaluation {
    pub fn verdicts(&self) -> Vec<JudgeVerdict> {
        self.judged.iter().map(|j| j.verdict.clone()).collect()
    }
}

/// Pipeline + judging for one pair (requires ground truth).
pub fn evaluate_pair(
    gateway: &Gateway,
    prompts: &PromptSet,
    pair: &ImageSetPair,
    cfg: &RunConfig,
) -> Result<PairEvaluation> {
    let truth = pair.ground_truth.clone().ok_or_else(|| {
        Error::Validation(format!("pair {:?} has no ground truth to judge against", pair.name))
    })?;
    let run = run_pipeline(gateway, prompts, pair, cfg)?;
    let mut judged = Vec::new();
    for (i, ranked) in run.outcome.ranked.iter().take(cfg.max_k()).enumerate() {
        let verdict = judge(gateway, prompts, &ranked.hypothesis.text, &truth)?;
        judged.push(JudgedHypothesis { rank: i + 1, ranked: ranked.clone(), verdict });
    }
    Ok(PairEvaluation {
        pair: pair.name.clone(),
        ground_truth: truth,
        hypothesis_count: run.hypothesis_count,
        ranked_total: run.outcome.ranked.len(),
        rejected_total: run.outcome.rejected.len(),
        judged,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuarantinedPair {
    pub pair: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkMetrics {
    pub split: String,
    pub per_pair: BTreeMap<String, PairEvaluation>,
    /// Acc@k for each configured k, over non-quarantined pairs.
    pub acc_at: BTreeMap<usize, f64>,
    pub quarantined: Vec<QuarantinedPair>,
}

/// Evaluate every pair of one benchmark split, up to `eval_width` pairs at
/// a time. Failing pairs are quarantined with their error, never silently
/// dropped; the run only errors if no pair survives.
pub fn run_benchmark(
    gateway: &Gateway,
    prompts: &PromptSet,
    manifest: &BenchmarkManifest,
    cfg: &RunConfig,
) -> Result<BenchmarkMetrics> {
    cfg.validate()?;
    manifest.validate()?;
    let results = parallel_map(&manifest.pairs, cfg.eval_width, |pair| {
        evaluate_pair(gateway, prompts, pair, cfg)
    });

    let mut per_pair = BTreeMap::new();
    let mut quarantined = Vec::new();
    for (pair, result) in manifest.pairs.iter().zip(results) {
        match result {
            Ok(eval) => {
                per_pair.insert(pair.name.clone(), eval);
            }
            Err(e) => {
                tracing::warn!(pair = %pair.name, error = %e, "pair quarantined");
                quarantined.push(QuarantinedPair { pair: pair.name.clone(), error: e.to_string() });
            }
        }
    }
    if per_pair.is_empty() {
        return Err(Error::Domain(format!(
            "all {} pairs failed evaluation; first error: {}",
            manifest.pairs.len(),
            quarantined.first().map(|q| q.error.as_str()).unwrap_or("none")
        )));
    }

    let verdict_lists: Vec<(String, Vec<JudgeVerdict>)> = per_pair
        .iter()
        .map(|(name, eval)| (name.clone(), eval.verdicts()))
        .collect();
    let mut acc_at = BTreeMap::new();
    for &k in &cfg.top_k {
        acc_at.insert(k, acc_at_k(&verdict_lists, k)?);
    }
    Ok(BenchmarkMetrics {
        split: manifest.split.as_str().to_string(),
        per_pair,
        acc_at,
        quarantined,
    })
}

/// Pearson correlation between judge scores and human annotation scores.
pub fn human_correlation(judge_scores: &[f64], human_scores: &[f64]) -> Result<f64> {
    stats::pearson(judge_scores, human_scores)
}

/// One human-annotated prediction: the pair it belongs to, the predicted
/// text, and one score per annotator.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRow {
    pub pair: String,
    pub predicted: String,
    pub scores: Vec<f64>,
}

impl AnnotationRow {
    pub fn mean_score(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

/// Read an annotation CSV: header `pair,predicted,<annotator columns...>`,
/// one numeric score per annotator column.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let at = |message: String| Error::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };
        let record = record.map_err(|e| at(e.to_string()))?;
        if record.len() < 3 {
            return Err(at("expected pair, predicted and at least one score".into()));
        }
        let scores = record
            .iter()
            .skip(2)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| at(format!("not a numeric score: {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(AnnotationRow {
            pair: record[0].to_string(),
            predicted: record[1].to_string(),
            scores,
        });
    }
    Ok(rows)
}

/// Run `f` over `items` with at most `width` worker threads, preserving
/// input order in the results.
pub(crate) fn parallel_map<T, R, F>(items: &[T], width: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let n = items.len();
    let workers = width.clamp(1, n.max(1));
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = f(&items[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every index visited"))
        .collect()
}
