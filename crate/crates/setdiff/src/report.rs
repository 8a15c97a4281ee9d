//! Report documents written after a run: what ran, what survived, what it
//! cost. Serialization uses struct field order and sorted maps, and no
//! report carries a timestamp, so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendKind, CallCounts, Gateway};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluator::{acc_at_k, BenchmarkMetrics, PipelineRun};
use crate::model::ImageSetPair;
use crate::ranker::{RankedHypothesis, ScoringFailure};

/// Ranked-difference report for a single pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescribeReport {
    pub pair: String,
    pub set_a_size: usize,
    pub set_b_size: usize,
    pub config: RunConfig,
    pub hypothesis_count: usize,
    pub ranked: Vec<RankedHypothesis>,
    /// Hypotheses that failed the significance filter, with diagnostics.
    pub rejected: Vec<RankedHypothesis>,
    pub failures: Vec<ScoringFailure>,
    pub models: BTreeMap<String, String>,
    pub ledger: BTreeMap<String, CallCounts>,
}

pub fn describe_report(
    pair: &ImageSetPair,
    cfg: &RunConfig,
    run: PipelineRun,
    gateway: &Gateway,
) -> DescribeReport {
    DescribeReport {
        pair: pair.name.clone(),
        set_a_size: pair.set_a.len(),
        set_b_size: pair.set_b.len(),
        config: cfg.clone(),
        hypothesis_count: run.hypothesis_count,
        ranked: run.outcome.ranked,
        rejected: run.outcome.rejected,
        failures: run.outcome.failures,
        models: gateway_models(gateway),
        ledger: gateway.ledger(),
    }
}

/// Aggregated benchmark results across one or more splits, with the global
/// Acc@k computed over all surviving pairs (pair-weighted, not a mean of
/// split means).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: RunConfig,
    pub splits: BTreeMap<String, BenchmarkMetrics>,
    pub global_acc_at: BTreeMap<usize, f64>,
    pub total_pairs: usize,
    pub total_quarantined: usize,
    pub models: BTreeMap<String, String>,
    pub ledger: BTreeMap<String, CallCounts>,
}

pub fn benchmark_report(
    cfg: &RunConfig,
    split_metrics: Vec<BenchmarkMetrics>,
    gateway: &Gateway,
) -> Result<BenchmarkReport> {
    if split_metrics.is_empty() {
        return Err(Error::Validation("no split metrics to report".into()));
    }
    let mut splits = BTreeMap::new();
    let mut lists = Vec::new();
    let mut total_quarantined = 0;
    for metrics in split_metrics {
        total_quarantined += metrics.quarantined.len();
        for (name, eval) in &metrics.per_pair {
            lists.push((format!("{}/{}", metrics.split, name), eval.verdicts()));
        }
        if splits.insert(metrics.split.clone(), metrics).is_some() {
            return Err(Error::Validation("duplicate split in benchmark report".into()));
        }
    }
    let mut global_acc_at = BTreeMap::new();
    if !lists.is_empty() {
        for &k in &cfg.top_k {
            global_acc_at.insert(k, acc_at_k(&lists, k)?);
        }
    }
    Ok(BenchmarkReport {
        config: cfg.clone(),
        total_pairs: lists.len(),
        total_quarantined,
        splits,
        global_acc_at,
        models: gateway_models(gateway),
        ledger: gateway.ledger(),
    })
}

/// Everything needed to repeat an invocation: the command, full run config,
/// named input paths, and which gateway and models served it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub command: String,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    /// "mock(seed=N)" or the backends config path.
    pub gateway: String,
    pub models: BTreeMap<String, String>,
    pub cache_dir: Option<String>,
}

impl ConfigSnapshot {
    pub fn new(command: &str, cfg: &RunConfig, gateway_desc: &str, gateway: &Gateway) -> Self {
        ConfigSnapshot {
            command: command.into(),
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            gateway: gateway_desc.into(),
            models: gateway_models(gateway),
            cache_dir: None,
        }
    }

    pub fn input(mut self, name: &str, value: impl Into<String>) -> Self {
        self.inputs.insert(name.into(), value.into());
        self
    }

    pub fn cache(mut self, dir: Option<&Path>) -> Self {
        self.cache_dir = dir.map(|d| d.display().to_string());
        self
    }
}

fn gateway_models(gateway: &Gateway) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for kind in BackendKind::ALL {
        if let Ok(id) = gateway.model_id(kind) {
            out.insert(kind.as_str().to_string(), id.to_string());
        }
    }
    out
}

/// Pretty JSON plus trailing newline; the only writer reports go through.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("report serialization failed: {e}")))?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Ranked hypotheses of a describe run as CSV rows.
pub fn write_describe_csv(report: &DescribeReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["rank", "hypothesis", "score", "p_value", "n_a", "n_b"])
        .map_err(csv_err)?;
    for (i, r) in report.ranked.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.hypothesis.text.clone(),
            r.score.to_string(),
            r.p_value.to_string(),
            r.n_a.to_string(),
            r.n_b.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-pair verdict detail across every split, one row per judged hypothesis.
pub fn write_benchmark_csv(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["split", "pair", "rank", "hypothesis", "score", "p_value", "judge_score"])
        .map_err(csv_err)?;
    for (split, metrics) in &report.splits {
        for (pair, eval) in &metrics.per_pair {
            for j in &eval.judged {
                w.write_record([
                    split.clone(),
                    pair.clone(),
                    j.rank.to_string(),
                    j.ranked.hypothesis.text.clone(),
                    j.ranked.score.to_string(),
                    j.ranked.p_value.to_string(),
                    j.verdict.score.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Internal(format!("csv error: {other:?}")),
        }
    } else {
        Error::Internal(format!("csv error: {e}"))
    }
}
