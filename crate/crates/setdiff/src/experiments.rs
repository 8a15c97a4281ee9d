//! Robustness protocols: seeded noise injection, purity sweeps over the full
//! pipeline, single-dimension ablations, and synthetic planted-concept pairs
//! for offline experiments.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample as index_sample;
use serde::{Deserialize, Serialize};

use crate::backend::mock::MockSource;
use crate::backend::Gateway;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluator::{acc_at_k, judge, parallel_map, run_benchmark, run_pipeline};
use crate::model::{BenchmarkManifest, ImageRecord, ImageSetPair};
use crate::prompts::PromptSet;
use crate::proposer::{normalize_text, run_proposer};
use crate::ranker::RankMetric;
use crate::seeds;

/// Purity sweep protocol: which mixing levels to run and how many seeded
/// trials per level. Purity p leaves each set (1+p)/2 intact; the rest is
/// swapped with the other side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurityConfig {
    pub purity_levels: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PurityConfig {
    fn default() -> Self {
        PurityConfig {
            purity_levels: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            trials: 3,
            seed: 0,
        }
    }
}

impl PurityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.purity_levels.is_empty() {
            return Err(Error::Validation("purity_levels must be non-empty".into()));
        }
        for &p in &self.purity_levels {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!(
                    "purity level {p} is outside [0, 1]"
                )));
            }
        }
        if self.purity_levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "purity_levels must be strictly ascending".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::Validation("trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Recipe for a synthetic pair the mock backend can resolve: every set-A
/// image carries `concept_tag_a`, every set-B image `concept_tag_b`, at the
/// given embedding noise level. `distractor_tags` are the decoys the mock
/// proposer should emit ahead of the planted concept; callers hand them to
/// `MockBackend::with_distractors`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub concept_tag_a: String,
    pub concept_tag_b: String,
    pub n_per_set: usize,
    pub noise_sigma: f64,
    #[serde(default)]
    pub distractor_tags: Vec<String>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let a = self.concept_tag_a.trim().to_lowercase();
        let b = self.concept_tag_b.trim().to_lowercase();
        if a.is_empty() || b.is_empty() {
            return Err(Error::Validation("concept tags must be non-empty".into()));
        }
        if a == b {
            return Err(Error::Validation(format!(
                "concept tags must be distinct, both are {a:?}"
            )));
        }
        if self.n_per_set == 0 {
            return Err(Error::Validation("n_per_set must be at least 1".into()));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Validation(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Build a planted-concept pair out of `mock://` sources. Salts are derived
/// from `seed` so the same seed always yields the same pair, and different
/// records never share an image.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<ImageSetPair> {
    spec.validate()?;
    let tag_a = spec.concept_tag_a.trim().to_lowercase();
    let tag_b = spec.concept_tag_b.trim().to_lowercase();
    let side = |tag: &str, side_ix: u64, label: &str| -> Vec<ImageRecord> {
        (0..spec.n_per_set)
            .map(|i| {
                let salt = seeds::mix(seed, "synthetic-salt", &[side_ix, i as u64]) as u32;
                ImageRecord::new(
                    format!("{tag}-{label}-{i:04}"),
                    MockSource::new(tag, spec.noise_sigma, salt).to_source(),
                )
            })
            .collect()
    };
    ImageSetPair::new(
        format!("synthetic-{tag_a}-vs-{tag_b}"),
        side(&tag_a, 0, "a"),
        side(&tag_b, 1, "b"),
        Some(format!("images with {tag_a}")),
    )
}

/// Exchange a seeded selection of records between the two sides: ⌊(1−p)/2·n⌋
/// disjoint index pairs are swapped, so purity 1 is the identity and purity 0
/// exchanges half of each set. Applying the same (pair, purity, seed) twice
/// restores the original pair.
pub fn inject_noise(pair: &ImageSetPair, purity: f64, seed: u64) -> Result<ImageSetPair> {
    if !(0.0..=1.0).contains(&purity) {
        return Err(Error::Validation(format!(
            "purity must be in [0, 1], got {purity}"
        )));
    }
    let n = pair.set_a.len();
    if pair.set_b.len() != n {
        return Err(Error::Domain(format!(
            "noise injection needs equal set sizes, got |A|={n} and |B|={}",
            pair.set_b.len()
        )));
    }
    // The epsilon keeps decimal purities exact: (1-0.4)/2*100 evaluates just
    // below 30 in floating point but must floor to 30, not 29.
    let k = ((1.0 - purity) / 2.0 * n as f64 + 1e-9).floor() as usize;
    let mut out = pair.clone();
    if k == 0 {
        return Ok(out);
    }
    let mut rng = seeds::rng(seed, "inject-noise", &[n as u64, k as u64]);
    let pick_a = index_sample(&mut rng, n, k).into_vec();
    let pick_b = index_sample(&mut rng, n, k).into_vec();
    for (&ia, &ib) in pick_a.iter().zip(&pick_b) {
        std::mem::swap(&mut out.set_a[ia], &mut out.set_b[ib]);
    }
    Ok(out)
}

/// One (purity, trial) cell: noise injection, full pipeline, judging.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurityCell {
    pub purity: f64,
    pub trial: usize,
    pub seed: u64,
    /// Acc@k over this single run for each configured k.
    pub acc_at: BTreeMap<usize, f64>,
    /// Whether the ground-truth phrase survived ranking and the significance
    /// filter.
    pub truth_ranked: bool,
    pub ranked_total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuarantinedCell {
    pub purity: f64,
    pub trial: usize,
    pub error: String,
}

/// Per-level aggregate over surviving trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PuritySummary {
    pub purity: f64,
    pub trials: usize,
    pub mean_acc_at: BTreeMap<usize, f64>,
    /// Half-width of the normal-approximation 95% interval (1.96·s/√n with
    /// sample standard deviation); a single trial reports 0.
    pub ci95_at: BTreeMap<usize, f64>,
    pub truth_ranked_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PuritySweep {
    /// Sorted by (purity, trial).
    pub cells: Vec<PurityCell>,
    pub summary: Vec<PuritySummary>,
    pub quarantined: Vec<QuarantinedCell>,
}

/// Run the full pipeline once per (purity level, trial), judging against the
/// pair's ground truth. Cells run concurrently up to `cfg.eval_width`;
/// failing cells are quarantined, and the sweep only errors when every cell
/// failed. With a mock gateway, pre-register all concept tags first so cell
/// scheduling cannot affect embeddings.
pub fn purity_sweep(
    gateway: &Gateway,
    prompts: &PromptSet,
    pair: &ImageSetPair,
    pcfg: &PurityConfig,
    cfg: &RunConfig,
) -> Result<PuritySweep> {
    pcfg.validate()?;
    cfg.validate()?;
    let truth = pair.ground_truth.clone().ok_or_else(|| {
        Error::Validation(format!(
            "pair {:?} has no ground truth; sweep cells cannot be judged",
            pair.name
        ))
    })?;

    let mut plan: Vec<(f64, usize, u64)> = Vec::new();
    for &purity in &pcfg.purity_levels {
        let purity_q = (purity * 10_000.0).round() as u64;
        for trial in 0..pcfg.trials {
            let cell_seed = seeds::mix(pcfg.seed, "purity-cell", &[purity_q, trial as u64]);
            plan.push((purity, trial, cell_seed));
        }
    }

    let results = parallel_map(&plan, cfg.eval_width, |&(purity, trial, cell_seed)| {
        run_cell(gateway, prompts, pair, &truth, purity, trial, cell_seed, cfg)
    });

    let mut cells = Vec::new();
    let mut quarantined = Vec::new();
    for ((purity, trial, _), result) in plan.into_iter().zip(results) {
        match result {
            Ok(cell) => cells.push(cell),
            Err(e) => {
                tracing::warn!(purity, trial, error = %e, "sweep cell quarantined");
                quarantined.push(QuarantinedCell {
                    purity,
                    trial,
                    error: e.to_string(),
                });
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Domain(format!(
            "all {} sweep cells failed; first error: {}",
            quarantined.len(),
            quarantined[0].error
        )));
    }
    cells.sort_by(|x, y| x.purity.total_cmp(&y.purity).then(x.trial.cmp(&y.trial)));
    let summary = summarize(&cells, cfg);
    Ok(PuritySweep {
        cells,
        summary,
        quarantined,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    gateway: &Gateway,
    prompts: &PromptSet,
    pair: &ImageSetPair,
    truth: &str,
    purity: f64,
    trial: usize,
    cell_seed: u64,
    cfg: &RunConfig,
) -> Result<PurityCell> {
    let noisy = inject_noise(pair, purity, cell_seed)?;
    let mut cell_cfg = cfg.clone();
    cell_cfg.seed = cell_seed;
    let run = run_pipeline(gateway, prompts, &noisy, &cell_cfg)?;

    let truth_key = normalize_text(truth);
    let truth_ranked = run
        .outcome
        .ranked
        .iter()
        .any(|r| normalize_text(&r.hypothesis.text) == truth_key);

    let mut verdicts = Vec::new();
    for ranked in run.outcome.ranked.iter().take(cell_cfg.max_k()) {
        verdicts.push(judge(gateway, prompts, &ranked.hypothesis.text, truth)?);
    }
    let lists = vec![(pair.name.clone(), verdicts)];
    let mut acc_at = BTreeMap::new();
    for &k in &cell_cfg.top_k {
        acc_at.insert(k, acc_at_k(&lists, k)?);
    }
    Ok(PurityCell {
        purity,
        trial,
        seed: cell_seed,
        acc_at,
        truth_ranked,
        ranked_total: run.outcome.ranked.len(),
    })
}

fn summarize(cells: &[PurityCell], cfg: &RunConfig) -> Vec<PuritySummary> {
    // f64 bit patterns of values in [0, 1] order the same as the values.
    let mut by_level: BTreeMap<u64, Vec<&PurityCell>> = BTreeMap::new();
    for cell in cells {
        by_level.entry(cell.purity.to_bits()).or_default().push(cell);
    }
    by_level
        .into_iter()
        .map(|(bits, group)| {
            let mut mean_acc_at = BTreeMap::new();
            let mut ci95_at = BTreeMap::new();
            for &k in &cfg.top_k {
                let xs: Vec<f64> = group.iter().map(|c| c.acc_at[&k]).collect();
                let (mean, ci) = mean_ci95(&xs);
                mean_acc_at.insert(k, mean);
                ci95_at.insert(k, ci);
            }
            let hits = group.iter().filter(|c| c.truth_ranked).count();
            PuritySummary {
                purity: f64::from_bits(bits),
                trials: group.len(),
                mean_acc_at,
                ci95_at,
                truth_ranked_rate: hits as f64 / group.len() as f64,
            }
        })
        .collect()
}

fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Write the raw per-cell table and the per-level summary as CSV, one header
/// row each, suitable for external plotting.
pub fn write_sweep_csv(sweep: &PuritySweep, cells_path: &Path, summary_path: &Path) -> Result<()> {
    let ks: Vec<usize> = match sweep.cells.first() {
        Some(c) => c.acc_at.keys().copied().collect(),
        None => Vec::new(),
    };

    let mut w = csv::Writer::from_path(cells_path).map_err(csv_err)?;
    let mut header = vec!["purity".to_string(), "trial".into(), "seed".into()];
    header.extend(ks.iter().map(|k| format!("acc_at_{k}")));
    header.push("truth_ranked".into());
    header.push("ranked_total".into());
    w.write_record(&header).map_err(csv_err)?;
    for cell in &sweep.cells {
        let mut row = vec![
            cell.purity.to_string(),
            cell.trial.to_string(),
            cell.seed.to_string(),
        ];
        row.extend(ks.iter().map(|k| cell.acc_at[k].to_string()));
        row.push(cell.truth_ranked.to_string());
        row.push(cell.ranked_total.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(summary_path).map_err(csv_err)?;
    let mut header = vec!["purity".to_string(), "trials".into()];
    for k in &ks {
        header.push(format!("mean_acc_at_{k}"));
        header.push(format!("ci95_acc_at_{k}"));
    }
    header.push("truth_ranked_rate".into());
    w.write_record(&header).map_err(csv_err)?;
    for s in &sweep.summary {
        let mut row = vec![s.purity.to_string(), s.trials.to_string()];
        for k in &ks {
            row.push(s.mean_acc_at[k].to_string());
            row.push(s.ci95_at[k].to_string());
        }
        row.push(s.truth_ranked_rate.to_string());
        w.write_record(&row).map_err(csv_err)?;
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

/// The one pipeline dimension an ablation varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationDimension {
    Rounds,
    Samples,
    Metric,
    NoRanker,
}

impl AblationDimension {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationDimension::Rounds => "rounds",
            AblationDimension::Samples => "samples",
            AblationDimension::Metric => "metric",
            AblationDimension::NoRanker => "no_ranker",
        }
    }
}

impl std::str::FromStr for AblationDimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "rounds" => Ok(AblationDimension::Rounds),
            "samples" => Ok(AblationDimension::Samples),
            "metric" => Ok(AblationDimension::Metric),
            "no_ranker" | "no-ranker" => Ok(AblationDimension::NoRanker),
            other => Err(Error::Validation(format!(
                "unknown ablation dimension {other:?} (expected rounds, samples, metric, or no_ranker)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub dimension: String,
    pub value: String,
    /// Benchmark Acc@k over non-quarantined pairs.
    pub acc_at: BTreeMap<usize, f64>,
    pub quarantined: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub dimension: String,
    pub rows: Vec<AblationRow>,
}

/// Run the benchmark once per value of a single varied dimension, everything
/// else pinned to `cfg`. `no_ranker` ignores `values` and emits two rows: the
/// ranked baseline and a variant that judges hypotheses in proposer emission
/// order without scoring or filtering.
pub fn ablate(
    gateway: &Gateway,
    prompts: &PromptSet,
    manifest: &BenchmarkManifest,
    dimension: AblationDimension,
    values: &[String],
    cfg: &RunConfig,
) -> Result<AblationTable> {
    cfg.validate()?;
    manifest.validate()?;

    struct Variant {
        value: String,
        cfg: RunConfig,
        unranked: bool,
    }

    let mut variants = Vec::new();
    match dimension {
        AblationDimension::NoRanker => {
            variants.push(Variant {
                value: "ranked".into(),
                cfg: cfg.clone(),
                unranked: false,
            });
            variants.push(Variant {
                value: "no_ranker".into(),
                cfg: cfg.clone(),
                unranked: true,
            });
        }
        _ => {
            if values.is_empty() {
                return Err(Error::Validation(format!(
                    "ablating {} needs at least one value",
                    dimension.as_str()
                )));
            }
            for v in values {
                let mut varied = cfg.clone();
                match dimension {
                    AblationDimension::Rounds => {
                        varied.proposer.rounds = v.trim().parse().map_err(|_| {
                            Error::Validation(format!("bad rounds value {v:?}"))
                        })?;
                    }
                    AblationDimension::Samples => {
                        varied.proposer.per_set = v.trim().parse().map_err(|_| {
                            Error::Validation(format!("bad samples value {v:?}"))
                        })?;
                    }
                    AblationDimension::Metric => {
                        varied.ranker.metric = v.parse::<RankMetric>()?;
                    }
                    AblationDimension::NoRanker => unreachable!(),
                }
                varied.validate()?;
                variants.push(Variant {
                    value: v.trim().to_string(),
                    cfg: varied,
                    unranked: false,
                });
            }
        }
    }

    let mut rows = Vec::new();
    for variant in &variants {
        let (acc_at, quarantined) = if variant.unranked {
            unranked_metrics(gateway, prompts, manifest, &variant.cfg)?
        } else {
            let metrics = run_benchmark(gateway, prompts, manifest, &variant.cfg)?;
            (metrics.acc_at, metrics.quarantined.len())
        };
        rows.push(AblationRow {
            dimension: dimension.as_str().into(),
            value: variant.value.clone(),
            acc_at,
            quarantined,
        });
    }
    Ok(AblationTable {
        dimension: dimension.as_str().into(),
        rows,
    })
}

/// Judge hypotheses in proposer emission order, no scoring and no
/// significance filter.
fn unranked_metrics(
    gateway: &Gateway,
    prompts: &PromptSet,
    manifest: &BenchmarkManifest,
    cfg: &RunConfig,
) -> Result<(BTreeMap<usize, f64>, usize)> {
    let results = parallel_map(&manifest.pairs, cfg.eval_width, |pair| {
        let truth = pair.ground_truth.clone().ok_or_else(|| {
            Error::Validation(format!("pair {:?} has no ground truth", pair.name))
        })?;
        let hypotheses = run_proposer(gateway, prompts, pair, &cfg.proposer, cfg.seed)?;
        let mut verdicts = Vec::new();
        for h in hypotheses.iter().take(cfg.max_k()) {
            verdicts.push(judge(gateway, prompts, &h.text, &truth)?);
        }
        Ok::<_, Error>((pair.name.clone(), verdicts))
    });

    let mut lists = Vec::new();
    let mut quarantined = 0usize;
    for (pair, result) in manifest.pairs.iter().zip(results) {
        match result {
            Ok(entry) => lists.push(entry),
            Err(e) => {
                tracing::warn!(pair = %pair.name, error = %e, "pair quarantined in unranked ablation");
                quarantined += 1;
            }
        }
    }
    if lists.is_empty() {
        return Err(Error::Domain(
            "every pair failed during the unranked ablation".into(),
        ));
    }
    let mut acc_at = BTreeMap::new();
    for &k in &cfg.top_k {
        acc_at.insert(k, acc_at_k(&lists, k)?);
    }
    Ok((acc_at, quarantined))
}

/// Write an ablation table as CSV with a header row.
pub fn write_ablation_csv(table: &AblationTable, path: &Path) -> Result<()> {
    let ks: Vec<usize> = match table.rows.first() {
        Some(r) => r.acc_at.keys().copied().collect(),
        None => Vec::new(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["dimension".to_string(), "value".into()];
    header.extend(ks.iter().map(|k| format!("acc_at_{k}")));
    header.push("quarantined".into());
    w.write_record(&header).map_err(csv_err)?;
    for row in &table.rows {
        let mut record = vec![row.dimension.clone(), row.value.clone()];
        record.extend(ks.iter().map(|k| row.acc_at[k].to_string()));
        record.push(row.quarantined.to_string());
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::MockBackend;
    use crate::model::Split;
    use crate::proposer::ProposerConfig;
    use crate::stats;

    fn spec(tag_a: &str, tag_b: &str, n: usize, sigma: f64) -> SyntheticSpec {
        SyntheticSpec {
            concept_tag_a: tag_a.into(),
            concept_tag_b: tag_b.into(),
            n_per_set: n,
            noise_sigma: sigma,
            distractor_tags: Vec::new(),
        }
    }

    fn small_cfg() -> RunConfig {
        RunConfig {
            proposer: ProposerConfig {
                rounds: 2,
                per_set: 8,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn swap_counts_match_the_mixing_fraction() {
        let pair = generate_synthetic(&spec("cats", "dogs", 100, 0.1), 7).unwrap();
        let count_moved = |noisy: &ImageSetPair| {
            let moved_a = noisy
                .set_a
                .iter()
                .filter(|r| r.id.contains("-b-"))
                .count();
            let moved_b = noisy
                .set_b
                .iter()
                .filter(|r| r.id.contains("-a-"))
                .count();
            (moved_a, moved_b)
        };
        assert_eq!(count_moved(&inject_noise(&pair, 0.4, 1).unwrap()), (30, 30));
        assert_eq!(count_moved(&inject_noise(&pair, 0.0, 2).unwrap()), (50, 50));
        assert_eq!(count_moved(&inject_noise(&pair, 0.8, 3).unwrap()), (10, 10));
    }

    #[test]
    fn full_purity_is_the_identity() {
        let pair = generate_synthetic(&spec("cats", "dogs", 9, 0.2), 0).unwrap();
        let out = inject_noise(&pair, 1.0, 99).unwrap();
        assert_eq!(
            serde_json::to_string(&out).unwrap(),
            serde_json::to_string(&pair).unwrap()
        );
    }

    #[test]
    fn double_injection_is_an_involution() {
        let pair = generate_synthetic(&spec("cats", "dogs", 11, 0.3), 5).unwrap();
        for purity in [0.0, 0.3, 0.6] {
            let once = inject_noise(&pair, purity, 42).unwrap();
            let twice = inject_noise(&once, purity, 42).unwrap();
            assert_eq!(
                serde_json::to_string(&twice).unwrap(),
                serde_json::to_string(&pair).unwrap(),
                "same swap plan must undo itself at purity {purity}"
            );
        }
    }

    #[test]
    fn noise_rejects_bad_inputs() {
        let pair = generate_synthetic(&spec("cats", "dogs", 4, 0.1), 0).unwrap();
        assert!(matches!(
            inject_noise(&pair, 1.5, 0),
            Err(Error::Validation(_))
        ));
        let mut uneven = pair.clone();
        uneven.set_b.pop();
        assert!(matches!(
            inject_noise(&uneven, 0.5, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn synthetic_pairs_are_seed_deterministic() {
        let s = spec("owls", "crows", 6, 0.15);
        let one = generate_synthetic(&s, 13).unwrap();
        let two = generate_synthetic(&s, 13).unwrap();
        let other = generate_synthetic(&s, 14).unwrap();
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&two).unwrap()
        );
        assert_ne!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&other).unwrap()
        );
        assert_eq!(one.ground_truth.as_deref(), Some("images with owls"));
        assert_eq!(one.set_a.len(), 6);
        assert!(one.set_a[0].source.starts_with("mock://owls?"));
    }

    #[test]
    fn synthetic_spec_validation() {
        assert!(spec("cats", "cats", 5, 0.1).validate().is_err());
        assert!(spec("", "dogs", 5, 0.1).validate().is_err());
        assert!(spec("cats", "dogs", 0, 0.1).validate().is_err());
        assert!(spec("cats", "dogs", 5, -0.1).validate().is_err());
        assert!(spec("cats", "dogs", 5, 0.1).validate().is_ok());
    }

    #[test]
    fn purity_config_validation() {
        assert!(PurityConfig::default().validate().is_ok());
        let bad_order = PurityConfig {
            purity_levels: vec![0.4, 0.2],
            ..Default::default()
        };
        assert!(bad_order.validate().is_err());
        let out_of_range = PurityConfig {
            purity_levels: vec![0.0, 1.2],
            ..Default::default()
        };
        assert!(out_of_range.validate().is_err());
        let no_trials = PurityConfig {
            trials: 0,
            ..Default::default()
        };
        assert!(no_trials.validate().is_err());
    }

    #[test]
    fn sweep_shape_and_endpoints() {
        let pair = generate_synthetic(&spec("cats", "dogs", 12, 0.1), 3).unwrap();
        let mock = MockBackend::new(3);
        mock.register_concepts(["cats", "dogs"]);
        let gw = Gateway::mock(mock);
        let pcfg = PurityConfig {
            purity_levels: vec![0.0, 1.0],
            trials: 2,
            seed: 9,
        };
        let sweep =
            purity_sweep(&gw, &PromptSet::default(), &pair, &pcfg, &small_cfg()).unwrap();

        assert_eq!(sweep.cells.len(), 4, "levels × trials");
        assert!(sweep.quarantined.is_empty());
        let keys: Vec<(f64, usize)> = sweep.cells.iter().map(|c| (c.purity, c.trial)).collect();
        assert_eq!(keys, vec![(0.0, 0), (0.0, 1), (1.0, 0), (1.0, 1)]);

        let at = |p: f64| sweep.summary.iter().find(|s| s.purity == p).unwrap();
        assert_eq!(at(1.0).mean_acc_at[&1], 1.0, "clean pair must be solved");
        assert_eq!(at(1.0).truth_ranked_rate, 1.0);
        assert_eq!(
            at(0.0).truth_ranked_rate,
            0.0,
            "identical distributions must be significance-filtered"
        );
        assert_eq!(at(0.0).mean_acc_at[&1], 0.0);
    }

    #[test]
    fn single_trial_has_zero_interval() {
        let (mean, ci) = mean_ci95(&[0.75]);
        assert_eq!((mean, ci), (0.75, 0.0));
        let (mean, ci) = mean_ci95(&[1.0, 0.0]);
        assert_eq!(mean, 0.5);
        assert!((ci - 1.96 * (0.5 / 2.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sweep_csv_files_have_matching_shapes() {
        let pair = generate_synthetic(&spec("cats", "dogs", 10, 0.1), 1).unwrap();
        let mock = MockBackend::new(1);
        mock.register_concepts(["cats", "dogs"]);
        let gw = Gateway::mock(mock);
        let pcfg = PurityConfig {
            purity_levels: vec![1.0],
            trials: 2,
            seed: 0,
        };
        let sweep =
            purity_sweep(&gw, &PromptSet::default(), &pair, &pcfg, &small_cfg()).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let cells = dir.path().join("cells.csv");
        let summary = dir.path().join("summary.csv");
        write_sweep_csv(&sweep, &cells, &summary).unwrap();

        let read_lines = |p: &Path| {
            std::fs::read_to_string(p)
                .unwrap()
                .lines()
                .map(String::from)
                .collect::<Vec<_>>()
        };
        let cell_lines = read_lines(&cells);
        assert_eq!(cell_lines.len(), 1 + sweep.cells.len());
        assert_eq!(
            cell_lines[0],
            "purity,trial,seed,acc_at_1,acc_at_5,truth_ranked,ranked_total"
        );
        let summary_lines = read_lines(&summary);
        assert_eq!(summary_lines.len(), 1 + sweep.summary.len());
        assert!(summary_lines[0].starts_with("purity,trials,mean_acc_at_1,ci95_acc_at_1"));
    }

    #[test]
    fn planted_auroc_degrades_gracefully_with_noise() {
        let pair = generate_synthetic(&spec("cats", "dogs", 16, 0.2), 0).unwrap();
        let mock = MockBackend::new(0);
        mock.register_concepts(["cats", "dogs"]);
        let gw = Gateway::mock(mock);
        let e_text = gw.embed_text("images with cats").unwrap();

        let mean_auroc = |purity: f64| {
            let mut total = 0.0;
            for seed in 0..20u64 {
                let noisy = inject_noise(&pair, purity, seed).unwrap();
                let side = |records: &[ImageRecord]| -> Vec<f64> {
                    records
                        .iter()
                        .map(|r| {
                            let e = gw.embed_image(r).unwrap();
                            stats::cosine(e.as_slice(), e_text.as_slice()).unwrap()
                        })
                        .collect()
                };
                total += stats::auroc(&side(&noisy.set_a), &side(&noisy.set_b)).unwrap();
            }
            total / 20.0
        };

        let levels = [1.0, 0.8, 0.6, 0.4, 0.2, 0.0];
        let means: Vec<f64> = levels.iter().map(|&p| mean_auroc(p)).collect();
        assert_eq!(means[0], 1.0, "clean populations separate fully");
        for w in means.windows(2) {
            assert!(
                w[1] <= w[0] + 0.05,
                "mean AUROC should not rise as purity falls: {means:?}"
            );
        }
        assert!((means[5] - 0.5).abs() < 0.1, "purity 0 is chance level");
    }

    #[test]
    fn ablation_dimension_parsing() {
        assert_eq!(
            "no-ranker".parse::<AblationDimension>().unwrap(),
            AblationDimension::NoRanker
        );
        assert_eq!(
            "Rounds".parse::<AblationDimension>().unwrap(),
            AblationDimension::Rounds
        );
        assert!("width".parse::<AblationDimension>().is_err());
    }

    fn planted_manifest(n_pairs: usize) -> BenchmarkManifest {
        let tags = [
            ("cats", "dogs"),
            ("horses", "zebras"),
            ("pianos", "guitars"),
        ];
        BenchmarkManifest {
            split: Split::Easy,
            pairs: (0..n_pairs)
                .map(|i| {
                    let (a, b) = tags[i % tags.len()];
                    generate_synthetic(&spec(a, b, 12, 0.1), i as u64).unwrap()
                })
                .collect(),
        }
    }

    fn registered_gateway(seed: u64) -> Gateway {
        let mock = MockBackend::new(seed);
        mock.register_concepts(["cats", "dogs", "guitars", "horses", "pianos", "zebras"]);
        Gateway::mock(mock)
    }

    #[test]
    fn no_ranker_ablation_shows_the_rankers_value() {
        let manifest = planted_manifest(3);
        let gw = registered_gateway(11);
        let table = ablate(
            &gw,
            &PromptSet::default(),
            &manifest,
            AblationDimension::NoRanker,
            &[],
            &small_cfg(),
        )
        .unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].value, "ranked");
        assert_eq!(table.rows[1].value, "no_ranker");
        let ranked = table.rows[0].acc_at[&1];
        let unranked = table.rows[1].acc_at[&1];
        assert_eq!(ranked, 1.0);
        assert!(
            unranked < ranked,
            "emission order starts with distractors, so unranked Acc@1 ({unranked}) must trail ranked ({ranked})"
        );
    }

    #[test]
    fn metric_ablation_emits_one_row_per_metric() {
        let manifest = planted_manifest(1);
        let gw = registered_gateway(2);
        let values: Vec<String> = ["auroc", "p_value", "diff_means"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let table = ablate(
            &gw,
            &PromptSet::default(),
            &manifest,
            AblationDimension::Metric,
            &values,
            &small_cfg(),
        )
        .unwrap();
        assert_eq!(table.rows.len(), 3);
        for row in &table.rows {
            assert_eq!(row.acc_at[&1], 1.0, "planted pair solved under {}", row.value);
        }

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ablation.csv");
        write_ablation_csv(&table, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap(), "dimension,value,acc_at_1,acc_at_5,quarantined");
    }

    #[test]
    fn rounds_ablation_is_monotone_on_planted_pairs() {
        let manifest = planted_manifest(2);
        let gw = registered_gateway(5);
        let values: Vec<String> = ["1", "2", "3"].iter().map(|s| s.to_string()).collect();
        let table = ablate(
            &gw,
            &PromptSet::default(),
            &manifest,
            AblationDimension::Rounds,
            &values,
            &small_cfg(),
        )
        .unwrap();
        assert_eq!(table.rows.len(), 3);
        let accs: Vec<f64> = table.rows.iter().map(|r| r.acc_at[&5]).collect();
        for w in accs.windows(2) {
            assert!(w[1] >= w[0], "more rounds never hurt here: {accs:?}");
        }
        assert!(ablate(
            &gw,
            &PromptSet::default(),
            &manifest,
            AblationDimension::Rounds,
            &[],
            &small_cfg(),
        )
        .is_err());
    }
}
