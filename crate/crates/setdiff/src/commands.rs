//! Command implementations behind the CLI: load manifests, build the
//! gateway, run the pipeline, write report files. Each command writes only
//! into its output directory (and the shared cache).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::cache::{CacheCorruption, DiskCache};
use crate::backend::config::BackendsFile;
use crate::backend::mock::{MockBackend, MockSource};
use crate::backend::Gateway;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluator::run_benchmark;
use crate::experiments::{
    ablate, purity_sweep, write_ablation_csv, write_sweep_csv, AblationDimension, AblationTable,
    PurityConfig, PuritySweep,
};
use crate::manifest::{load_benchmark_dir, load_pair_manifest, load_record_manifest};
use crate::model::{BenchmarkManifest, ImageSetPair, Split};
use crate::prompts::PromptSet;
use crate::report::{
    benchmark_report, describe_report, write_benchmark_csv, write_describe_csv, write_json,
    BenchmarkReport, ConfigSnapshot, DescribeReport,
};

/// How commands reach their backends.
#[derive(Debug, Clone)]
pub enum GatewayChoice {
    /// Deterministic in-process mock, seeded from the run config.
    Mock,
    /// Live backends described by a TOML config file.
    Backends(PathBuf),
}

/// Flags shared by every pipeline command.
#[derive(Debug, Clone)]
pub struct CommonOpts {
    pub gateway: GatewayChoice,
    pub cache_dir: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl CommonOpts {
    fn prompts(&self) -> Result<PromptSet> {
        match &self.prompts_dir {
            Some(dir) => PromptSet::load_dir(dir),
            None => Ok(PromptSet::default()),
        }
    }

    /// Build the gateway. For the mock, every `mock://` tag in the inputs is
    /// registered up front (sorted), so request scheduling can never affect
    /// embedding geometry.
    fn gateway<'a>(
        &self,
        seed: u64,
        pairs: impl IntoIterator<Item = &'a ImageSetPair>,
    ) -> Result<(Gateway, String)> {
        match &self.gateway {
            GatewayChoice::Mock => {
                let mock = MockBackend::new(seed);
                mock.register_concepts(collect_mock_tags(pairs));
                let gw = Gateway::mock_with_cache(mock, self.cache_dir.as_deref())?;
                Ok((gw, format!("mock(seed={seed})")))
            }
            GatewayChoice::Backends(path) => {
                let file = BackendsFile::load(path)?;
                let gw = Gateway::from_backends(&file, self.cache_dir.as_deref())?;
                Ok((gw, path.display().to_string()))
            }
        }
    }

    fn snapshot(&self, command: &str, cfg: &RunConfig, desc: &str, gw: &Gateway) -> ConfigSnapshot {
        ConfigSnapshot::new(command, cfg, desc, gw).cache(self.cache_dir.as_deref())
    }
}

fn collect_mock_tags<'a>(pairs: impl IntoIterator<Item = &'a ImageSetPair>) -> Vec<String> {
    let mut tags = BTreeSet::new();
    for pair in pairs {
        for record in pair.set_a.iter().chain(&pair.set_b) {
            if record.source.starts_with("mock://") {
                if let Ok(src) = MockSource::parse(&record.source) {
                    tags.insert(src.tag);
                }
            }
        }
    }
    tags.into_iter().collect()
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "set".into())
}

/// Describe the difference between two record manifests. Writes
/// `report.json`, `ranked.csv`, and `config.json` into the output directory
/// and returns the report.
pub fn cmd_describe(
    set_a: &Path,
    set_b: &Path,
    opts: &CommonOpts,
    cfg: &RunConfig,
) -> Result<DescribeReport> {
    cfg.validate()?;
    let records_a = load_record_manifest(set_a)?;
    let records_b = load_record_manifest(set_b)?;
    let name = format!("{}-vs-{}", file_stem(set_a), file_stem(set_b));
    let pair = ImageSetPair::new(name, records_a, records_b, None)?;

    let (gateway, desc) = opts.gateway(cfg.seed, [&pair])?;
    let prompts = opts.prompts()?;
    let run = crate::evaluator::run_pipeline(&gateway, &prompts, &pair, cfg)?;
    let report = describe_report(&pair, cfg, run, &gateway);

    std::fs::create_dir_all(&opts.out_dir)?;
    write_json(&report, &opts.out_dir.join("report.json"))?;
    write_describe_csv(&report, &opts.out_dir.join("ranked.csv"))?;
    let snap = opts
        .snapshot("describe", cfg, &desc, &gateway)
        .input("set_a", set_a.display().to_string())
        .input("set_b", set_b.display().to_string());
    write_json(&snap, &opts.out_dir.join("config.json"))?;
    Ok(report)
}

/// Evaluate a benchmark directory (optionally one split). Writes
/// `benchmark.json`, `verdicts.csv`, and `config.json`.
pub fn cmd_benchmark(
    benchmark_dir: &Path,
    split: Option<&Split>,
    opts: &CommonOpts,
    cfg: &RunConfig,
) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let manifests = load_benchmark_dir(benchmark_dir, split)?;
    let (gateway, desc) = opts.gateway(cfg.seed, manifests.iter().flat_map(|m| &m.pairs))?;
    let prompts = opts.prompts()?;

    let mut split_metrics = Vec::new();
    for manifest in &manifests {
        split_metrics.push(run_benchmark(&gateway, &prompts, manifest, cfg)?);
    }
    let report = benchmark_report(cfg, split_metrics, &gateway)?;

    std::fs::create_dir_all(&opts.out_dir)?;
    write_json(&report, &opts.out_dir.join("benchmark.json"))?;
    write_benchmark_csv(&report, &opts.out_dir.join("verdicts.csv"))?;
    let mut snap = opts
        .snapshot("benchmark", cfg, &desc, &gateway)
        .input("benchmark", benchmark_dir.display().to_string());
    if let Some(s) = split {
        snap = snap.input("split", s.as_str());
    }
    write_json(&snap, &opts.out_dir.join("config.json"))?;
    Ok(report)
}

/// Which experiment `cmd_experiment` runs.
#[derive(Debug, Clone)]
pub enum ExperimentSpec {
    /// Purity sweep over one pair manifest (needs a ground truth header).
    Purity {
        pair_manifest: PathBuf,
        purity: PurityConfig,
    },
    /// Single-dimension ablation over a benchmark directory.
    Ablate {
        benchmark_dir: PathBuf,
        split: Option<Split>,
        dimension: AblationDimension,
        values: Vec<String>,
    },
}

/// Outcome of `cmd_experiment`, whichever arm ran.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ExperimentReport {
    Purity(PuritySweep),
    Ablation(AblationTable),
}

/// Run a robustness experiment and write its CSV/JSON outputs.
pub fn cmd_experiment(
    spec: &ExperimentSpec,
    opts: &CommonOpts,
    cfg: &RunConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&opts.out_dir)?;
    match spec {
        ExperimentSpec::Purity {
            pair_manifest,
            purity,
        } => {
            let pair = load_pair_manifest(pair_manifest)?;
            let (gateway, desc) = opts.gateway(cfg.seed, [&pair])?;
            let prompts = opts.prompts()?;
            let sweep = purity_sweep(&gateway, &prompts, &pair, purity, cfg)?;

            write_json(&sweep, &opts.out_dir.join("purity.json"))?;
            write_sweep_csv(
                &sweep,
                &opts.out_dir.join("purity_cells.csv"),
                &opts.out_dir.join("purity_summary.csv"),
            )?;
            let snap = opts
                .snapshot("experiment-purity", cfg, &desc, &gateway)
                .input("pair", pair_manifest.display().to_string())
                .input("levels", format!("{:?}", purity.purity_levels))
                .input("trials", purity.trials.to_string())
                .input("experiment_seed", purity.seed.to_string());
            write_json(&snap, &opts.out_dir.join("config.json"))?;
            Ok(ExperimentReport::Purity(sweep))
        }
        ExperimentSpec::Ablate {
            benchmark_dir,
            split,
            dimension,
            values,
        } => {
            let manifests = load_benchmark_dir(benchmark_dir, split.as_ref())?;
            let combined = merge_manifests(manifests)?;
            let (gateway, desc) = opts.gateway(cfg.seed, &combined.pairs)?;
            let prompts = opts.prompts()?;
            let table = ablate(&gateway, &prompts, &combined, *dimension, values, cfg)?;

            write_json(&table, &opts.out_dir.join("ablation.json"))?;
            write_ablation_csv(&table, &opts.out_dir.join("ablation.csv"))?;
            let mut snap = opts
                .snapshot("experiment-ablate", cfg, &desc, &gateway)
                .input("benchmark", benchmark_dir.display().to_string())
                .input("dimension", dimension.as_str())
                .input("values", values.join(","));
            if let Some(s) = split {
                snap = snap.input("split", s.as_str());
            }
            write_json(&snap, &opts.out_dir.join("config.json"))?;
            Ok(ExperimentReport::Ablation(table))
        }
    }
}

fn merge_manifests(manifests: Vec<BenchmarkManifest>) -> Result<BenchmarkManifest> {
    let mut iter = manifests.into_iter();
    let mut combined = iter
        .next()
        .ok_or_else(|| Error::Validation("no benchmark splits loaded".into()))?;
    for manifest in iter {
        combined.pairs.extend(manifest.pairs);
    }
    combined.validate()?;
    Ok(combined)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheAction {
    Stats,
    Verify,
    Clear,
}

impl std::str::FromStr for CacheAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "stats" => Ok(CacheAction::Stats),
            "verify" => Ok(CacheAction::Verify),
            "clear" => Ok(CacheAction::Clear),
            other => Err(Error::Config(format!(
                "unknown cache action {other:?} (expected stats, verify, or clear)"
            ))),
        }
    }
}

/// Summary a cache command prints. `corrupt` is only populated by `verify`;
/// a non-empty list maps to a data-error exit in the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheReport {
    pub action: String,
    pub root: String,
    pub entries: u64,
    pub bytes: u64,
    pub removed: u64,
    pub corrupt: Vec<CacheCorruption>,
}

pub fn cmd_cache(action: CacheAction, cache_dir: &Path) -> Result<CacheReport> {
    if matches!(action, CacheAction::Stats | CacheAction::Verify) && !cache_dir.exists() {
        return Err(Error::Config(format!(
            "cache directory {} does not exist",
            cache_dir.display()
        )));
    }
    let cache = DiskCache::open(cache_dir)?;
    let mut report = CacheReport {
        action: match action {
            CacheAction::Stats => "stats".into(),
            CacheAction::Verify => "verify".into(),
            CacheAction::Clear => "clear".into(),
        },
        root: cache_dir.display().to_string(),
        entries: 0,
        bytes: 0,
        removed: 0,
        corrupt: Vec::new(),
    };
    match action {
        CacheAction::Stats => {
            let stats = cache.stats()?;
            report.entries = stats.entries;
            report.bytes = stats.bytes;
        }
        CacheAction::Verify => {
            let stats = cache.stats()?;
            report.entries = stats.entries;
            report.bytes = stats.bytes;
            report.corrupt = cache.verify()?;
        }
        CacheAction::Clear => {
            report.removed = cache.clear()?;
        }
    }
    Ok(report)
}

/// Build a mock gateway outside the command layer (examples, tests):
/// registers the given tags and wires the optional disk cache.
pub fn mock_gateway(seed: u64, tags: &[&str], cache_dir: Option<&Path>) -> Result<(Gateway, Arc<MockBackend>)> {
    let mock = MockBackend::new(seed);
    let mut sorted: Vec<&str> = tags.to_vec();
    sorted.sort_unstable();
    mock.register_concepts(sorted);
    let gw = Gateway::mock_with_cache(mock.clone(), cache_dir)?;
    Ok((gw, mock))
}
