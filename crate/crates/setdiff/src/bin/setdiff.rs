//! Thin CLI over the library: flag parsing, gateway choice, exit codes.
//! All pipeline logic lives in the crate.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use setdiff::commands::{
    cmd_benchmark, cmd_cache, cmd_describe, cmd_experiment, CacheAction, CommonOpts,
    ExperimentReport, ExperimentSpec, GatewayChoice,
};
use setdiff::config::RunConfig;
use setdiff::error::{Error, Result};
use setdiff::experiments::{AblationDimension, PurityConfig};
use setdiff::model::Split;

#[derive(Parser)]
#[command(
    name = "setdiff",
    version,
    about = "Describe how two image sets differ: propose candidate differences, rank them by statistical evidence."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank natural-language differences between two record manifests.
    Describe {
        /// Record manifest for set A (JSONL, one image record per line).
        #[arg(long, value_name = "FILE")]
        set_a: PathBuf,
        /// Record manifest for set B.
        #[arg(long, value_name = "FILE")]
        set_b: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a benchmark directory against its ground truths.
    Benchmark {
        /// Benchmark directory containing index.json.
        #[arg(long, value_name = "DIR")]
        benchmark: PathBuf,
        /// Only evaluate this split.
        #[arg(long, value_name = "NAME")]
        split: Option<String>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Robustness experiments: purity sweep or single-dimension ablation.
    Experiment {
        #[command(subcommand)]
        kind: ExperimentCommand,
    },
    /// Inspect or maintain the response cache.
    Cache {
        /// stats, verify, or clear.
        action: String,
        #[arg(long, value_name = "DIR")]
        cache_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Noise-injection sweep over one pair manifest.
    Purity {
        /// Pair manifest (JSONL with a header line carrying the ground truth).
        #[arg(long, value_name = "FILE")]
        pair: PathBuf,
        /// Comma-separated purity levels in [0, 1], ascending.
        #[arg(long, value_name = "LIST", default_value = "0,0.2,0.4,0.6,0.8,1.0")]
        levels: String,
        /// Pipeline runs per purity level.
        #[arg(long, default_value_t = 3)]
        trials: usize,
        /// Seed for swap plans and per-cell runs.
        #[arg(long, default_value_t = 0)]
        experiment_seed: u64,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Vary one pipeline dimension over a benchmark, all else fixed.
    Ablate {
        #[arg(long, value_name = "DIR")]
        benchmark: PathBuf,
        #[arg(long, value_name = "NAME")]
        split: Option<String>,
        /// rounds, samples, metric, or no_ranker.
        #[arg(long, value_name = "DIM")]
        dimension: String,
        /// Comma-separated values for the varied dimension (unused by
        /// no_ranker).
        #[arg(long, value_name = "LIST", default_value = "")]
        values: String,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// Hypothesis proposer: caption or image.
    #[arg(long, value_name = "KIND")]
    proposer: Option<String>,
    /// Hypothesis ranker: feature, caption, or image.
    #[arg(long, value_name = "KIND")]
    ranker: Option<String>,
    /// Ranking metric: auroc, p_value, or diff_means.
    #[arg(long, value_name = "NAME")]
    metric: Option<String>,
    /// Significance level for the ranking filter.
    #[arg(long, value_name = "REAL")]
    alpha: Option<f64>,
    /// Proposer rounds.
    #[arg(long, value_name = "N")]
    rounds: Option<u32>,
    /// Images sampled per set per round.
    #[arg(long, value_name = "N")]
    samples_per_round: Option<usize>,
    /// Hypotheses requested per round.
    #[arg(long, value_name = "N")]
    hypotheses_per_round: Option<usize>,
    /// Text wrapped around each hypothesis before embedding; must contain
    /// {hypothesis}.
    #[arg(long, value_name = "TEXT")]
    template: Option<String>,
    /// Comma-separated k values for Acc@k and report depth.
    #[arg(long, value_name = "LIST")]
    top_k: Option<String>,
    /// Root seed for subset sampling and the mock backend.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

impl PipelineArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(p) = &self.proposer {
            cfg.proposer.kind = p.parse().map_err(|e| flag_err("--proposer", e))?;
        }
        if let Some(r) = &self.ranker {
            cfg.ranker.kind = r.parse().map_err(|e| flag_err("--ranker", e))?;
        }
        if let Some(m) = &self.metric {
            cfg.ranker.metric = m.parse().map_err(|e| flag_err("--metric", e))?;
        }
        if let Some(a) = self.alpha {
            cfg.ranker.alpha = a;
        }
        if let Some(r) = self.rounds {
            cfg.proposer.rounds = r;
        }
        if let Some(s) = self.samples_per_round {
            cfg.proposer.per_set = s;
        }
        if let Some(h) = self.hypotheses_per_round {
            cfg.proposer.n_hypotheses = h;
        }
        if let Some(t) = &self.template {
            cfg.ranker.text_template = t.clone();
        }
        if let Some(list) = &self.top_k {
            cfg.top_k = parse_list(list, "--top-k")?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        // Flag-driven violations are configuration errors, not data errors.
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Use the deterministic offline mock gateway.
    #[arg(long, conflicts_with = "backends")]
    mock: bool,
    /// Backends config file (TOML). Required unless --mock.
    #[arg(long, value_name = "FILE")]
    backends: Option<PathBuf>,
    /// Response cache directory.
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Prompt template override directory.
    #[arg(long, value_name = "DIR")]
    prompts: Option<PathBuf>,
    /// Output directory for reports.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

impl CommonArgs {
    fn to_opts(&self) -> Result<CommonOpts> {
        let gateway = if self.mock {
            GatewayChoice::Mock
        } else {
            match &self.backends {
                Some(path) => GatewayChoice::Backends(path.clone()),
                None => {
                    return Err(Error::Config(
                        "no gateway: pass --backends <FILE> or --mock".into(),
                    ))
                }
            }
        };
        Ok(CommonOpts {
            gateway,
            cache_dir: self.cache_dir.clone(),
            prompts_dir: self.prompts.clone(),
            out_dir: self.out.clone(),
        })
    }
}

fn flag_err(flag: &str, e: Error) -> Error {
    Error::Config(format!("{flag}: {e}"))
}

fn parse_list<T: std::str::FromStr>(list: &str, flag: &str) -> Result<Vec<T>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("{flag}: bad entry {s:?}")))
        })
        .collect()
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            tracing::error!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Describe {
            set_a,
            set_b,
            pipeline,
            common,
        } => {
            let cfg = pipeline.to_config()?;
            let opts = common.to_opts()?;
            let report = cmd_describe(&set_a, &set_b, &opts, &cfg)?;
            tracing::info!(
                ranked = report.ranked.len(),
                rejected = report.rejected.len(),
                out = %opts.out_dir.display(),
                "describe complete"
            );
            Ok(0)
        }
        Command::Benchmark {
            benchmark,
            split,
            pipeline,
            common,
        } => {
            let cfg = pipeline.to_config()?;
            let opts = common.to_opts()?;
            let split = split.as_deref().map(Split::parse);
            let report = cmd_benchmark(&benchmark, split.as_ref(), &opts, &cfg)?;
            tracing::info!(
                pairs = report.total_pairs,
                quarantined = report.total_quarantined,
                out = %opts.out_dir.display(),
                "benchmark complete"
            );
            Ok(0)
        }
        Command::Experiment { kind } => {
            let (spec, pipeline, common) = match kind {
                ExperimentCommand::Purity {
                    pair,
                    levels,
                    trials,
                    experiment_seed,
                    pipeline,
                    common,
                } => {
                    let purity = PurityConfig {
                        purity_levels: parse_list(&levels, "--levels")?,
                        trials,
                        seed: experiment_seed,
                    };
                    purity.validate().map_err(|e| Error::Config(e.to_string()))?;
                    (
                        ExperimentSpec::Purity {
                            pair_manifest: pair,
                            purity,
                        },
                        pipeline,
                        common,
                    )
                }
                ExperimentCommand::Ablate {
                    benchmark,
                    split,
                    dimension,
                    values,
                    pipeline,
                    common,
                } => {
                    let dimension: AblationDimension =
                        dimension.parse().map_err(|e| flag_err("--dimension", e))?;
                    (
                        ExperimentSpec::Ablate {
                            benchmark_dir: benchmark,
                            split: split.as_deref().map(Split::parse),
                            dimension,
                            values: values
                                .split(',')
                                .map(str::trim)
                                .filter(|s| !s.is_empty())
                                .map(String::from)
                                .collect(),
                        },
                        pipeline,
                        common,
                    )
                }
            };
            let cfg = pipeline.to_config()?;
            let opts = common.to_opts()?;
            match cmd_experiment(&spec, &opts, &cfg)? {
                ExperimentReport::Purity(sweep) => {
                    tracing::info!(
                        cells = sweep.cells.len(),
                        quarantined = sweep.quarantined.len(),
                        out = %opts.out_dir.display(),
                        "purity sweep complete"
                    );
                }
                ExperimentReport::Ablation(table) => {
                    tracing::info!(
                        rows = table.rows.len(),
                        out = %opts.out_dir.display(),
                        "ablation complete"
                    );
                }
            }
            Ok(0)
        }
        Command::Cache { action, cache_dir } => {
            let action: CacheAction = action.parse()?;
            let report = cmd_cache(action, &cache_dir)?;
            let body = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Internal(e.to_string()))?;
            println!("{body}");
            if report.corrupt.is_empty() {
                Ok(0)
            } else {
                // Corrupt cache entries are a data problem for the caller.
                Ok(3)
            }
        }
    }
}
