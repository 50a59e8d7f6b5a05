//! Subcommand implementations. Each returns a [`CliError`] whose
//! [`exit_code`](CliError::exit_code) the binary hands to the OS.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use hencler_core::dual::{bicluster, eigen_form_check, stationarity_residual, BiclusterOptions};
use hencler_core::loss::LossTerms;
use hencler_core::metrics::nmi;
use hencler_core::model::{forward, model_input};
use hencler_core::synthetic::{heterophilous_graph, planted_blocks, HeterophilousConfig};
use hencler_core::train::{derive_seed, STREAM_INIT, STREAM_KMEANS};
use hencler_core::{AttributedGraph, EmbeddingPair, HenclerParams, Matrix, RunRecord, SimilarityFactor, TrainConfig, Trainer};
use serde::{Deserialize, Serialize};

use crate::bench::{self, BenchOptions};
use crate::config::{ConfigError, RunConfigFile, SEED_ENV};
use crate::io::{self, DatasetPaths, LoadError};
use crate::records::{write_json, MetricsFile, Timing};
use crate::checkpoint;

/// Largest graph whose `n×n` similarity the oracle commands materialize by
/// default.
pub const DEFAULT_MAX_NODES: usize = 5000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{0}")]
    Guard(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) | CliError::Load(_) => 2,
            CliError::Guard(_) => 3,
        }
    }
}

impl From<hencler_core::Error> for CliError {
    fn from(e: hencler_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn embedding_header(s: usize) -> Vec<String> {
    let mut h = vec!["node".to_owned()];
    h.extend((0..s).map(|i| format!("e{i}")));
    h.extend((0..s).map(|i| format!("r{i}")));
    h
}

pub fn write_embeddings(path: &Path, emb: &EmbeddingPair) -> anyhow::Result<()> {
    io::write_indexed_csv(path, &embedding_header(emb.e.cols()), &emb.concatenated())
        .with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub losses: Option<LossTerms>,
    pub tie_maps: bool,
    /// Runs with seeds `seed, seed + 1, …`.
    pub repeats: usize,
    pub parallel: bool,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub metrics: MetricsFile,
}

struct FinishedRun {
    params: HenclerParams,
    record: RunRecord,
    embeddings: EmbeddingPair,
    assignment: Vec<usize>,
}

fn train_once(graph: &AttributedGraph, config: TrainConfig) -> hencler_core::Result<FinishedRun> {
    let start = Instant::now();
    let mut trainer = Trainer::new(graph, config)?;
    trainer.run()?;
    let embeddings = trainer.embeddings()?;
    let assignment = trainer.assign()?;
    let (params, mut record) = trainer.finish();
    record.wall_time_secs = Some(start.elapsed().as_secs_f64());
    log::info!(
        "seed {}: best NMI {:?}, best F1 {:?}",
        config.seed,
        record.best_nmi.map(|b| b.value),
        record.best_f1.map(|b| b.value)
    );
    Ok(FinishedRun {
        params,
        record,
        embeddings,
        assignment,
    })
}

/// Trains `repeats` seeds and writes `metrics.json`, `timing.json`,
/// `checkpoint.json`, `embeddings.csv` and `assignment.csv`. The last three
/// come from the final parameters of the first seed.
pub fn train(args: &TrainArgs) -> Result<TrainOutcome, CliError> {
    let mut cfg = RunConfigFile::load(&args.config)?;
    if let Some(l) = args.losses {
        cfg.losses = l;
    }
    cfg.tie_maps |= args.tie_maps;
    let out = args.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let graph = io::load_graph(&cfg.dataset(), cfg.directed)?;
    let base = cfg.train_config(graph.num_classes())?;
    let repeats = args.repeats.max(1);
    let configs: Vec<TrainConfig> = (0..repeats as u64)
        .map(|i| TrainConfig {
            seed: base.seed.wrapping_add(i),
            ..base
        })
        .collect();
    let runs: Vec<hencler_core::Result<FinishedRun>> = if args.parallel && repeats > 1 {
        let graph = &graph;
        std::thread::scope(|s| {
            let handles: Vec<_> = configs.iter().map(|&c| s.spawn(move || train_once(graph, c))).collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        })
    } else {
        configs.iter().map(|&c| train_once(&graph, c)).collect()
    };
    let runs = runs.into_iter().collect::<hencler_core::Result<Vec<_>>>()?;

    ensure_dir(&out)?;
    let records: Vec<RunRecord> = runs.iter().map(|r| r.record.clone()).collect();
    let metrics = MetricsFile::new(base, &records);
    metrics.save(&out.join("metrics.json"))?;
    let timing: Vec<Timing> = records
        .iter()
        .map(|r| Timing {
            seed: r.seed,
            wall_time_secs: r.wall_time_secs,
        })
        .collect();
    write_json(&out.join("timing.json"), &timing)?;
    let first = &runs[0];
    checkpoint::save(&out.join("checkpoint.json"), &first.params)?;
    write_embeddings(&out.join("embeddings.csv"), &first.embeddings)?;
    io::write_assignment_csv(&out.join("assignment.csv"), &first.assignment)
        .with_context(|| format!("writing assignment to {}", out.display()))?;
    Ok(TrainOutcome { output_dir: out, metrics })
}

#[derive(Debug, Clone)]
pub struct OracleArgs {
    pub config: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub synthetic_blocks: bool,
    pub max_nodes: usize,
    pub drop_leading: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for OracleArgs {
    fn default() -> Self {
        Self {
            config: None,
            checkpoint: None,
            synthetic_blocks: false,
            max_nodes: DEFAULT_MAX_NODES,
            drop_leading: false,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
    pub singular_values: Vec<f64>,
    pub stationarity_residual: f64,
    pub eigen_form_residual: f64,
    pub row_nmi: Option<f64>,
    pub col_nmi: Option<f64>,
}

fn seed_from_env() -> Result<u64, CliError> {
    let mut cfg = RunConfigFile::default();
    cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
    Ok(cfg.seed)
}

fn guard(n: usize, max_nodes: usize) -> Result<(), CliError> {
    if n > max_nodes {
        return Err(CliError::Guard(format!(
            "{n} nodes exceeds the limit of {max_nodes} for materializing the similarity matrix; raise --max-nodes to override"
        )));
    }
    Ok(())
}

/// Graph, training settings and parameters (checkpoint or fresh init).
fn model_for(config: &Path, ckpt: Option<&Path>, max_nodes: usize) -> Result<(AttributedGraph, TrainConfig, HenclerParams), CliError> {
    let cfg = RunConfigFile::load(config)?;
    let graph = io::load_graph(&cfg.dataset(), cfg.directed)?;
    guard(graph.num_nodes(), max_nodes)?;
    let tc = cfg.train_config(graph.num_classes())?;
    let params = match ckpt {
        Some(p) => checkpoint::load(p)?,
        None => HenclerParams::init(tc.dims(graph.feature_dim()), tc.tie_maps, derive_seed(tc.seed, STREAM_INIT))?,
    };
    if params.dims().input_dim != graph.feature_dim() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "checkpoint expects {} attributes, dataset has {}",
            params.dims().input_dim,
            graph.feature_dim()
        )));
    }
    Ok((graph, tc, params))
}

fn learned_factors(graph: &AttributedGraph, params: &HenclerParams) -> Result<SimilarityFactor, CliError> {
    let pe = graph.random_walk_pe(params.dims().k_pe)?;
    Ok(forward(&model_input(graph, &pe)?, params)?.0)
}

/// Materializes `S`, biclusters it and checks the primal-dual relations.
/// Writes `oracle.json`, `row_clusters.csv` and `col_clusters.csv`.
pub fn oracle(args: &OracleArgs) -> Result<OracleReport, CliError> {
    let (sf, k, row_truth, col_truth, out, seed) = if args.synthetic_blocks {
        let seed = seed_from_env()?;
        let b = planted_blocks(90, 60, 3, 0.05, seed);
        guard(b.similarity.rows().max(b.similarity.cols()), args.max_nodes)?;
        let m = b.similarity.cols();
        let sf = SimilarityFactor::new(b.similarity, Matrix::identity(m))?;
        let out = args.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        (sf, 3, Some(b.row_labels), Some(b.col_labels), out, seed)
    } else {
        let config = args
            .config
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("oracle needs --config or --synthetic blocks".into()))?;
        let (graph, tc, params) = model_for(config, args.checkpoint.as_deref(), args.max_nodes)?;
        let sf = learned_factors(&graph, &params)?;
        let labels = graph.labels().map(<[usize]>::to_vec);
        let out = match &args.output_dir {
            Some(o) => o.clone(),
            None => RunConfigFile::load(config)?.output_dir,
        };
        (sf, tc.num_clusters.max(2), labels.clone(), labels, out, tc.seed)
    };
    let s = sf.similarity();
    let opts = BiclusterOptions {
        drop_leading: args.drop_leading,
        ..BiclusterOptions::new(k, derive_seed(seed, STREAM_KMEANS))
    };
    let bc = bicluster(&s, &opts)?;
    let score = |pred: &[usize], truth: &Option<Vec<usize>>| -> Result<Option<f64>, CliError> {
        Ok(match truth {
            Some(t) => Some(nmi(pred, t)?),
            None => None,
        })
    };
    let report = OracleReport {
        rows: s.rows(),
        cols: s.cols(),
        k,
        singular_values: bc.solution.sigma.clone(),
        stationarity_residual: stationarity_residual(&sf, &bc.solution)?,
        eigen_form_residual: eigen_form_check(&s, &bc.solution)?,
        row_nmi: score(&bc.row_clusters, &row_truth)?,
        col_nmi: score(&bc.col_clusters, &col_truth)?,
    };
    ensure_dir(&out)?;
    write_json(&out.join("oracle.json"), &report)?;
    io::write_assignment_csv(&out.join("row_clusters.csv"), &bc.row_clusters).context("writing row clusters")?;
    io::write_assignment_csv(&out.join("col_clusters.csv"), &bc.col_clusters).context("writing column clusters")?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct BenchmarkArgs {
    pub sizes: Vec<usize>,
    pub options: BenchOptions,
    pub output_dir: PathBuf,
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<bench::BenchReport, CliError> {
    if args.sizes.is_empty() {
        return Err(ConfigError::Invalid("no sizes given".into()).into());
    }
    let report = bench::run_benchmark(&args.sizes, &args.options)?;
    ensure_dir(&args.output_dir)?;
    let path = args.output_dir.join("benchmark.csv");
    bench::write_csv(&path, &report).with_context(|| format!("writing {}", path.display()))?;
    write_json(&args.output_dir.join("benchmark.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ExportArgs {
    pub config: PathBuf,
    pub checkpoint: PathBuf,
    pub max_nodes: usize,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub nodes: usize,
    pub max_asymmetry: f64,
    pub label_sorted: bool,
    pub within_block_mean: Option<f64>,
    pub off_block_mean: Option<f64>,
}

/// Node order grouping equal labels, stable inside each group.
pub fn label_order(labels: Option<&[usize]>, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(l) = labels {
        order.sort_by_key(|&v| l[v]);
    }
    order
}

pub fn block_means(s: &Matrix, labels: &[usize]) -> (f64, f64) {
    let (mut within, mut nw, mut off, mut no) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..s.rows() {
        for j in 0..s.cols() {
            if labels[i] == labels[j] {
                within += s.get(i, j);
                nw += 1;
            } else {
                off += s.get(i, j);
                no += 1;
            }
        }
    }
    (within / nw.max(1) as f64, off / no.max(1) as f64)
}

/// Writes `S` with rows and columns ordered by label as CSV (first row and
/// column hold node ids), plus a JSON summary next to it.
pub fn export_similarity(args: &ExportArgs) -> Result<SimilaritySummary, CliError> {
    let (graph, _, params) = model_for(&args.config, Some(&args.checkpoint), args.max_nodes)?;
    let s = learned_factors(&graph, &params)?.similarity();
    let n = s.rows();
    let labels = graph.labels();
    if labels.is_none() {
        log::warn!("no labels; similarity rows keep node order");
    }
    let order = label_order(labels, n);
    let sorted = s.select_rows(&order).select_cols(&order);
    let max_asymmetry = s.sub(&s.transpose())?.max_abs();
    let (within, off) = match labels {
        Some(l) => {
            let (w, o) = block_means(&s, l);
            (Some(w), Some(o))
        }
        None => (None, None),
    };
    let summary = SimilaritySummary {
        nodes: n,
        max_asymmetry,
        label_sorted: labels.is_some(),
        within_block_mean: within,
        off_block_mean: off,
    };
    let path = match &args.output {
        Some(p) => p.clone(),
        None => RunConfigFile::load(&args.config)?.output_dir.join("similarity.csv"),
    };
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    io::write_labeled_csv(&path, &order, &order, &sorted).with_context(|| format!("writing {}", path.display()))?;
    write_json(&path.with_extension("json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub graph: HeterophilousConfig,
    pub output_dir: PathBuf,
}

/// Writes a synthetic heterophilous dataset and a matching `config.json`.
pub fn generate(args: &GenerateArgs) -> Result<DatasetPaths, CliError> {
    let g = heterophilous_graph(&args.graph)?;
    let dir = &args.output_dir;
    ensure_dir(dir)?;
    let paths = DatasetPaths {
        features: dir.join("features.tsv"),
        edges: dir.join("edges.tsv"),
        labels: Some(dir.join("labels.tsv")),
    };
    io::write_graph(&g, &paths).context("writing dataset")?;
    let cfg = RunConfigFile {
        features: "features.tsv".into(),
        edges: "edges.tsv".into(),
        labels: Some("labels.tsv".into()),
        num_clusters: Some(args.graph.num_classes),
        ..RunConfigFile::default()
    };
    write_json(&dir.join("config.json"), &cfg)?;
    Ok(paths)
}
