//! Pipeline commands. Each one is a pure function of its input files and
//! the resolved [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use gnnx_core::diff::Real;
use gnnx_core::graph::GraphStats;
use gnnx_core::{
    assign_splits, build_graph, checkpoint_header, evaluate_split, explain_node, graph_stats,
    load_checkpoint, load_corpus, load_graph, render_explanation, train, EmbeddingCorpus, Error,
    Format, Metrics, ModelParams, Result, SimilarityGraph, Split, TrainReport,
};

use crate::config::{Precision, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.toml";

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The path configured for `name`, which must exist.
pub fn input_path(path: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let path = path.clone().ok_or_else(|| {
        Error::Config(format!(
            "no {name} path given (use --{name} or [paths] {name})"
        ))
    })?;
    if !path.exists() {
        return Err(io_error(&path, std::io::ErrorKind::NotFound.into()));
    }
    Ok(path)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

/// Loads the corpus and tags untagged records with seeded splits.
pub fn prepare_corpus(path: &Path, cfg: &RunConfig) -> Result<EmbeddingCorpus> {
    let corpus = load_corpus(path)?;
    assign_splits(&corpus, &cfg.split_spec())
}

pub fn cmd_build_graph(corpus_path: &Path, threshold: f64, out_path: &Path) -> Result<GraphStats> {
    let corpus = load_corpus(corpus_path)?;
    let graph = build_graph(&corpus, threshold)?;
    graph.save(&corpus.ids(), out_path)?;
    Ok(graph_stats(&graph))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub checkpoint: PathBuf,
    pub report_path: PathBuf,
}

fn fit_and_save<T: Real>(
    corpus: &EmbeddingCorpus,
    graph: &SimilarityGraph,
    cfg: &RunConfig,
    checkpoint: &Path,
) -> Result<TrainReport> {
    let model_cfg = cfg.model_config(corpus.feature_dim, corpus.num_classes);
    let (params, report) = train::<T>(corpus, graph, &model_cfg, &cfg.train_config())?;
    params.save(checkpoint)?;
    Ok(report)
}

/// Trains on `corpus_path` and `graph_path` and writes the best checkpoint,
/// the report and the resolved configuration into `out_dir`.
pub fn cmd_train(
    corpus_path: &Path,
    graph_path: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let corpus = prepare_corpus(corpus_path, cfg)?;
    let graph = load_graph(graph_path, &corpus)?;
    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let report = match cfg.precision {
        Precision::F32 => fit_and_save::<f32>(&corpus, &graph, cfg, &checkpoint)?,
        Precision::F64 => fit_and_save::<f64>(&corpus, &graph, cfg, &checkpoint)?,
    };
    let report_path = out_dir.join(REPORT_FILE);
    write_file(&report_path, &report.to_json())?;
    write_file(&out_dir.join(CONFIG_FILE), &cfg.to_toml())?;
    Ok(TrainOutcome {
        report,
        checkpoint,
        report_path,
    })
}

/// Checkpoint parameters in the precision they were trained in.
enum Loaded {
    F32(ModelParams<f32>),
    F64(ModelParams<f64>),
}

fn load_params(path: &Path) -> Result<Loaded> {
    match checkpoint_header(path)?.precision.as_str() {
        "f32" => Ok(Loaded::F32(load_checkpoint(path)?)),
        "f64" => Ok(Loaded::F64(load_checkpoint(path)?)),
        other => Err(Error::Config(format!(
            "{}: unknown precision {other:?}",
            path.display()
        ))),
    }
}

pub fn cmd_eval(
    corpus_path: &Path,
    graph_path: &Path,
    checkpoint: &Path,
    cfg: &RunConfig,
    split: Split,
) -> Result<Metrics> {
    cfg.validate()?;
    let corpus = prepare_corpus(corpus_path, cfg)?;
    let graph = load_graph(graph_path, &corpus)?;
    match load_params(checkpoint)? {
        Loaded::F32(p) => evaluate_split(&corpus, &graph, &p, split),
        Loaded::F64(p) => evaluate_split(&corpus, &graph, &p, split),
    }
}

/// Rendered explanation of one node's prediction.
pub fn cmd_explain(
    corpus_path: &Path,
    graph_path: &Path,
    checkpoint: &Path,
    cfg: &RunConfig,
    node_id: &str,
    format: Format,
) -> Result<String> {
    cfg.validate()?;
    let corpus = load_corpus(corpus_path)?;
    let graph = load_graph(graph_path, &corpus)?;
    let ecfg = cfg.explainer_config();
    let expl = match load_params(checkpoint)? {
        Loaded::F32(p) => explain_node(&corpus, &graph, &p, node_id, &ecfg)?,
        Loaded::F64(p) => explain_node(&corpus, &graph, &p, node_id, &ecfg)?,
    };
    Ok(render_explanation(&expl, format))
}
