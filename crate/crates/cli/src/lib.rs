//! `gnnx`: build similarity graphs, train, evaluate and explain from the command line.
//!
//! Every subcommand reads an optional TOML run configuration (`--config`)
//! and then applies its flags on top, so a flag always wins over the file.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gnnx_core::{Error, Format, Result, Split};

use crate::config::{Precision, RunConfig};

pub use commands::{cmd_build_graph, cmd_eval, cmd_explain, cmd_train, TrainOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Process exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gnnx",
    version,
    about = "Similarity-graph node classification with mask-based explanations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for the split shuffle, parameter init and explainer masks [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML run configuration; flags override its values [default: none]
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Connect every pair of nodes whose embedding cosine similarity reaches the threshold
    BuildGraph(BuildGraphArgs),
    /// Train the encoder and write the best checkpoint and a report
    Train(TrainArgs),
    /// Report accuracy and macro F1 of a checkpoint on one split
    Eval(EvalArgs),
    /// Fit edge and feature masks that explain one node's prediction
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus JSONL file [default: from config]
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Minimum cosine similarity for an edge [default: 0.725]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Graph file to write [default: [paths] graph from config, else graph.jsonl]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus JSONL file [default: from config]
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Graph file written by build-graph [default: from config]
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Output directory for checkpoint.jsonl, report.json and config.toml [default: run]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Training epochs [default: 200]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Adam first-moment decay [default: 0.9]
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Adam second-moment decay [default: 0.999]
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Adam epsilon [default: 1e-8]
    #[arg(long)]
    pub eps: Option<f64>,
    /// Hidden width of every layer [default: 64]
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Negative slope of the attention LeakyReLU [default: 0.2]
    #[arg(long)]
    pub leaky_slope: Option<f64>,
    /// Floating-point type used for training [default: f64]
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Train fraction for untagged corpora [default: 0.6]
    #[arg(long)]
    pub train_ratio: Option<f64>,
    /// Validation fraction for untagged corpora [default: 0.2]
    #[arg(long)]
    pub val_ratio: Option<f64>,
    /// Test fraction for untagged corpora [default: 0.2]
    #[arg(long)]
    pub test_ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus JSONL file [default: from config]
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Graph file [default: from config]
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Checkpoint written by train [default: from config]
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Split to evaluate [default: test]
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Also write the metrics as JSON to this file [default: none]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Dot,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Dot => Format::Dot,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corpus JSONL file [default: from config]
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Graph file [default: from config]
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Checkpoint written by train [default: from config]
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Id of the node to explain
    #[arg(long, value_name = "ID")]
    pub node: String,
    /// Output document format [default: json]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Mask optimisation epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mask learning rate [default: 0.01]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Edges kept in the explanation subgraph [default: 10]
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Write the document to this file instead of standard output [default: none]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

/// Merges config file and flags for `build-graph`.
pub fn resolve_build_graph(a: &BuildGraphArgs) -> Result<RunConfig> {
    let mut cfg = base_config(&a.common)?;
    set_path(&mut cfg.paths.corpus, &a.corpus);
    set_path(&mut cfg.paths.graph, &a.out);
    set(&mut cfg.graph.threshold, a.threshold);
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve_train(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = base_config(&a.common)?;
    set_path(&mut cfg.paths.corpus, &a.corpus);
    set_path(&mut cfg.paths.graph, &a.graph);
    set_path(&mut cfg.paths.out, &a.out);
    set(&mut cfg.train.epochs, a.epochs);
    set(&mut cfg.train.learning_rate, a.learning_rate);
    set(&mut cfg.train.beta1, a.beta1);
    set(&mut cfg.train.beta2, a.beta2);
    set(&mut cfg.train.eps, a.eps);
    set(&mut cfg.model.hidden_dim, a.hidden_dim);
    set(&mut cfg.model.leaky_slope, a.leaky_slope);
    set(&mut cfg.precision, a.precision);
    set(&mut cfg.split.train, a.train_ratio);
    set(&mut cfg.split.val, a.val_ratio);
    set(&mut cfg.split.test, a.test_ratio);
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve_eval(a: &EvalArgs) -> Result<RunConfig> {
    let mut cfg = base_config(&a.common)?;
    set_path(&mut cfg.paths.corpus, &a.corpus);
    set_path(&mut cfg.paths.graph, &a.graph);
    set_path(&mut cfg.paths.checkpoint, &a.checkpoint);
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve_explain(a: &ExplainArgs) -> Result<RunConfig> {
    let mut cfg = base_config(&a.common)?;
    set_path(&mut cfg.paths.corpus, &a.corpus);
    set_path(&mut cfg.paths.graph, &a.graph);
    set_path(&mut cfg.paths.checkpoint, &a.checkpoint);
    set(&mut cfg.explain.epochs, a.epochs);
    set(&mut cfg.explain.learning_rate, a.learning_rate);
    set(&mut cfg.explain.top_k_edges, a.top_k);
    cfg.validate()?;
    Ok(cfg)
}

fn report_write(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<()> {
    out.write_fmt(text).map_err(|e| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    })
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    use commands::input_path;
    match cli.command {
        Command::BuildGraph(a) => {
            let cfg = resolve_build_graph(&a)?;
            let corpus = input_path(&cfg.paths.corpus, "corpus")?;
            let dest = cfg
                .paths
                .graph
                .clone()
                .unwrap_or_else(|| PathBuf::from("graph.jsonl"));
            let stats = cmd_build_graph(&corpus, cfg.graph.threshold, &dest)?;
            report_write(
                out,
                format_args!(
                    "threshold   {}\n{stats}\nwrote {}\n",
                    cfg.graph.threshold,
                    dest.display()
                ),
            )
        }
        Command::Train(a) => {
            let cfg = resolve_train(&a)?;
            let corpus = input_path(&cfg.paths.corpus, "corpus")?;
            let graph = input_path(&cfg.paths.graph, "graph")?;
            let dir = cfg
                .paths
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("run"));
            let outcome = cmd_train(&corpus, &graph, &cfg, &dir)?;
            let r = &outcome.report;
            match (r.test_accuracy, r.test_macro_f1) {
                (Some(acc), Some(f1)) => report_write(
                    out,
                    format_args!(
                        "best epoch {} | test accuracy {acc:.4} | test macro F1 {f1:.4}\n",
                        r.best_epoch
                    ),
                )?,
                _ => report_write(
                    out,
                    format_args!("best epoch {} | no test nodes\n", r.best_epoch),
                )?,
            }
            report_write(
                out,
                format_args!(
                    "wrote {} and {}\n",
                    outcome.checkpoint.display(),
                    outcome.report_path.display()
                ),
            )
        }
        Command::Eval(a) => {
            let cfg = resolve_eval(&a)?;
            let corpus = input_path(&cfg.paths.corpus, "corpus")?;
            let graph = input_path(&cfg.paths.graph, "graph")?;
            let checkpoint = input_path(&cfg.paths.checkpoint, "checkpoint")?;
            let split = a.split.map_or(Split::Test, Split::from);
            let m = cmd_eval(&corpus, &graph, &checkpoint, &cfg, split)?;
            if let Some(dest) = &a.out {
                let mut json = serde_json::to_string_pretty(&m).expect("metrics serialise");
                json.push('\n');
                std::fs::write(dest, json).map_err(|e| Error::Io {
                    path: dest.clone(),
                    source: e,
                })?;
            }
            report_write(
                out,
                format_args!(
                    "{split}: accuracy {:.4} | macro F1 {:.4}\n",
                    m.accuracy, m.macro_f1
                ),
            )
        }
        Command::Explain(a) => {
            let cfg = resolve_explain(&a)?;
            let corpus = input_path(&cfg.paths.corpus, "corpus")?;
            let graph = input_path(&cfg.paths.graph, "graph")?;
            let checkpoint = input_path(&cfg.paths.checkpoint, "checkpoint")?;
            let format = a.format.map_or(Format::Json, Format::from);
            let doc = cmd_explain(&corpus, &graph, &checkpoint, &cfg, &a.node, format)?;
            match &a.out {
                Some(dest) => std::fs::write(dest, &doc).map_err(|e| Error::Io {
                    path: dest.clone(),
                    source: e,
                }),
                None => report_write(out, format_args!("{doc}")),
            }
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
