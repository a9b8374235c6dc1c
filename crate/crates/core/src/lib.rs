//! Node classification on cosine-similarity graphs.
//!
//! Nodes carry fixed embeddings. A thresholded cosine graph connects them and
//! an encoder combining mean, sum and attention aggregation predicts a class
//! per node. [`explain`] fits soft edge and feature masks that account for a
//! single prediction.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod diff;
pub mod error;
pub mod explain;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synth;
pub mod train;

#[cfg(any(test, feature = "testing"))]
pub mod testing;

pub use dataset::{assign_splits, load_corpus, EmbeddingCorpus, NodeRecord, Split, SplitSpec};
pub use error::{Error, Result};
pub use explain::{
    explain_node, extract_subgraph, render_explanation, ExplainerConfig, Explanation, Format,
};
pub use graph::{build_graph, graph_stats, load_graph, SimilarityGraph, DEFAULT_THRESHOLD};
pub use metrics::{evaluate, Metrics};
pub use model::{
    checkpoint_header, forward, init_params, load_checkpoint, ModelConfig, ModelParams,
};
pub use train::{evaluate_split, train, TrainConfig, TrainReport};
