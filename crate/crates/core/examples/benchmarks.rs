//! Runs the two synthetic benchmarks for one seed.
//!
//! ```text
//! cargo run --release --example benchmarks -- [seed]
//! ```

use std::time::Instant;

use gnnx_core::explain::{computational_subgraph, optimize_masks, MaskScope, RECEPTIVE_HOPS};
use gnnx_core::metrics::roc_auc;
use gnnx_core::synth::{planted_motif, two_cluster_problem, MotifSpec, TwoClusterSpec};
use gnnx_core::{graph_stats, train, ExplainerConfig, ModelConfig, SimilarityGraph, TrainConfig};

fn main() -> gnnx_core::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);

    let t0 = Instant::now();
    let (data, graph) = two_cluster_problem(&TwoClusterSpec {
        seed,
        ..Default::default()
    })?;
    println!("two clusters\n{}", graph_stats(&graph));
    let cfg = ModelConfig {
        init_seed: seed,
        ..ModelConfig::new(data.corpus.feature_dim, 2)
    };
    let (_, with) = train::<f64>(&data.corpus, &graph, &cfg, &TrainConfig::default())?;
    let empty = SimilarityGraph::empty(data.corpus.len());
    let (_, without) = train::<f64>(&data.corpus, &empty, &cfg, &TrainConfig::default())?;
    println!(
        "test accuracy with edges {:.3}, without {:.3} ({:.1?})",
        with.test_accuracy.unwrap_or(f64::NAN),
        without.test_accuracy.unwrap_or(f64::NAN),
        t0.elapsed()
    );

    let t0 = Instant::now();
    let bench = planted_motif(&MotifSpec {
        seed,
        ..Default::default()
    })?;
    let mcfg = ModelConfig {
        init_seed: seed,
        hidden_dim: 16,
        ..ModelConfig::new(bench.corpus.feature_dim, 2)
    };
    let tcfg = TrainConfig {
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let (params, report) = train::<f64>(&bench.corpus, &bench.graph, &mcfg, &tcfg)?;
    println!(
        "motif model test accuracy {:.3}",
        report.test_accuracy.unwrap_or(f64::NAN)
    );
    let x = bench.corpus.features::<f64>();
    let mut aucs = Vec::new();
    for &t in bench.positive_targets.iter().take(20) {
        let hood = computational_subgraph(&bench.graph, t, RECEPTIVE_HOPS)?;
        let fit = optimize_masks(
            &x,
            &bench.graph,
            &params,
            &hood,
            &ExplainerConfig::default(),
            MaskScope::Computational,
        )?;
        let planted: Vec<bool> = hood.edges.iter().map(|&e| bench.planted[e]).collect();
        aucs.extend(roc_auc(&fit.edge_mask, &planted));
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    println!(
        "explainer mean AUC {mean:.3} over {} targets ({:.1?})",
        aucs.len(),
        t0.elapsed()
    );
    Ok(())
}
