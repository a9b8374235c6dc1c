//! File-based round trip through every stage: corpus, graph, training,
//! checkpoint and explanation.

use gnnx_core::diff::Real;
use gnnx_core::synth::{two_clusters, TwoClusterSpec};
use gnnx_core::{
    build_graph, checkpoint_header, evaluate_split, explain_node, load_checkpoint, load_corpus,
    load_graph, render_explanation, train, ExplainerConfig, Format, ModelConfig, ModelParams,
    Split, TrainConfig,
};

fn run_pipeline<T: Real>(precision: &str) {
    let dir = tempfile::tempdir().unwrap();
    let data = two_clusters(&TwoClusterSpec {
        seed: 5,
        num_nodes: 80,
        ..TwoClusterSpec::default()
    })
    .unwrap();

    let corpus_path = dir.path().join("corpus.jsonl");
    data.corpus.save(&corpus_path).unwrap();
    let corpus = load_corpus(&corpus_path).unwrap();
    assert_eq!(corpus, data.corpus);

    let graph_path = dir.path().join("graph.jsonl");
    let built = build_graph(&corpus, 0.725).unwrap();
    built.save(&corpus.ids(), &graph_path).unwrap();
    let graph = load_graph(&graph_path, &corpus).unwrap();
    assert_eq!(graph.edges(), built.edges());
    assert_eq!(graph.threshold(), 0.725);

    let model_cfg = ModelConfig::new(corpus.feature_dim, corpus.num_classes);
    let train_cfg = TrainConfig {
        epochs: 40,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let (params, report) = train::<T>(&corpus, &graph, &model_cfg, &train_cfg).unwrap();
    assert_eq!(report.train_loss.len(), 40);

    let ckpt_path = dir.path().join("checkpoint.jsonl");
    params.save(&ckpt_path).unwrap();
    let header = checkpoint_header(&ckpt_path).unwrap();
    assert_eq!(header.precision, precision);
    assert_eq!(header.config, model_cfg);
    let restored: ModelParams<T> = load_checkpoint(&ckpt_path).unwrap();
    let metrics = evaluate_split(&corpus, &graph, &restored, Split::Test).unwrap();
    assert_eq!(Some(metrics.accuracy), report.test_accuracy);
    assert_eq!(Some(metrics.macro_f1), report.test_macro_f1);

    let target = (0..corpus.len()).find(|&v| graph.degree(v) > 0).unwrap();
    let cfg = ExplainerConfig {
        epochs: 20,
        ..ExplainerConfig::default()
    };
    let expl = explain_node(&corpus, &graph, &restored, &corpus.nodes[target].id, &cfg).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&render_explanation(&expl, Format::Json)).unwrap();
    assert_eq!(
        json["node"].as_str(),
        Some(corpus.nodes[target].id.as_str())
    );
    assert_eq!(
        json["features"].as_array().unwrap().len(),
        corpus.feature_dim
    );
    for e in json["edges"].as_array().unwrap() {
        let m = e["mask"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&m));
    }
    let dot = render_explanation(&expl, Format::Dot);
    assert!(dot.trim_start().starts_with("graph") || dot.trim_start().starts_with("digraph"));
    assert!(dot.trim_end().ends_with('}'));
}

#[test]
fn pipeline_f64() {
    run_pipeline::<f64>("f64");
}

#[test]
fn pipeline_f32() {
    run_pipeline::<f32>("f32");
}
