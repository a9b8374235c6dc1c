//! WebAssembly bindings for the static demo page in `www/`.
//!
//! [`DemoState`] holds a synthetic two-cluster corpus, its similarity graph
//! and (after training) a model. Every operation returns a JSON string so the
//! page needs no bindings beyond `JSON.parse`. [`Demo`] is the thin
//! `wasm-bindgen` wrapper; the state itself is plain Rust and tested natively.

use gnnx_core::synth::{two_clusters, TwoClusterData, TwoClusterSpec};
use gnnx_core::{
    build_graph, explain_node, graph_stats, train, Error, ExplainerConfig, ModelConfig,
    ModelParams, Result, SimilarityGraph, TrainConfig,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct NodeView<'a> {
    id: &'a str,
    x: f64,
    y: f64,
    label: usize,
    cluster: usize,
    split: &'static str,
}

#[derive(Serialize)]
struct GraphView {
    threshold: f64,
    num_edges: usize,
    degree_mean: f64,
    degree_max: usize,
    isolated: usize,
    components: usize,
    edges: Vec<[usize; 2]>,
}

#[derive(Serialize)]
struct TrainView {
    best_epoch: usize,
    train_loss: Vec<f64>,
    val_accuracy: Vec<f64>,
    test_accuracy: Option<f64>,
    test_macro_f1: Option<f64>,
    /// Same model and seed trained without any edges.
    ablated_test_accuracy: Option<f64>,
}

#[derive(Serialize)]
struct ExplainView {
    node: usize,
    predicted_class: usize,
    edges: Vec<EdgeMask>,
    top_edges: Vec<usize>,
    feature_mask: Vec<f64>,
}

#[derive(Serialize)]
struct EdgeMask {
    edge: usize,
    i: usize,
    j: usize,
    mask: f64,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("view serialises")
}

/// Demo data, graph and model.
pub struct DemoState {
    data: TwoClusterData,
    graph: SimilarityGraph,
    params: Option<ModelParams<f64>>,
    positions: Vec<[f64; 2]>,
    seed: u64,
}

impl DemoState {
    pub fn new(seed: u64, num_nodes: usize) -> Result<Self> {
        let spec = TwoClusterSpec {
            seed,
            num_nodes,
            ..TwoClusterSpec::default()
        };
        let data = two_clusters(&spec)?;
        let graph = build_graph(&data.corpus, gnnx_core::DEFAULT_THRESHOLD)?;
        let positions = layout(
            &data
                .corpus
                .nodes
                .iter()
                .map(|n| n.embedding.clone())
                .collect::<Vec<_>>(),
        );
        Ok(DemoState {
            data,
            graph,
            params: None,
            positions,
            seed,
        })
    }

    pub fn nodes_json(&self) -> String {
        let nodes: Vec<NodeView> = self
            .data
            .corpus
            .nodes
            .iter()
            .zip(&self.positions)
            .zip(&self.data.clusters)
            .map(|((n, p), &cluster)| NodeView {
                id: &n.id,
                x: p[0],
                y: p[1],
                label: n.label,
                cluster,
                split: n.split.map_or("none", |s| s.name()),
            })
            .collect();
        to_json(&nodes)
    }

    /// Rebuilds the graph; a previously trained model is discarded.
    pub fn set_threshold(&mut self, threshold: f64) -> Result<String> {
        self.graph = build_graph(&self.data.corpus, threshold)?;
        self.params = None;
        Ok(self.graph_json())
    }

    pub fn graph_json(&self) -> String {
        let s = graph_stats(&self.graph);
        to_json(&GraphView {
            threshold: self.graph.threshold(),
            num_edges: s.num_edges,
            degree_mean: s.degree_mean,
            degree_max: s.degree_max,
            isolated: s.isolated,
            components: s.components,
            edges: self.graph.edges().iter().map(|e| [e.i, e.j]).collect(),
        })
    }

    pub fn train(&mut self, epochs: usize, learning_rate: f64) -> Result<String> {
        let corpus = &self.data.corpus;
        let cfg = ModelConfig {
            init_seed: self.seed,
            ..ModelConfig::new(corpus.feature_dim, corpus.num_classes)
        };
        let tcfg = TrainConfig {
            epochs,
            learning_rate,
            ..TrainConfig::default()
        };
        let (params, report) = train::<f64>(corpus, &self.graph, &cfg, &tcfg)?;
        let empty = SimilarityGraph::empty(corpus.len());
        let (_, ablated) = train::<f64>(corpus, &empty, &cfg, &tcfg)?;
        self.params = Some(params);
        Ok(to_json(&TrainView {
            best_epoch: report.best_epoch,
            train_loss: report.train_loss,
            val_accuracy: report.val_accuracy,
            test_accuracy: report.test_accuracy,
            test_macro_f1: report.test_macro_f1,
            ablated_test_accuracy: ablated.test_accuracy,
        }))
    }

    pub fn explain(&self, node: usize) -> Result<String> {
        let params = self
            .params
            .as_ref()
            .ok_or_else(|| Error::Config("train a model before explaining".into()))?;
        let id = self
            .data
            .corpus
            .nodes
            .get(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))?
            .id
            .clone();
        let cfg = ExplainerConfig {
            seed: self.seed,
            ..ExplainerConfig::default()
        };
        let expl = explain_node(&self.data.corpus, &self.graph, params, &id, &cfg)?;
        Ok(to_json(&ExplainView {
            node,
            predicted_class: expl.predicted_class,
            edges: expl
                .edges
                .iter()
                .map(|e| EdgeMask {
                    edge: e.edge,
                    i: e.i,
                    j: e.j,
                    mask: e.mask,
                })
                .collect(),
            top_edges: expl.subgraph.edges.iter().map(|e| e.edge).collect(),
            feature_mask: expl.feature_mask,
        }))
    }
}

/// 2-D coordinates in `[0, 1]²` from the two leading principal directions of
/// the length-normalised embeddings, found by power iteration.
pub fn layout(vectors: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let n = vectors.len();
    let f = vectors.first().map_or(0, Vec::len);
    if n == 0 || f == 0 {
        return vec![[0.5, 0.5]; n];
    }
    let unit: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            v.iter().map(|x| x / norm).collect()
        })
        .collect();
    let mean: Vec<f64> = (0..f)
        .map(|d| unit.iter().map(|v| v[d]).sum::<f64>() / n as f64)
        .collect();
    let centred: Vec<Vec<f64>> = unit
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();

    let mut axes: Vec<Vec<f64>> = Vec::new();
    for k in 0..2.min(f) {
        let mut w: Vec<f64> = (0..f)
            .map(|d| if d == k { 1.0 } else { 0.5 / (1 + d) as f64 })
            .collect();
        for _ in 0..100 {
            let scores: Vec<f64> = centred
                .iter()
                .map(|v| v.iter().zip(&w).map(|(a, b)| a * b).sum())
                .collect();
            let mut next = vec![0.0; f];
            for (v, s) in centred.iter().zip(&scores) {
                next.iter_mut().zip(v).for_each(|(o, x)| *o += s * x);
            }
            for a in &axes {
                let p: f64 = next.iter().zip(a).map(|(x, y)| x * y).sum();
                next.iter_mut().zip(a).for_each(|(o, y)| *o -= p * y);
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                break;
            }
            w = next.iter().map(|x| x / norm).collect();
        }
        axes.push(w);
    }
    let coords: Vec<Vec<f64>> = centred
        .iter()
        .map(|v| {
            axes.iter()
                .map(|a| v.iter().zip(a).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    let scaled = |k: usize| -> Vec<f64> {
        let col: Vec<f64> = coords
            .iter()
            .map(|c| c.get(k).copied().unwrap_or(0.0))
            .collect();
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
                (l.min(x), h.max(x))
            });
        col.iter()
            .map(|&x| if hi > lo { (x - lo) / (hi - lo) } else { 0.5 })
            .collect()
    };
    let (xs, ys) = (scaled(0), scaled(1));
    xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect()
}

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, num_nodes: usize) -> std::result::Result<Demo, JsError> {
        DemoState::new(u64::from(seed), num_nodes)
            .map(|state| Demo { state })
            .map_err(js_err)
    }

    /// `[{id, x, y, label, cluster, split}]`
    pub fn nodes(&self) -> String {
        self.state.nodes_json()
    }

    /// `{threshold, num_edges, degree_mean, degree_max, isolated, components, edges}`
    pub fn graph(&self) -> String {
        self.state.graph_json()
    }

    #[wasm_bindgen(js_name = setThreshold)]
    pub fn set_threshold(&mut self, threshold: f64) -> std::result::Result<String, JsError> {
        self.state.set_threshold(threshold).map_err(js_err)
    }

    pub fn train(
        &mut self,
        epochs: usize,
        learning_rate: f64,
    ) -> std::result::Result<String, JsError> {
        self.state.train(epochs, learning_rate).map_err(js_err)
    }

    pub fn explain(&self, node: usize) -> std::result::Result<String, JsError> {
        self.state.explain(node).map_err(js_err)
    }
}
