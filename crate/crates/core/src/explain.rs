//! Post-hoc explanations of single-node predictions.
//!
//! Edge and feature masks are sigmoids of free logits. The optimiser keeps
//! the model frozen and minimises
//!
//! ```text
//! -ln p_masked[v, ŷ]
//!   + edge_size · Σ_e σ(m_e)   + edge_entropy · Σ_e H(σ(m_e))
//!   + feat_size · mean_f σ(m_f) + feat_entropy · mean_f H(σ(m_f))
//! ```
//!
//! where `ŷ` is the model's own unmasked prediction for `v` and `H` the
//! binary entropy.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingCorpus;
use crate::diff::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::model::{forward_full, forward_tape, GraphPlan, MaskVars, ModelParams};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::train::PROB_FLOOR;

/// Receptive field of the encoder: one aggregation hop plus one attention hop.
pub const RECEPTIVE_HOPS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub edge_size_coeff: f64,
    pub edge_entropy_coeff: f64,
    pub feature_size_coeff: f64,
    pub feature_entropy_coeff: f64,
    pub top_k_edges: usize,
    /// Standard deviation of the initial mask logits.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            epochs: 100,
            learning_rate: 0.01,
            edge_size_coeff: 0.005,
            edge_entropy_coeff: 1.0,
            feature_size_coeff: 0.1,
            feature_entropy_coeff: 0.1,
            top_k_edges: 10,
            init_std: 0.1,
            seed: 0,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            self.edge_size_coeff,
            self.edge_entropy_coeff,
            self.feature_size_coeff,
            self.feature_entropy_coeff,
        ];
        if coeffs.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::Config(format!(
                "explainer coefficients must be finite and >= 0, got {coeffs:?}"
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("explainer epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.init_std >= 0.0) {
            return Err(Error::Config(
                "explainer learning_rate must be > 0 and init_std >= 0".into(),
            ));
        }
        if self.top_k_edges == 0 {
            return Err(Error::Config("top_k_edges must be at least 1".into()));
        }
        Ok(())
    }
}

/// Nodes and edges within a hop radius of a target node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    pub target: usize,
    /// Ascending node indices, target included.
    pub nodes: Vec<usize>,
    /// Ascending edge indices with both endpoints in `nodes`.
    pub edges: Vec<usize>,
}

pub fn computational_subgraph(
    g: &SimilarityGraph,
    node: usize,
    hops: usize,
) -> Result<Neighborhood> {
    if node >= g.num_nodes() {
        return Err(Error::UnknownNode(node.to_string()));
    }
    let mut dist = BTreeMap::new();
    dist.insert(node, 0usize);
    let mut queue = VecDeque::from([node]);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d == hops {
            continue;
        }
        for &u in g.neighbors(v) {
            if let std::collections::btree_map::Entry::Vacant(slot) = dist.entry(u) {
                slot.insert(d + 1);
                queue.push_back(u);
            }
        }
    }
    let nodes: Vec<usize> = dist.into_keys().collect();
    let members: BTreeSet<usize> = nodes.iter().copied().collect();
    let edges = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| members.contains(&e.i) && members.contains(&e.j))
        .map(|(k, _)| k)
        .collect();
    Ok(Neighborhood {
        target: node,
        nodes,
        edges,
    })
}

/// Where the mask logits live during optimisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskScope {
    /// Optimise on the graph induced by the computational subgraph.
    Computational,
    /// Optimise one logit per edge of the whole graph.
    FullGraph,
}

/// Raw result of mask optimisation for one node.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskFit {
    pub predicted_class: usize,
    /// Mask per edge of the neighbourhood, aligned with `Neighborhood::edges`.
    pub edge_mask: Vec<f64>,
    pub feature_mask: Vec<f64>,
    /// Objective before the first update, then after each update.
    pub objective: Vec<f64>,
}

impl MaskFit {
    pub fn initial_objective(&self) -> f64 {
        self.objective[0]
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective.last().expect("non-empty trace")
    }
}

struct Objective {
    total: Var,
}

#[allow(clippy::too_many_arguments)]
fn record_objective<T: Real>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
    plan: &GraphPlan,
    params: &ModelParams<T>,
    target: usize,
    class: usize,
    edge_logits: Var,
    feat_logits: Var,
    cfg: &ExplainerConfig,
) -> Result<Objective> {
    let xv = tape.constant(x.clone());
    let pv = params.record(tape, false);
    let edge_mask = tape.sigmoid(edge_logits);
    let feat_mask = tape.sigmoid(feat_logits);
    let masks = MaskVars {
        edge: Some(edge_mask),
        feature: Some(feat_mask),
    };
    let slope = T::from_f64(params.config.leaky_slope);
    let out = forward_tape(tape, xv, plan, &pv, slope, &masks)?;
    let row = tape.gather_rows(out.probs, Arc::from([target].as_slice()))?;
    let p = tape.pick_cols(row, Arc::from([class].as_slice()))?;
    let logp = tape.ln(p, T::from_f64(PROB_FLOOR));
    let logp = tape.sum(logp);
    let pred = tape.affine(logp, -T::one(), T::zero());

    let c = |v: f64| T::from_f64(v);
    let edge_sum = tape.sum(edge_mask);
    let edge_size = tape.affine(edge_sum, c(cfg.edge_size_coeff), T::zero());
    let edge_ent = binary_entropy(tape, edge_mask);
    let edge_ent = tape.sum(edge_ent);
    let edge_ent = tape.affine(edge_ent, c(cfg.edge_entropy_coeff), T::zero());
    let feat_mean = tape.mean(feat_mask);
    let feat_size = tape.affine(feat_mean, c(cfg.feature_size_coeff), T::zero());
    let feat_ent = binary_entropy(tape, feat_mask);
    let feat_ent = tape.mean(feat_ent);
    let feat_ent = tape.affine(feat_ent, c(cfg.feature_entropy_coeff), T::zero());

    let mut total = tape.add(pred, edge_size)?;
    total = tape.add(total, edge_ent)?;
    total = tape.add(total, feat_size)?;
    total = tape.add(total, feat_ent)?;
    Ok(Objective { total })
}

/// Elementwise `-s ln s - (1 - s) ln(1 - s)`.
pub fn binary_entropy<T: Real>(tape: &mut Tape<T>, s: Var) -> Var {
    let floor = T::from_f64(PROB_FLOOR);
    let ln_s = tape.ln(s, floor);
    let one_minus = tape.affine(s, -T::one(), T::one());
    let ln_one_minus = tape.ln(one_minus, floor);
    let a = tape.mul(s, ln_s).expect("same shape");
    let b = tape.mul(one_minus, ln_one_minus).expect("same shape");
    let sum = tape.add(a, b).expect("same shape");
    tape.affine(sum, -T::one(), T::zero())
}

/// Learns edge and feature masks for `target`.
///
/// Initial logits are drawn feature-first, then neighbourhood edges in
/// order, then (full-graph scope only) the remaining edges, so both scopes
/// start the neighbourhood from identical values.
pub fn optimize_masks<T: Real>(
    x: &Tensor<T>,
    g: &SimilarityGraph,
    params: &ModelParams<T>,
    hood: &Neighborhood,
    cfg: &ExplainerConfig,
    scope: MaskScope,
) -> Result<MaskFit> {
    cfg.validate()?;
    let f = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
    let feat_init = draw(f);
    let hood_init = draw(hood.edges.len());

    let (x_run, g_run, target, edge_init, hood_pos): (
        Tensor<T>,
        SimilarityGraph,
        usize,
        Vec<f64>,
        Vec<usize>,
    ) = match scope {
        MaskScope::Computational => {
            let rows: Vec<Vec<T>> = hood.nodes.iter().map(|&v| x.row(v).to_vec()).collect();
            let sub = g.induced(&hood.nodes)?;
            let target = hood
                .nodes
                .binary_search(&hood.target)
                .expect("target in hood");
            let pos = (0..hood.edges.len()).collect();
            (Tensor::from_rows(&rows)?, sub, target, hood_init, pos)
        }
        MaskScope::FullGraph => {
            let m = g.num_edges();
            let rest: Vec<usize> = (0..m)
                .filter(|e| hood.edges.binary_search(e).is_err())
                .collect();
            let rest_init = draw(rest.len());
            let mut init = vec![0.0; m];
            for (&e, &v) in hood.edges.iter().zip(&hood_init) {
                init[e] = v;
            }
            for (&e, &v) in rest.iter().zip(&rest_init) {
                init[e] = v;
            }
            (x.clone(), g.clone(), hood.target, init, hood.edges.clone())
        }
    };

    let plan = GraphPlan::new(&g_run);
    let unmasked = forward_full(&x_run, &plan, params)?.probs;
    let class = unmasked.argmax_rows()[target];

    let to_t = |v: &[f64]| v.iter().map(|&z| T::from_f64(z)).collect::<Vec<T>>();
    let mut edge_logits = Tensor::column(to_t(&edge_init));
    let mut feat_logits = Tensor::matrix(1, f, to_t(&feat_init))?;
    let mut state = AdamState::new(&[&edge_logits, &feat_logits]);
    let adam = AdamConfig::default();
    let mut trace = Vec::with_capacity(cfg.epochs + 1);

    for epoch in 0..=cfg.epochs {
        let mut tape = Tape::new();
        let ev = tape.param(edge_logits.clone());
        let fv = tape.param(feat_logits.clone());
        let obj = record_objective(&mut tape, &x_run, &plan, params, target, class, ev, fv, cfg)?;
        let value = tape.value(obj.total).item().as_f64();
        if !value.is_finite() {
            return Err(Error::Divergence { epoch, value });
        }
        trace.push(value);
        if epoch == cfg.epochs {
            break;
        }
        let grads = tape.backward(obj.total)?;
        let ge = grads.get_or_zeros(ev, &edge_logits);
        let gf = grads.get_or_zeros(fv, &feat_logits);
        adam_step(
            &mut [&mut edge_logits, &mut feat_logits],
            &[&ge, &gf],
            &mut state,
            cfg.learning_rate,
            adam,
        )?;
    }

    let sig = |t: &Tensor<T>| -> Vec<f64> {
        t.data()
            .iter()
            .map(|&z| crate::diff::sigmoid(z).as_f64())
            .collect()
    };
    let all_edges = sig(&edge_logits);
    Ok(MaskFit {
        predicted_class: class,
        edge_mask: hood_pos.iter().map(|&k| all_edges[k]).collect(),
        feature_mask: sig(&feat_logits),
        objective: trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaskedEdge {
    pub edge: usize,
    pub i: usize,
    pub j: usize,
    pub mask: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Subgraph {
    pub target: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<MaskedEdge>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeLabel {
    pub id: String,
    pub text: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub node: usize,
    pub node_id: String,
    pub predicted_class: usize,
    /// Every edge of the computational subgraph with its learned mask.
    pub edges: Vec<MaskedEdge>,
    pub feature_mask: Vec<f64>,
    pub subgraph: Subgraph,
    /// Id and text of every node in the computational subgraph.
    pub labels: BTreeMap<usize, NodeLabel>,
    pub initial_objective: f64,
    pub final_objective: f64,
}

pub fn explain_node<T: Real>(
    corpus: &EmbeddingCorpus,
    g: &SimilarityGraph,
    params: &ModelParams<T>,
    node_id: &str,
    cfg: &ExplainerConfig,
) -> Result<Explanation> {
    let node = corpus
        .index_of(node_id)
        .ok_or_else(|| Error::UnknownNode(node_id.to_string()))?;
    if g.num_nodes() != corpus.len() {
        return Err(Error::Config(format!(
            "graph has {} nodes but the corpus has {}",
            g.num_nodes(),
            corpus.len()
        )));
    }
    if params.config.feature_dim != corpus.feature_dim
        || params.config.num_classes != corpus.num_classes
    {
        return Err(Error::Config(format!(
            "checkpoint expects F={} K={}, corpus has F={} K={}",
            params.config.feature_dim,
            params.config.num_classes,
            corpus.feature_dim,
            corpus.num_classes
        )));
    }
    let hood = computational_subgraph(g, node, RECEPTIVE_HOPS)?;
    let fit = optimize_masks(
        &corpus.features(),
        g,
        params,
        &hood,
        cfg,
        MaskScope::Computational,
    )?;
    let edges: Vec<MaskedEdge> = hood
        .edges
        .iter()
        .zip(&fit.edge_mask)
        .map(|(&k, &mask)| {
            let e = g.edges()[k];
            MaskedEdge {
                edge: k,
                i: e.i,
                j: e.j,
                mask,
            }
        })
        .collect();
    let labels = hood
        .nodes
        .iter()
        .map(|&v| {
            let rec = &corpus.nodes[v];
            (
                v,
                NodeLabel {
                    id: rec.id.clone(),
                    text: rec.text.clone(),
                },
            )
        })
        .collect();
    let mut expl = Explanation {
        node,
        node_id: node_id.to_string(),
        predicted_class: fit.predicted_class,
        edges,
        feature_mask: fit.feature_mask.clone(),
        subgraph: Subgraph {
            target: node,
            nodes: vec![node],
            edges: Vec::new(),
        },
        labels,
        initial_objective: fit.initial_objective(),
        final_objective: fit.final_objective(),
    };
    expl.subgraph = extract_subgraph(&expl, cfg.top_k_edges);
    Ok(expl)
}

/// The `k` highest-mask edges (ties to the lower edge index) and their endpoints.
pub fn extract_subgraph(expl: &Explanation, k: usize) -> Subgraph {
    let mut ranked = expl.edges.clone();
    ranked.sort_by(|a, b| b.mask.total_cmp(&a.mask).then(a.edge.cmp(&b.edge)));
    ranked.truncate(k);
    let mut nodes: BTreeSet<usize> = BTreeSet::from([expl.node]);
    for e in &ranked {
        nodes.insert(e.i);
        nodes.insert(e.j);
    }
    Subgraph {
        target: expl.node,
        nodes: nodes.into_iter().collect(),
        edges: ranked,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Dot,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Format::Dot),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!(
                "unknown explanation format {other:?} (expected dot or json)"
            ))),
        }
    }
}

#[derive(Serialize)]
struct JsonEdge<'a> {
    i: &'a str,
    j: &'a str,
    mask: f64,
}

#[derive(Serialize)]
struct JsonExplanation<'a> {
    node: &'a str,
    predicted_class: usize,
    edges: Vec<JsonEdge<'a>>,
    features: &'a [f64],
}

pub fn render_explanation(expl: &Explanation, format: Format) -> String {
    match format {
        Format::Dot => render_dot(expl),
        Format::Json => render_json(expl),
    }
}

fn id_of(expl: &Explanation, v: usize) -> String {
    expl.labels
        .get(&v)
        .map_or_else(|| v.to_string(), |l| l.id.clone())
}

fn render_json(expl: &Explanation) -> String {
    let ids: BTreeMap<usize, String> = expl
        .subgraph
        .nodes
        .iter()
        .map(|&v| (v, id_of(expl, v)))
        .collect();
    let doc = JsonExplanation {
        node: &expl.node_id,
        predicted_class: expl.predicted_class,
        edges: expl
            .subgraph
            .edges
            .iter()
            .map(|e| JsonEdge {
                i: &ids[&e.i],
                j: &ids[&e.j],
                mask: e.mask,
            })
            .collect(),
        features: &expl.feature_mask,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("explanation serialises");
    s.push('\n');
    s
}

fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' | '\r' | '\t' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

const SNIPPET_CHARS: usize = 40;

fn snippet(text: &str) -> String {
    let mut s: String = text.chars().take(SNIPPET_CHARS).collect();
    if text.chars().count() > SNIPPET_CHARS {
        s.push_str("...");
    }
    s
}

fn render_dot(expl: &Explanation) -> String {
    let mut out = String::new();
    writeln!(out, "graph explanation {{").unwrap();
    writeln!(
        out,
        "  label=\"node {} predicted class {}\";",
        dot_escape(&expl.node_id),
        expl.predicted_class
    )
    .unwrap();
    for &v in &expl.subgraph.nodes {
        let id = id_of(expl, v);
        let mut label = dot_escape(&id);
        if let Some(text) = expl.labels.get(&v).and_then(|l| l.text.as_deref()) {
            label.push_str("\\n");
            label.push_str(&dot_escape(&snippet(text)));
        }
        let style = if v == expl.node {
            ", shape=doublecircle"
        } else {
            ""
        };
        writeln!(out, "  \"{}\" [label=\"{label}\"{style}];", dot_escape(&id)).unwrap();
    }
    for e in &expl.subgraph.edges {
        writeln!(
            out,
            "  \"{}\" -- \"{}\" [label=\"{:.3}\"];",
            dot_escape(&id_of(expl, e.i)),
            dot_escape(&id_of(expl, e.j)),
            e.mask
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}
