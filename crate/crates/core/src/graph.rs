//! Undirected cosine-similarity graph over node embeddings.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingCorpus;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.725;

/// Undirected edge with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub sim: f64,
}

/// Adjacency in compressed form plus the flat edge list.
///
/// Edges are stored once, sorted by `(i, j)`; each node's neighbour list is
/// sorted ascending and carries the index of the connecting edge.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityGraph {
    num_nodes: usize,
    threshold: f64,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    neighbor_edges: Vec<usize>,
}

impl SimilarityGraph {
    /// Validates and indexes an edge list. Endpoint order within an edge is free.
    pub fn from_edges(num_nodes: usize, threshold: f64, edges: Vec<Edge>) -> Result<Self> {
        let mut norm = Vec::with_capacity(edges.len());
        for e in edges {
            if e.i == e.j {
                return Err(Error::Contract(format!("self-loop on node {}", e.i)));
            }
            if e.i >= num_nodes || e.j >= num_nodes {
                return Err(Error::Contract(format!(
                    "edge ({}, {}) out of range for {num_nodes} nodes",
                    e.i, e.j
                )));
            }
            let (i, j) = if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) };
            norm.push(Edge { i, j, sim: e.sim });
        }
        norm.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = norm
            .windows(2)
            .find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j))
        {
            return Err(Error::Contract(format!(
                "duplicate edge ({}, {})",
                w[0].i, w[0].j
            )));
        }

        let mut degree = vec![0usize; num_nodes];
        for e in &norm {
            degree[e.i] += 1;
            degree[e.j] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut adj: Vec<(usize, usize)> = vec![(0, 0); offsets[num_nodes]];
        let mut fill = offsets.clone();
        for (k, e) in norm.iter().enumerate() {
            adj[fill[e.i]] = (e.j, k);
            fill[e.i] += 1;
            adj[fill[e.j]] = (e.i, k);
            fill[e.j] += 1;
        }
        for v in 0..num_nodes {
            adj[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        let (neighbors, neighbor_edges) = adj.into_iter().unzip();
        Ok(SimilarityGraph {
            num_nodes,
            threshold,
            edges: norm,
            offsets,
            neighbors,
            neighbor_edges,
        })
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self::from_edges(num_nodes, f64::INFINITY, Vec::new()).expect("edgeless graph")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Edge indices aligned with [`neighbors`](Self::neighbors).
    pub fn neighbor_edges(&self, v: usize) -> &[usize] {
        &self.neighbor_edges[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.edges
            .binary_search_by(|e| (e.i, e.j).cmp(&(i, j)))
            .ok()
    }

    /// Graph induced on `nodes` (ascending), relabelled to `0..nodes.len()`.
    /// Edge order is preserved.
    pub fn induced(&self, nodes: &[usize]) -> Result<Self> {
        let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let edges = self
            .edges
            .iter()
            .filter_map(|e| {
                Some(Edge {
                    i: *local.get(&e.i)?,
                    j: *local.get(&e.j)?,
                    sim: e.sim,
                })
            })
            .collect();
        Self::from_edges(nodes.len(), self.threshold, edges)
    }

    pub fn write_to(&self, ids: &[&str], mut out: impl Write) -> Result<()> {
        if ids.len() != self.num_nodes {
            return Err(Error::Config(format!(
                "{} ids supplied for a graph of {} nodes",
                ids.len(),
                self.num_nodes
            )));
        }
        let io = |e| Error::io("<graph output>", e);
        let header = GraphHeader {
            num_nodes: self.num_nodes,
            threshold: self.threshold,
        };
        serde_json::to_writer(&mut out, &header)
            .map_err(|e| Error::io("<graph output>", e.into()))?;
        out.write_all(b"\n").map_err(io)?;
        for e in &self.edges {
            let line = EdgeLine {
                i: ids[e.i].to_string(),
                j: ids[e.j].to_string(),
                sim: e.sim,
            };
            serde_json::to_writer(&mut out, &line)
                .map_err(|e| Error::io("<graph output>", e.into()))?;
            out.write_all(b"\n").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn save(&self, ids: &[&str], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(ids, std::io::BufWriter::new(file))
            .map_err(|e| match e {
                Error::Io { source, .. } => Error::io(path, source),
                other => other,
            })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphHeader {
    num_nodes: usize,
    threshold: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeLine {
    i: String,
    j: String,
    sim: f64,
}

/// Reads a graph export and resolves its ids against `corpus`.
pub fn load_graph(path: impl AsRef<Path>, corpus: &EmbeddingCorpus) -> Result<SimilarityGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_graph(BufReader::new(file), path, corpus)
}

pub fn read_graph(
    reader: impl BufRead,
    origin: &Path,
    corpus: &EmbeddingCorpus,
) -> Result<SimilarityGraph> {
    let index: HashMap<&str, usize> = corpus
        .nodes
        .iter()
        .enumerate()
        .map(|(k, n)| (n.id.as_str(), k))
        .collect();
    let mut header: Option<GraphHeader> = None;
    let mut edges = Vec::new();
    let mut missing = BTreeSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            header =
                Some(serde_json::from_str(&line).map_err(|e| Error::json(origin, lineno + 1, e))?);
            continue;
        }
        let el: EdgeLine =
            serde_json::from_str(&line).map_err(|e| Error::json(origin, lineno + 1, e))?;
        match (index.get(el.i.as_str()), index.get(el.j.as_str())) {
            (Some(&i), Some(&j)) => edges.push(Edge { i, j, sim: el.sim }),
            (a, b) => {
                if a.is_none() {
                    missing.insert(el.i);
                }
                if b.is_none() {
                    missing.insert(el.j);
                }
            }
        }
    }
    let header =
        header.ok_or_else(|| Error::Config(format!("{}: empty graph file", origin.display())))?;
    if !missing.is_empty() {
        let list: Vec<_> = missing.into_iter().collect();
        return Err(Error::Config(format!(
            "graph references ids missing from the corpus: {}",
            list.join(", ")
        )));
    }
    if header.num_nodes != corpus.len() {
        return Err(Error::Config(format!(
            "graph has {} nodes but the corpus has {}",
            header.num_nodes,
            corpus.len()
        )));
    }
    SimilarityGraph::from_edges(header.num_nodes, header.threshold, edges)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).fold(0.0, |acc, (a, b)| acc + a * b)
}

fn cosine_with_norms(u: &[f64], v: &[f64], nu: f64, nv: f64) -> f64 {
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Cosine similarity clamped to `[-1, 1]`; zero vectors are rejected.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("cosine_similarity", &[u.len()], &[v.len()]));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Contract(
            "cosine similarity of a zero-norm vector".into(),
        ));
    }
    Ok(cosine_with_norms(u, v, nu, nv))
}

/// Connects every pair with cosine similarity `>= threshold`.
pub fn build_graph(corpus: &EmbeddingCorpus, threshold: f64) -> Result<SimilarityGraph> {
    let vectors: Vec<&[f64]> = corpus
        .nodes
        .iter()
        .map(|n| n.embedding.as_slice())
        .collect();
    build_graph_from_vectors(&vectors, &corpus.ids(), threshold)
}

pub fn build_graph_from_vectors(
    vectors: &[&[f64]],
    ids: &[&str],
    threshold: f64,
) -> Result<SimilarityGraph> {
    if vectors.is_empty() {
        return Err(Error::Corpus("empty corpus".into()));
    }
    if !threshold.is_finite() {
        return Err(Error::Config(format!(
            "threshold must be finite, got {threshold}"
        )));
    }
    let norms: Vec<f64> = vectors.iter().map(|v| norm(v)).collect();
    if let Some(k) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroNorm {
            id: ids.get(k).map_or_else(|| k.to_string(), |s| s.to_string()),
        });
    }
    let mut edges = Vec::new();
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let sim = cosine_with_norms(vectors[i], vectors[j], norms[i], norms[j]);
            if sim >= threshold {
                edges.push(Edge { i, j, sim });
            }
        }
    }
    SimilarityGraph::from_edges(vectors.len(), threshold, edges)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub degree_min: usize,
    pub degree_mean: f64,
    pub degree_max: usize,
    pub isolated: usize,
    pub components: usize,
}

impl std::fmt::Display for GraphStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "nodes       {}", self.num_nodes)?;
        writeln!(f, "edges       {}", self.num_edges)?;
        writeln!(
            f,
            "degree      min {} / mean {:.3} / max {}",
            self.degree_min, self.degree_mean, self.degree_max
        )?;
        writeln!(f, "isolated    {}", self.isolated)?;
        write!(f, "components  {}", self.components)
    }
}

pub fn graph_stats(g: &SimilarityGraph) -> GraphStats {
    let n = g.num_nodes();
    let degrees: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for &u in g.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    GraphStats {
        num_nodes: n,
        num_edges: g.num_edges(),
        degree_min: degrees.iter().copied().min().unwrap_or(0),
        degree_mean: if n == 0 {
            0.0
        } else {
            degrees.iter().sum::<usize>() as f64 / n as f64
        },
        degree_max: degrees.iter().copied().max().unwrap_or(0),
        isolated: degrees.iter().filter(|&&d| d == 0).count(),
        components,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::NodeRecord;
    use proptest::prelude::*;

    fn corpus(vectors: Vec<Vec<f64>>) -> EmbeddingCorpus {
        let f = vectors[0].len();
        let nodes = vectors
            .into_iter()
            .enumerate()
            .map(|(k, embedding)| NodeRecord {
                id: format!("n{k}"),
                label: 0,
                split: None,
                embedding,
                text: None,
            })
            .collect();
        EmbeddingCorpus::new(nodes, f, 1).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn identical_embeddings_give_complete_graph() {
        let g = build_graph(&corpus(vec![vec![0.3, 0.4]; 4]), DEFAULT_THRESHOLD).unwrap();
        assert_eq!(g.num_edges(), 6);
        let st = graph_stats(&g);
        assert_eq!((st.degree_min, st.degree_max, st.components), (3, 3, 1));
    }

    #[test]
    fn three_nodes_with_chosen_similarities() {
        // unit vectors with cos(a,b)=0.9, cos(a,c)=0.5, cos(b,c)=0.73
        let sb = (1.0f64 - 0.81).sqrt();
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.9, sb, 0.0];
        let c = {
            let y = (0.73 - 0.9 * 0.5) / sb;
            let z = (1.0 - 0.25 - y * y).sqrt();
            vec![0.5, y, z]
        };
        let sims = [
            cosine_similarity(&a, &b).unwrap(),
            cosine_similarity(&a, &c).unwrap(),
            cosine_similarity(&b, &c).unwrap(),
        ];
        assert!((sims[0] - 0.9).abs() < 1e-12);
        assert!((sims[1] - 0.5).abs() < 1e-12);
        assert!((sims[2] - 0.73).abs() < 1e-12);
        let g = build_graph(&corpus(vec![a, b, c]), DEFAULT_THRESHOLD).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.edge_index(0, 1), Some(0));
        assert_eq!(g.edge_index(2, 1), Some(1));
        assert_eq!(g.edge_index(0, 2), None);
    }

    #[test]
    fn threshold_is_inclusive() {
        let g = build_graph(&corpus(vec![vec![1.0, 0.0], vec![1.0, 1.0]]), 0.5f64.sqrt()).unwrap();
        let sim = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(g.num_edges(), usize::from(sim >= 0.5f64.sqrt()));
        let g = build_graph(&corpus(vec![vec![1.0, 0.0], vec![1.0, 1.0]]), sim).unwrap();
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn zero_norm_names_node() {
        let err = build_graph(&corpus(vec![vec![1.0, 0.0], vec![0.0, 0.0]]), 0.5).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { ref id } if id == "n1"));
    }

    #[test]
    fn stats_of_edgeless_and_two_triangles() {
        let st = graph_stats(&SimilarityGraph::empty(5));
        assert_eq!((st.num_edges, st.isolated, st.components), (0, 5, 5));

        let tri = |a: usize, b: usize, c: usize| {
            vec![
                Edge {
                    i: a,
                    j: b,
                    sim: 1.0,
                },
                Edge {
                    i: b,
                    j: c,
                    sim: 1.0,
                },
                Edge {
                    i: a,
                    j: c,
                    sim: 1.0,
                },
            ]
        };
        let mut edges = tri(0, 1, 2);
        edges.extend(tri(3, 4, 5));
        let g = SimilarityGraph::from_edges(6, 0.0, edges).unwrap();
        let st = graph_stats(&g);
        assert_eq!((st.num_edges, st.components, st.isolated), (6, 2, 0));
        assert_eq!(st.degree_mean, 2.0);
    }

    #[test]
    fn from_edges_rejects_malformed_lists() {
        let e = |i, j| Edge { i, j, sim: 1.0 };
        assert!(SimilarityGraph::from_edges(3, 0.0, vec![e(1, 1)]).is_err());
        assert!(SimilarityGraph::from_edges(3, 0.0, vec![e(0, 3)]).is_err());
        assert!(SimilarityGraph::from_edges(3, 0.0, vec![e(0, 1), e(1, 0)]).is_err());
    }

    #[test]
    fn export_import_round_trip_and_mismatch() {
        let c = corpus(vec![
            vec![1.0, 0.1],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.1, 1.0],
        ]);
        let g = build_graph(&c, 0.9).unwrap();
        let mut buf = Vec::new();
        g.write_to(&c.ids(), &mut buf).unwrap();
        let back = read_graph(std::io::Cursor::new(&buf), Path::new("mem"), &c).unwrap();
        assert_eq!(back, g);

        let mut other = c.clone();
        other.nodes[0].id = "renamed".into();
        let err = read_graph(std::io::Cursor::new(&buf), Path::new("mem"), &other).unwrap_err();
        assert!(err.to_string().contains("n0"));
    }

    #[test]
    fn induced_subgraph_keeps_edge_order() {
        let e = |i, j| Edge { i, j, sim: 1.0 };
        let g =
            SimilarityGraph::from_edges(5, 0.0, vec![e(0, 1), e(1, 2), e(2, 3), e(3, 4), e(0, 4)])
                .unwrap();
        let sub = g.induced(&[1, 2, 3]).unwrap();
        assert_eq!(sub.num_edges(), 2);
        assert_eq!((sub.edges()[0].i, sub.edges()[0].j), (0, 1));
        assert_eq!((sub.edges()[1].i, sub.edges()[1].j), (1, 2));
    }

    fn vectors() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..5).prop_flat_map(|f| {
            prop::collection::vec(
                prop::collection::vec(-1.0f64..1.0, f)
                    .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3)),
                1..14,
            )
        })
    }

    proptest! {
        #[test]
        fn graph_is_symmetric_sorted_and_monotone(vs in vectors(), t1 in -1.0f64..1.0, dt in 0.0f64..1.0) {
            let c = corpus(vs);
            let lo = build_graph(&c, t1).unwrap();
            let hi = build_graph(&c, t1 + dt).unwrap();
            for v in 0..lo.num_nodes() {
                let nb = lo.neighbors(v);
                prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(!nb.contains(&v));
                for &u in nb {
                    prop_assert!(lo.neighbors(u).contains(&v));
                }
            }
            for e in hi.edges() {
                prop_assert!(lo.edge_index(e.i, e.j).is_some());
            }
        }

        #[test]
        fn node_order_only_relabels(vs in vectors(), t in 0.0f64..1.0) {
            let c = corpus(vs.clone());
            let mut rev = vs;
            rev.reverse();
            let r = corpus(rev);
            let n = c.len();
            let g = build_graph(&c, t).unwrap();
            let h = build_graph(&r, t).unwrap();
            prop_assert_eq!(g.num_edges(), h.num_edges());
            for e in g.edges() {
                prop_assert!(h.edge_index(n - 1 - e.i, n - 1 - e.j).is_some());
            }
        }
    }
}
