//! Synthetic benchmarks with known structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{assign_splits, EmbeddingCorpus, NodeRecord, Split, SplitSpec};
use crate::error::Result;
use crate::graph::{build_graph, Edge, SimilarityGraph, DEFAULT_THRESHOLD};

/// Two Gaussian clusters with different spreads around nearby centres.
///
/// Class 0 is tight and class 1 diffuse, so the similarity graph is dense
/// inside class 0 and sparse inside class 1 while the per-node features
/// overlap. Train and val labels are flipped with probability
/// `label_noise`; test labels are the clean cluster identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoClusterSpec {
    pub num_nodes: usize,
    pub feature_dim: usize,
    pub separation: f64,
    pub tight_std: f64,
    pub wide_std: f64,
    pub label_noise: f64,
    /// Overall embedding length; cosine similarities do not depend on it.
    pub scale: f64,
    pub seed: u64,
}

impl Default for TwoClusterSpec {
    fn default() -> Self {
        TwoClusterSpec {
            num_nodes: 200,
            feature_dim: 16,
            separation: 0.3,
            tight_std: 0.1,
            wide_std: 0.6,
            label_noise: 0.1,
            scale: 0.01,
            seed: 0,
        }
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, f: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..f).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub struct TwoClusterData {
    pub corpus: EmbeddingCorpus,
    /// Cluster of every node, before label noise.
    pub clusters: Vec<usize>,
}

pub fn two_clusters(spec: &TwoClusterSpec) -> Result<TwoClusterData> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let f = spec.feature_dim;
    let centre = unit_gaussian(&mut rng, f);
    let mut dir = unit_gaussian(&mut rng, f);
    let proj: f64 = dir.iter().zip(&centre).map(|(a, b)| a * b).sum();
    dir.iter_mut()
        .zip(&centre)
        .for_each(|(d, c)| *d -= proj * c);
    let dn = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|d| *d /= dn);

    let mut clusters = Vec::with_capacity(spec.num_nodes);
    let mut nodes = Vec::with_capacity(spec.num_nodes);
    for k in 0..spec.num_nodes {
        let cluster = usize::from(rng.random_bool(0.5));
        let std = if cluster == 0 {
            spec.tight_std
        } else {
            spec.wide_std
        };
        let shift = cluster as f64 * spec.separation;
        let embedding = (0..f)
            .map(|d| {
                let z: f64 = StandardNormal.sample(&mut rng);
                spec.scale * (centre[d] + shift * dir[d] + std * z)
            })
            .collect();
        clusters.push(cluster);
        nodes.push(NodeRecord {
            id: format!("c{k:03}"),
            label: cluster,
            split: None,
            embedding,
            text: None,
        });
    }
    let corpus = EmbeddingCorpus::new(nodes, f, 2)?;
    let mut corpus = assign_splits(
        &corpus,
        &SplitSpec {
            seed: spec.seed,
            ..SplitSpec::default()
        },
    )?;
    for node in &mut corpus.nodes {
        let noisy = node.split != Some(Split::Test);
        if noisy && rng.random_bool(spec.label_noise) {
            node.label = 1 - node.label;
        }
    }
    Ok(TwoClusterData { corpus, clusters })
}

/// Builds the two-cluster corpus together with its default-threshold graph.
pub fn two_cluster_problem(spec: &TwoClusterSpec) -> Result<(TwoClusterData, SimilarityGraph)> {
    let data = two_clusters(spec)?;
    let graph = build_graph(&data.corpus, DEFAULT_THRESHOLD)?;
    Ok((data, graph))
}

/// Ego units around target nodes, half of them carrying a planted motif.
///
/// Every unit has the same shape: a target `t` with two arms `t - a - b`,
/// and a decoy leaf `d` hanging off each `a`. In a positive unit the arm
/// nodes `a` and `b` carry the motif feature pattern and the four arm edges
/// are the planted motif; in a negative unit they look like fillers. Targets
/// and decoys always look like fillers, so degree carries no label
/// information and a target can only be classified through its
/// neighbourhood. Labels: positive targets and motif nodes are class 1,
/// everything else class 0. Units are chained through their last decoys.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotifSpec {
    pub units: usize,
    pub feature_dim: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for MotifSpec {
    fn default() -> Self {
        MotifSpec {
            units: 120,
            feature_dim: 8,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

pub struct MotifBenchmark {
    pub corpus: EmbeddingCorpus,
    pub graph: SimilarityGraph,
    /// Per edge: whether it belongs to a planted motif.
    pub planted: Vec<bool>,
    /// Targets of the positive units.
    pub positive_targets: Vec<usize>,
    pub negative_targets: Vec<usize>,
}

pub fn planted_motif(spec: &MotifSpec) -> Result<MotifBenchmark> {
    const FILLER: usize = 0;
    const MOTIF: usize = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let f = spec.feature_dim.max(2);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut planted_pairs = Vec::new();
    let mut positive_targets = Vec::new();
    let mut negative_targets = Vec::new();
    let mut unit_tails = Vec::new();

    let push = |rng: &mut ChaCha8Rng,
                nodes: &mut Vec<NodeRecord>,
                kind: usize,
                label: usize,
                name: String| {
        let embedding = (0..f)
            .map(|d| {
                let z: f64 = StandardNormal.sample(rng);
                f64::from(u8::from(d == kind)) + spec.noise_std * z
            })
            .collect();
        nodes.push(NodeRecord {
            id: name,
            label,
            split: None,
            embedding,
            text: None,
        });
        nodes.len() - 1
    };

    for u in 0..spec.units {
        let positive = u % 2 == 0;
        let t = push(
            &mut rng,
            &mut nodes,
            FILLER,
            usize::from(positive),
            format!("u{u}-t"),
        );
        if positive {
            positive_targets.push(t);
        } else {
            negative_targets.push(t);
        }
        let (kind, label) = if positive { (MOTIF, 1) } else { (FILLER, 0) };
        let mut decoy = t;
        for arm in 0..2 {
            let a = push(&mut rng, &mut nodes, kind, label, format!("u{u}-a{arm}"));
            let b = push(&mut rng, &mut nodes, kind, label, format!("u{u}-b{arm}"));
            decoy = push(&mut rng, &mut nodes, FILLER, 0, format!("u{u}-d{arm}"));
            edges.push(Edge {
                i: t,
                j: a,
                sim: 1.0,
            });
            edges.push(Edge {
                i: a,
                j: b,
                sim: 1.0,
            });
            edges.push(Edge {
                i: a,
                j: decoy,
                sim: 1.0,
            });
            if positive {
                planted_pairs.push((t, a));
                planted_pairs.push((a, b));
            }
        }
        unit_tails.push(decoy);
    }
    for w in unit_tails.windows(2) {
        edges.push(Edge {
            i: w[0],
            j: w[1],
            sim: 1.0,
        });
    }

    let corpus = EmbeddingCorpus::new(nodes, f, 2)?;
    let corpus = assign_splits(
        &corpus,
        &SplitSpec {
            seed: spec.seed,
            ..SplitSpec::default()
        },
    )?;
    let graph = SimilarityGraph::from_edges(corpus.len(), 1.0, edges)?;
    let mut planted = vec![false; graph.num_edges()];
    for (a, b) in planted_pairs {
        planted[graph.edge_index(a, b).expect("planted edge exists")] = true;
    }
    Ok(MotifBenchmark {
        corpus,
        graph,
        planted,
        positive_targets,
        negative_targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_clusters_are_seeded() {
        let spec = TwoClusterSpec::default();
        let a = two_clusters(&spec).unwrap();
        let b = two_clusters(&spec).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.corpus.len(), 200);
        assert_eq!(a.corpus.feature_dim, 16);
        for (node, &c) in a.corpus.nodes.iter().zip(&a.clusters) {
            if node.split == Some(Split::Test) {
                assert_eq!(node.label, c);
            }
        }
        let flipped = a
            .corpus
            .nodes
            .iter()
            .zip(&a.clusters)
            .filter(|(n, &c)| n.label != c)
            .count();
        assert!(flipped > 0 && flipped < 40, "{flipped}");
    }

    #[test]
    fn motif_units_have_expected_shape() {
        let b = planted_motif(&MotifSpec {
            units: 40,
            ..MotifSpec::default()
        })
        .unwrap();
        assert_eq!(b.corpus.len(), 40 * 7);
        assert_eq!(b.planted.iter().filter(|&&p| p).count(), 20 * 4);
        assert_eq!(b.graph.num_edges(), 40 * 6 + 39);
        assert_eq!(
            (b.positive_targets.len(), b.negative_targets.len()),
            (20, 20)
        );
        for &t in b.positive_targets.iter().chain(&b.negative_targets) {
            assert_eq!(b.graph.degree(t), 2);
        }
        for &t in &b.positive_targets {
            let planted_here = b
                .graph
                .neighbor_edges(t)
                .iter()
                .filter(|&&e| b.planted[e])
                .count();
            assert_eq!(planted_here, 2);
        }
    }
}
