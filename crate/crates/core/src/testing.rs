//! Reference implementations used by the test suites.
//!
//! Nothing here shares code with the sparse forward path: the dense model
//! materialises the adjacency matrix, the row-normalised adjacency and the
//! full attention matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{EmbeddingCorpus, NodeRecord, Split};
use crate::diff::Tensor;
use crate::graph::{Edge, SimilarityGraph};
use crate::model::ModelParams;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(t: &Tensor<f64>) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

pub fn mat_t(a: &Mat) -> Mat {
    let c = a.first().map_or(0, Vec::len);
    (0..c).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn mat_add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

fn hcat(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().chain(y).copied().collect())
        .collect()
}

pub fn adjacency(g: &SimilarityGraph) -> Mat {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for e in g.edges() {
        a[e.i][e.j] = 1.0;
        a[e.j][e.i] = 1.0;
    }
    a
}

/// Dense intermediates of the encoder.
pub struct DenseForward {
    pub x1: Mat,
    pub x2: Mat,
    pub x3: Mat,
    pub x4: Mat,
    /// `alpha[i][j]`, zero outside the closed neighbourhood of `i`.
    pub alpha: Mat,
    pub logits: Mat,
    pub probs: Mat,
}

pub fn dense_forward(x: &Mat, g: &SimilarityGraph, p: &ModelParams<f64>) -> DenseForward {
    let n = x.len();
    let a = adjacency(g);
    let norm_a: Mat = a
        .iter()
        .map(|row| {
            let d: f64 = row.iter().sum();
            row.iter()
                .map(|v| if d > 0.0 { v / d } else { 0.0 })
                .collect()
        })
        .collect();

    let w = |t: &Tensor<f64>| to_mat(t);
    let b_in = p.b_in.data().to_vec();
    let mut x1 = mat_mul(x, &mat_t(&w(&p.w_in)));
    for row in &mut x1 {
        row.iter_mut().zip(&b_in).for_each(|(v, b)| *v += b);
    }
    let x2 = mat_add(
        &mat_mul(&x1, &mat_t(&w(&p.w1_mean))),
        &mat_mul(&mat_mul(&norm_a, &x1), &mat_t(&w(&p.w2_mean))),
    );
    let x3 = mat_add(
        &mat_mul(&x1, &mat_t(&w(&p.w1_sum))),
        &mat_mul(&mat_mul(&a, &x1), &mat_t(&w(&p.w2_sum))),
    );
    let x23 = hcat(&x2, &x3);
    let h = mat_mul(&x23, &mat_t(&w(&p.theta)));
    let att = p.attn.data();
    let hd = h[0].len();
    let slope = p.config.leaky_slope;

    let mut alpha = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut scores = vec![f64::NEG_INFINITY; n];
        for j in 0..n {
            if i == j || a[i][j] > 0.0 {
                let s: f64 = (0..hd)
                    .map(|k| att[k] * h[i][k] + att[hd + k] * h[j][k])
                    .sum();
                scores[j] = if s > 0.0 { s } else { slope * s };
            }
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores
            .iter()
            .map(|&s| if s.is_finite() { (s - max).exp() } else { 0.0 })
            .collect();
        let z: f64 = exps.iter().sum();
        for j in 0..n {
            alpha[i][j] = exps[j] / z;
        }
    }
    let x4 = mat_mul(&alpha, &h);
    let xc = hcat(&x1, &x4);
    let mut logits = mat_mul(&xc, &mat_t(&w(&p.w_out)));
    for row in &mut logits {
        row.iter_mut()
            .zip(p.b_out.data())
            .for_each(|(v, b)| *v += b);
    }
    let probs = logits
        .iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        })
        .collect();
    DenseForward {
        x1,
        x2,
        x3,
        x4,
        alpha,
        logits,
        probs,
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + step;
            let up = f(&probe);
            probe[k] = x[k] - step;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Erdős–Rényi graph on `n` nodes with edge probability `p`.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> SimilarityGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push(Edge { i, j, sim: 1.0 });
            }
        }
    }
    SimilarityGraph::from_edges(n, 0.0, edges).expect("valid random graph")
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Random corpus with every node tagged round-robin train/val/test.
pub fn random_corpus(seed: u64, n: usize, f: usize, k: usize) -> EmbeddingCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|i| NodeRecord {
            id: format!("r{i}"),
            label: rng.random_range(0..k),
            split: Some(Split::ALL[i % 3]),
            embedding: (0..f).map(|_| StandardNormal.sample(&mut rng)).collect(),
            text: None,
        })
        .collect();
    EmbeddingCorpus::new(nodes, f, k).unwrap()
}

/// Randomises every parameter (biases included) so no gradient path is trivially zero.
pub fn perturb_params(params: &mut ModelParams<f64>, rng: &mut impl Rng, scale: f64) {
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += scale * z;
        }
    }
}
