//! Hybrid graph encoder.
//!
//! ```text
//! x1  = x W_inᵀ + b_in
//! x2  = x1 W1_meanᵀ + mean_{j∈N(i)}(x1_j) W2_meanᵀ
//! x3  = x1 W1_sumᵀ  + sum_{j∈N(i)}(x1_j)  W2_sumᵀ
//! x23 = [x2 ‖ x3]
//! x4  = Σ_{j∈N(i)∪{i}} α_ij Θ x23_j,   α_i· = softmax_j LeakyReLU(aᵀ[Θx23_i ‖ Θx23_j])
//! p   = softmax([x1 ‖ x4] W_outᵀ + b_out)
//! ```
//!
//! One layer of each kind, no extra nonlinearities.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Real, Tape, Tensor, Var, DEFAULT_LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;

pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_FEATURE_DIM: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub leaky_slope: f64,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            feature_dim,
            num_classes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config(format!(
                "feature_dim, hidden_dim and num_classes must be >= 1 (got {}, {}, {})",
                self.feature_dim, self.hidden_dim, self.num_classes
            )));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!(
                "leaky_slope must lie in (0, 1), got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: DEFAULT_FEATURE_DIM,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            num_classes: 2,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            init_seed: 0,
        }
    }
}

/// All trainable weights. Matrices are stored `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f64> {
    pub config: ModelConfig,
    pub w_in: Tensor<T>,
    pub b_in: Tensor<T>,
    pub w1_mean: Tensor<T>,
    pub w2_mean: Tensor<T>,
    pub w1_sum: Tensor<T>,
    pub w2_sum: Tensor<T>,
    pub theta: Tensor<T>,
    pub attn: Tensor<T>,
    pub w_out: Tensor<T>,
    pub b_out: Tensor<T>,
}

pub const PARAM_NAMES: [&str; 10] = [
    "w_in", "b_in", "w1_mean", "w2_mean", "w1_sum", "w2_sum", "theta", "attn", "w_out", "b_out",
];

impl<T: Real> ModelParams<T> {
    /// Expected shapes, in [`PARAM_NAMES`] order.
    pub fn shapes(cfg: &ModelConfig) -> [Vec<usize>; 10] {
        let (f, h, k) = (cfg.feature_dim, cfg.hidden_dim, cfg.num_classes);
        [
            vec![h, f],
            vec![h],
            vec![h, h],
            vec![h, h],
            vec![h, h],
            vec![h, h],
            vec![h, 2 * h],
            vec![2 * h, 1],
            vec![k, 2 * h],
            vec![k],
        ]
    }

    pub fn tensors(&self) -> [&Tensor<T>; 10] {
        [
            &self.w_in,
            &self.b_in,
            &self.w1_mean,
            &self.w2_mean,
            &self.w1_sum,
            &self.w2_sum,
            &self.theta,
            &self.attn,
            &self.w_out,
            &self.b_out,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 10] {
        [
            &mut self.w_in,
            &mut self.b_in,
            &mut self.w1_mean,
            &mut self.w2_mean,
            &mut self.w1_sum,
            &mut self.w2_sum,
            &mut self.theta,
            &mut self.attn,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    /// Assembles params from tensors in [`PARAM_NAMES`] order, checking shapes.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = Self::shapes(&config);
        if tensors.len() != shapes.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((t, want), name) in tensors.iter().zip(&shapes).zip(PARAM_NAMES) {
            if t.shape() != want.as_slice() {
                return Err(Error::Config(format!(
                    "parameter {name} has shape {:?}, expected {want:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Config(format!(
                    "parameter {name} has non-finite entries"
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap().with_requires_grad(false);
        Ok(ModelParams {
            config,
            w_in: next(),
            b_in: next(),
            w1_mean: next(),
            w2_mean: next(),
            w1_sum: next(),
            w2_sum: next(),
            theta: next(),
            attn: next(),
            w_out: next(),
            b_out: next(),
        })
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let tensors = self.tensors().iter().map(|t| t.cast::<U>()).collect();
        ModelParams::from_tensors(self.config, tensors).expect("same shapes")
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Pushes every tensor onto `tape`, trainable or frozen.
    pub fn record(&self, tape: &mut Tape<T>, trainable: bool) -> ParamVars {
        let mut put = |t: &Tensor<T>| tape.leaf(t.clone().with_requires_grad(trainable));
        ParamVars {
            w_in: put(&self.w_in),
            b_in: put(&self.b_in),
            w1_mean: put(&self.w1_mean),
            w2_mean: put(&self.w2_mean),
            w1_sum: put(&self.w1_sum),
            w2_sum: put(&self.w2_sum),
            theta: put(&self.theta),
            attn: put(&self.attn),
            w_out: put(&self.w_out),
            b_out: put(&self.b_out),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Checkpoint: a header line with the config, then one line per tensor.
    /// Values are written as exact `f64`, so reading back is bit-exact.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        let header = CheckpointHeader {
            config: self.config,
            precision: precision_name::<T>().to_string(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (name, t) in PARAM_NAMES.iter().zip(self.tensors()) {
            let entry = CheckpointTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.to_f64_vec(),
            };
            serde_json::to_writer(&mut out, &entry)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

fn precision_name<T: Real>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

/// First line of a checkpoint file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    /// `"f32"` or `"f64"`: the type the parameters were trained in.
    pub precision: String,
}

/// Reads only the header of a checkpoint.
pub fn checkpoint_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    BufReader::new(file)
        .read_line(&mut line)
        .map_err(|e| Error::io(path, e))?;
    if line.trim().is_empty() {
        return Err(Error::Config(format!(
            "{}: empty checkpoint",
            path.display()
        )));
    }
    serde_json::from_str(&line).map_err(|e| Error::json(path, 1, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file), path)
}

pub fn read_checkpoint<T: Real>(reader: impl BufRead, origin: &Path) -> Result<ModelParams<T>> {
    let mut lines = reader
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (n, first) = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty checkpoint", origin.display())))?;
    let first = first.map_err(|e| Error::io(origin, e))?;
    let header: CheckpointHeader =
        serde_json::from_str(&first).map_err(|e| Error::json(origin, n + 1, e))?;
    let mut tensors = Vec::new();
    for (k, (n, line)) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let entry: CheckpointTensor =
            serde_json::from_str(&line).map_err(|e| Error::json(origin, n + 1, e))?;
        match PARAM_NAMES.get(k) {
            Some(&want) if want == entry.name => {}
            _ => {
                return Err(Error::Config(format!(
                    "{}: unexpected tensor {:?} at position {k}",
                    origin.display(),
                    entry.name
                )))
            }
        }
        let data = entry.data.into_iter().map(T::from_f64).collect();
        tensors.push(Tensor::new(entry.shape, data)?);
    }
    ModelParams::from_tensors(header.config, tensors)
}

/// Tape handles for every parameter, in the same layout as [`ModelParams`].
#[derive(Clone, Copy, Debug)]
pub struct ParamVars {
    pub w_in: Var,
    pub b_in: Var,
    pub w1_mean: Var,
    pub w2_mean: Var,
    pub w1_sum: Var,
    pub w2_sum: Var,
    pub theta: Var,
    pub attn: Var,
    pub w_out: Var,
    pub b_out: Var,
}

impl ParamVars {
    pub fn all(&self) -> [Var; 10] {
        [
            self.w_in,
            self.b_in,
            self.w1_mean,
            self.w2_mean,
            self.w1_sum,
            self.w2_sum,
            self.theta,
            self.attn,
            self.w_out,
            self.b_out,
        ]
    }
}

/// Glorot-uniform weights, zero biases, reproducible from `cfg.init_seed`.
pub fn init_params<T: Real>(cfg: &ModelConfig) -> Result<ModelParams<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let tensors = ModelParams::<T>::shapes(cfg)
        .into_iter()
        .zip(PARAM_NAMES)
        .map(|(shape, name)| {
            if name.starts_with("b_") {
                return Tensor::zeros(&shape);
            }
            let (fan_out, fan_in) = (shape[0], shape[1]);
            let bound = glorot_bound(fan_in, fan_out);
            let data = (0..fan_out * fan_in)
                .map(|_| loop {
                    let v = rng.random_range(-bound..bound);
                    if v != -bound {
                        break T::from_f64(v);
                    }
                })
                .collect();
            Tensor::new(shape, data).expect("shape from config")
        })
        .collect();
    ModelParams::from_tensors(*cfg, tensors)
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Message routing derived from a graph, shared by every forward pass.
///
/// Neighbour messages are ordered by destination then source, so each
/// node's aggregate is summed over neighbours in ascending id order.
#[derive(Clone, Debug)]
pub struct GraphPlan {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// Undirected edge carrying each neighbour message.
    pub edge: Arc<[usize]>,
    /// `1 / deg(i)`, zero for isolated nodes; `[N, 1]`.
    pub inv_degree: Vec<f64>,
    /// Closed-neighbourhood pairs for attention, self pair included.
    pub att_src: Arc<[usize]>,
    pub att_dst: Arc<[usize]>,
    /// Edge per attention pair; the self pair maps to `num_edges`.
    pub att_edge: Arc<[usize]>,
}

impl GraphPlan {
    pub fn new(g: &SimilarityGraph) -> Self {
        let n = g.num_nodes();
        let m = g.num_edges();
        let (mut src, mut dst, mut edge) = (Vec::new(), Vec::new(), Vec::new());
        let (mut a_src, mut a_dst, mut a_edge) = (Vec::new(), Vec::new(), Vec::new());
        let mut inv_degree = Vec::with_capacity(n);
        for i in 0..n {
            let nb = g.neighbors(i);
            let ne = g.neighbor_edges(i);
            inv_degree.push(if nb.is_empty() {
                0.0
            } else {
                1.0 / nb.len() as f64
            });
            let mut self_done = false;
            for (&j, &e) in nb.iter().zip(ne) {
                src.push(j);
                dst.push(i);
                edge.push(e);
                if !self_done && j > i {
                    a_src.push(i);
                    a_dst.push(i);
                    a_edge.push(m);
                    self_done = true;
                }
                a_src.push(j);
                a_dst.push(i);
                a_edge.push(e);
            }
            if !self_done {
                a_src.push(i);
                a_dst.push(i);
                a_edge.push(m);
            }
        }
        GraphPlan {
            num_nodes: n,
            num_edges: m,
            src: src.into(),
            dst: dst.into(),
            edge: edge.into(),
            inv_degree,
            att_src: a_src.into(),
            att_dst: a_dst.into(),
            att_edge: a_edge.into(),
        }
    }
}

/// Soft masks applied during a forward pass.
///
/// `edge` holds one value per undirected edge (`[M, 1]`) and scales every
/// message through that edge in both directions; `feature` (`[1, F]`) scales
/// input feature columns.
#[derive(Clone, Copy, Debug, Default)]
pub struct MaskVars {
    pub edge: Option<Var>,
    pub feature: Option<Var>,
}

/// Every intermediate of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub x1: Var,
    pub x2: Var,
    pub x3: Var,
    pub x23: Var,
    /// Attention coefficient per closed-neighbourhood pair, `[P, 1]`.
    pub alpha: Var,
    pub x4: Var,
    pub logits: Var,
    pub probs: Var,
}

fn linear<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let wt = tape.transpose(w);
    let y = tape.matmul(x, wt)?;
    match b {
        Some(b) => tape.add_row(y, b),
        None => Ok(y),
    }
}

/// `sum_j m_ij x1_j` over neighbours, with `m_ij` the edge mask (1 when unmasked).
pub fn neighbor_sum<T: Real>(
    tape: &mut Tape<T>,
    x1: Var,
    plan: &GraphPlan,
    masks: &MaskVars,
) -> Result<Var> {
    let weights = match masks.edge {
        Some(em) => Some(tape.gather_rows(em, plan.edge.clone())?),
        None => None,
    };
    tape.propagate(
        x1,
        weights,
        plan.src.clone(),
        plan.dst.clone(),
        plan.num_nodes,
    )
}

fn mean_from_sum<T: Real>(
    tape: &mut Tape<T>,
    x1: Var,
    summed: Var,
    plan: &GraphPlan,
    p: &ParamVars,
) -> Result<Var> {
    let inv = tape.constant(Tensor::column(
        plan.inv_degree.iter().map(|&v| T::from_f64(v)).collect(),
    ));
    let mean = tape.scale_rows(summed, inv)?;
    let own = linear(tape, x1, p.w1_mean, None)?;
    let nb = linear(tape, mean, p.w2_mean, None)?;
    tape.add(own, nb)
}

fn sum_from_sum<T: Real>(tape: &mut Tape<T>, x1: Var, summed: Var, p: &ParamVars) -> Result<Var> {
    let own = linear(tape, x1, p.w1_sum, None)?;
    let nb = linear(tape, summed, p.w2_sum, None)?;
    tape.add(own, nb)
}

pub fn linear_in<T: Real>(tape: &mut Tape<T>, x: Var, p: &ParamVars) -> Result<Var> {
    let (f_in, f) = (tape.value(p.w_in).cols(), tape.value(x).cols());
    if f_in != f {
        return Err(Error::shape(
            "linear_in",
            tape.value(x).shape(),
            tape.value(p.w_in).shape(),
        ));
    }
    linear(tape, x, p.w_in, Some(p.b_in))
}

pub fn mean_agg_layer<T: Real>(
    tape: &mut Tape<T>,
    x1: Var,
    plan: &GraphPlan,
    p: &ParamVars,
    masks: &MaskVars,
) -> Result<Var> {
    let summed = neighbor_sum(tape, x1, plan, masks)?;
    mean_from_sum(tape, x1, summed, plan, p)
}

pub fn sum_agg_layer<T: Real>(
    tape: &mut Tape<T>,
    x1: Var,
    plan: &GraphPlan,
    p: &ParamVars,
    masks: &MaskVars,
) -> Result<Var> {
    let summed = neighbor_sum(tape, x1, plan, masks)?;
    sum_from_sum(tape, x1, summed, p)
}

pub fn concat_23<T: Real>(tape: &mut Tape<T>, x2: Var, x3: Var) -> Result<Var> {
    tape.concat_cols(x2, x3)
}

/// Single-head attention over closed neighbourhoods. Returns `(x4, alpha)`.
pub fn attention_layer<T: Real>(
    tape: &mut Tape<T>,
    x23: Var,
    plan: &GraphPlan,
    p: &ParamVars,
    slope: T,
    masks: &MaskVars,
) -> Result<(Var, Var)> {
    let h = linear(tape, x23, p.theta, None)?;
    // a·[H_i ‖ H_j] splits into a per-node destination term and source term
    let width = tape.value(h).cols();
    let a_dst = tape.slice_rows(p.attn, 0, width)?;
    let a_src = tape.slice_rows(p.attn, width, width)?;
    let s_dst = tape.matmul(h, a_dst)?;
    let s_src = tape.matmul(h, a_src)?;
    let e_dst = tape.gather_rows(s_dst, plan.att_dst.clone())?;
    let e_src = tape.gather_rows(s_src, plan.att_src.clone())?;
    let raw = tape.add(e_dst, e_src)?;
    let scores = tape.leaky_relu(raw, slope);
    let alpha = tape.segment_softmax(scores, plan.att_dst.clone())?;
    let weights = match masks.edge {
        Some(em) => {
            let one = tape.constant(Tensor::ones(&[1, 1]));
            let ext = tape.concat_rows(em, one)?;
            let w = tape.gather_rows(ext, plan.att_edge.clone())?;
            tape.mul(alpha, w)?
        }
        None => alpha,
    };
    let x4 = tape.propagate(
        h,
        Some(weights),
        plan.att_src.clone(),
        plan.att_dst.clone(),
        plan.num_nodes,
    )?;
    Ok((x4, alpha))
}

/// Returns `(logits, probs)`.
pub fn head<T: Real>(tape: &mut Tape<T>, x1: Var, x4: Var, p: &ParamVars) -> Result<(Var, Var)> {
    let xc = tape.concat_cols(x1, x4)?;
    let logits = linear(tape, xc, p.w_out, Some(p.b_out))?;
    let probs = tape.softmax(logits);
    Ok((logits, probs))
}

/// Records the full encoder on `tape`.
pub fn forward_tape<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    plan: &GraphPlan,
    p: &ParamVars,
    slope: T,
    masks: &MaskVars,
) -> Result<ForwardVars> {
    if tape.value(x).rows() != plan.num_nodes {
        return Err(Error::Contract(format!(
            "feature matrix has {} rows but the graph has {} nodes",
            tape.value(x).rows(),
            plan.num_nodes
        )));
    }
    let x_in = match masks.feature {
        Some(fm) => tape.scale_cols(x, fm)?,
        None => x,
    };
    let x1 = linear_in(tape, x_in, p)?;
    let summed = neighbor_sum(tape, x1, plan, masks)?;
    let x2 = mean_from_sum(tape, x1, summed, plan, p)?;
    let x3 = sum_from_sum(tape, x1, summed, p)?;
    let x23 = concat_23(tape, x2, x3)?;
    let (x4, alpha) = attention_layer(tape, x23, plan, p, slope, masks)?;
    let (logits, probs) = head(tape, x1, x4, p)?;
    if cfg!(debug_assertions) {
        let tol = 1e-6f64.max(T::epsilon().as_f64() * plan.att_src.len().max(16) as f64);
        let err = normalization_error(tape.value(probs), tape.value(alpha), &plan.att_dst);
        // NaN passes here so that divergence is reported by the caller
        assert!(
            !(err > tol),
            "probabilities or attention sets drift from 1 by {err}"
        );
    }
    Ok(ForwardVars {
        x1,
        x2,
        x3,
        x23,
        alpha,
        x4,
        logits,
        probs,
    })
}

/// Largest `|sum - 1|` over the rows of `probs` and the per-destination
/// attention sets in `alpha`.
pub fn normalization_error<T: Real>(
    probs: &Tensor<T>,
    alpha: &Tensor<T>,
    att_dst: &[usize],
) -> f64 {
    let k = probs.cols();
    let row_err = probs
        .data()
        .chunks(k.max(1))
        .map(|row| (row.iter().map(|v| v.as_f64()).sum::<f64>() - 1.0).abs());
    let n_seg = att_dst.iter().max().map_or(0, |&m| m + 1);
    let mut sums = vec![0.0f64; n_seg];
    for (&d, a) in att_dst.iter().zip(alpha.data()) {
        sums[d] += a.as_f64();
    }
    row_err
        .chain(sums.iter().map(|s| (s - 1.0).abs()))
        .fold(0.0, |m, e| {
            if e.is_nan() || m.is_nan() {
                f64::NAN
            } else {
                m.max(e)
            }
        })
}

/// Materialised intermediates of [`forward_full`].
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput<T = f64> {
    pub x1: Tensor<T>,
    pub x2: Tensor<T>,
    pub x3: Tensor<T>,
    pub x23: Tensor<T>,
    pub alpha: Tensor<T>,
    pub x4: Tensor<T>,
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
}

pub fn forward_full<T: Real>(
    x: &Tensor<T>,
    plan: &GraphPlan,
    params: &ModelParams<T>,
) -> Result<ForwardOutput<T>> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let pv = params.record(&mut tape, false);
    let slope = T::from_f64(params.config.leaky_slope);
    let f = forward_tape(&mut tape, xv, plan, &pv, slope, &MaskVars::default())?;
    let get = |v: Var| tape.value(v).clone();
    Ok(ForwardOutput {
        x1: get(f.x1),
        x2: get(f.x2),
        x3: get(f.x3),
        x23: get(f.x23),
        alpha: get(f.alpha),
        x4: get(f.x4),
        logits: get(f.logits),
        probs: get(f.probs),
    })
}

/// Class probabilities `N × K`.
pub fn forward<T: Real>(
    x: &Tensor<T>,
    g: &SimilarityGraph,
    params: &ModelParams<T>,
) -> Result<Tensor<T>> {
    Ok(forward_full(x, &GraphPlan::new(g), params)?.probs)
}
