use std::sync::Arc;

use super::tensor::{matmul_raw, transpose_raw, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    ScaleCols(Var, Var),
    Affine(Var, T, T),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    Ln(Var, T),
    SoftmaxRows(Var),
    SegmentSoftmax(Var, Arc<[usize]>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    Sum(Var),
    Mean(Var),
    PickCols(Var, Arc<[usize]>),
    SliceRows(Var, usize),
    Propagate {
        a: Var,
        weights: Option<Var>,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    /// True when a `requires_grad` leaf is upstream of this node.
    tracked: bool,
}

/// Append-only record of executed operations.
///
/// Every op appends its output after its inputs, so the node order is a
/// topological order and backward is a single reverse sweep.
#[derive(Clone, Debug, Default)]
pub struct Tape<T: Real = f64> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` was unreachable.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf; it receives a gradient iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let tracked = tensor.requires_grad();
        self.push(tensor, Op::Leaf, tracked)
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims();
        let (k2, n) = self.value(b).dims();
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), tracked))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.value(a).dims();
        let out = transpose_raw(self.value(a).data(), r, c);
        let tracked = self.tracked(a);
        self.push(
            Tensor::matrix(c, r, out).expect("transpose shape"),
            Op::Transpose(a),
            tracked,
        )
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(name, va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(va.reshaped_like(data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::Add(a, b), tracked))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::Mul(a, b), tracked))
    }

    /// `a[r×c] + bias` where `bias` holds `c` entries, added to every row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims();
        if self.value(bias).numel() != c {
            return Err(Error::shape("add_row", self.shape(a), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let mut data = self.value(a).data().to_vec();
        for i in 0..r {
            for (x, &bv) in data[i * c..(i + 1) * c].iter_mut().zip(b) {
                *x = *x + bv;
            }
        }
        let out = self.value(a).reshaped_like(data);
        let tracked = self.tracked(a) || self.tracked(bias);
        Ok(self.push(out, Op::AddRow(a, bias), tracked))
    }

    /// Multiplies row `i` of `a` by `weights[i]`.
    pub fn scale_rows(&mut self, a: Var, weights: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims();
        if self.value(weights).numel() != r {
            return Err(Error::shape(
                "scale_rows",
                self.shape(a),
                self.shape(weights),
            ));
        }
        let w = self.value(weights).data();
        let mut data = self.value(a).data().to_vec();
        for i in 0..r {
            for x in &mut data[i * c..(i + 1) * c] {
                *x = *x * w[i];
            }
        }
        let out = self.value(a).reshaped_like(data);
        let tracked = self.tracked(a) || self.tracked(weights);
        Ok(self.push(out, Op::ScaleRows(a, weights), tracked))
    }

    /// Multiplies column `j` of `a` by `weights[j]`.
    pub fn scale_cols(&mut self, a: Var, weights: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims();
        if self.value(weights).numel() != c {
            return Err(Error::shape(
                "scale_cols",
                self.shape(a),
                self.shape(weights),
            ));
        }
        let w = self.value(weights).data();
        let mut data = self.value(a).data().to_vec();
        for i in 0..r {
            for (x, &wv) in data[i * c..(i + 1) * c].iter_mut().zip(w) {
                *x = *x * wv;
            }
        }
        let out = self.value(a).reshaped_like(data);
        let tracked = self.tracked(a) || self.tracked(weights);
        Ok(self.push(out, Op::ScaleCols(a, weights), tracked))
    }

    /// Elementwise `scale * x + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        let tracked = self.tracked(a);
        self.push(out, Op::Affine(a, scale, shift), tracked)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let out = self.value(a).map(|x| leaky(x, slope));
        let tracked = self.tracked(a);
        self.push(out, Op::LeakyRelu(a, slope), tracked)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let tracked = self.tracked(a);
        self.push(out, Op::Sigmoid(a), tracked)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn ln(&mut self, a: Var, floor: T) -> Var {
        let out = self.value(a).map(|x| x.max(floor).ln());
        let tracked = self.tracked(a);
        self.push(out, Op::Ln(a, floor), tracked)
    }

    /// Softmax over the last axis, one distribution per row.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.value(a).dims();
        let src = self.value(a).data();
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            softmax_into(&src[i * c..(i + 1) * c], &mut data[i * c..(i + 1) * c]);
        }
        let out = self.value(a).reshaped_like(data);
        let tracked = self.tracked(a);
        self.push(out, Op::SoftmaxRows(a), tracked)
    }

    /// Softmax of the flattened entries of `a`, normalised within each segment.
    ///
    /// `segments[k]` is the segment id of entry `k`.
    pub fn segment_softmax(&mut self, a: Var, segments: Arc<[usize]>) -> Result<Var> {
        let src = self.value(a).data();
        if src.len() != segments.len() {
            return Err(Error::shape(
                "segment_softmax",
                self.shape(a),
                &[segments.len()],
            ));
        }
        let n_seg = segments.iter().max().map_or(0, |&m| m + 1);
        let mut max = vec![T::neg_infinity(); n_seg];
        for (&s, &x) in segments.iter().zip(src) {
            max[s] = max[s].max(x);
        }
        let mut denom = vec![T::zero(); n_seg];
        let mut data: Vec<T> = segments
            .iter()
            .zip(src)
            .map(|(&s, &x)| {
                let e = (x - max[s]).exp();
                denom[s] = denom[s] + e;
                e
            })
            .collect();
        for (x, &s) in data.iter_mut().zip(segments.iter()) {
            *x = *x / denom[s];
        }
        let out = self.value(a).reshaped_like(data);
        let tracked = self.tracked(a);
        Ok(self.push(out, Op::SegmentSoftmax(a, segments), tracked))
    }

    /// Output row `k` is row `index[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let (r, c) = self.value(a).dims();
        if let Some(&bad) = index.iter().find(|&&i| i >= r) {
            return Err(Error::Contract(format!(
                "gather_rows index {bad} out of range for {r} rows"
            )));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let out = Tensor::matrix(index.len(), c, data)?;
        let tracked = self.tracked(a);
        Ok(self.push(out, Op::GatherRows(a, index), tracked))
    }

    /// Sums row `k` of `a` into output row `index[k]`, for an output of `rows` rows.
    ///
    /// Accumulation runs in ascending `k`.
    pub fn scatter_add_rows(&mut self, a: Var, index: Arc<[usize]>, rows: usize) -> Result<Var> {
        let (r, c) = self.value(a).dims();
        if r != index.len() {
            return Err(Error::shape(
                "scatter_add_rows",
                self.shape(a),
                &[index.len()],
            ));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::Contract(format!(
                "scatter_add_rows index {bad} out of range for {rows} rows"
            )));
        }
        let src = self.value(a).data();
        let mut data = vec![T::zero(); rows * c];
        for (k, &dst) in index.iter().enumerate() {
            for (o, &x) in data[dst * c..(dst + 1) * c]
                .iter_mut()
                .zip(&src[k * c..(k + 1) * c])
            {
                *o = *o + x;
            }
        }
        let out = Tensor::matrix(rows, c, data)?;
        let tracked = self.tracked(a);
        Ok(self.push(out, Op::ScatterAddRows(a, index), tracked))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.value(a).dims();
        let (rb, cb) = self.value(b).dims();
        if ra != rb {
            return Err(Error::shape("concat_cols", self.shape(a), self.shape(b)));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(&da[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&db[i * cb..(i + 1) * cb]);
        }
        let out = Tensor::matrix(ra, ca + cb, data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::ConcatCols(a, b), tracked))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.value(a).dims();
        let (rb, cb) = self.value(b).dims();
        if ca != cb {
            return Err(Error::shape("concat_rows", self.shape(a), self.shape(b)));
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let out = Tensor::matrix(ra + rb, ca, data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::ConcatRows(a, b), tracked))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self
            .value(a)
            .data()
            .iter()
            .fold(T::zero(), |acc, &x| acc + x);
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(s), Op::Sum(a), tracked)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().fold(T::zero(), |acc, &x| acc + x);
        let n = T::from_f64(v.numel() as f64);
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(s / n), Op::Mean(a), tracked)
    }

    /// Column vector of `a[i, cols[i]]`.
    pub fn pick_cols(&mut self, a: Var, cols: Arc<[usize]>) -> Result<Var> {
        let (r, c) = self.value(a).dims();
        if cols.len() != r {
            return Err(Error::shape("pick_cols", self.shape(a), &[cols.len()]));
        }
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(Error::Contract(format!(
                "pick_cols column {bad} out of range for {c} columns"
            )));
        }
        let v = self.value(a);
        let data = cols.iter().enumerate().map(|(i, &j)| v.get(i, j)).collect();
        let tracked = self.tracked(a);
        Ok(self.push(Tensor::column(data), Op::PickCols(a, cols), tracked))
    }

    /// Rows `start..start + len` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(a).dims();
        if start + len > r {
            return Err(Error::Contract(format!(
                "slice_rows {start}..{} out of range for {r} rows",
                start + len
            )));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::matrix(len, c, data)?;
        let tracked = self.tracked(a);
        Ok(self.push(out, Op::SliceRows(a, start), tracked))
    }

    /// Sparse message passing: output row `dst[k]` accumulates
    /// `weights[k] * a[src[k]]`, in ascending `k`.
    ///
    /// Equivalent to `scatter_add_rows(scale_rows(gather_rows(a, src), weights), dst)`
    /// without materialising the per-message rows. `weights` is `[P, 1]` when given.
    pub fn propagate(
        &mut self,
        a: Var,
        weights: Option<Var>,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
        rows: usize,
    ) -> Result<Var> {
        let (r, c) = self.value(a).dims();
        if src.len() != dst.len() {
            return Err(Error::shape("propagate", &[src.len()], &[dst.len()]));
        }
        if let Some(w) = weights {
            if self.value(w).numel() != src.len() {
                return Err(Error::shape("propagate", self.shape(w), &[src.len(), 1]));
            }
        }
        if let Some(&bad) = src.iter().find(|&&i| i >= r) {
            return Err(Error::Contract(format!(
                "propagate source {bad} out of range for {r} rows"
            )));
        }
        if let Some(&bad) = dst.iter().find(|&&i| i >= rows) {
            return Err(Error::Contract(format!(
                "propagate destination {bad} out of range for {rows} rows"
            )));
        }
        let x = self.value(a).data();
        let wv = weights.map(|w| self.value(w).data());
        let mut data = vec![T::zero(); rows * c];
        for (k, (&s, &d)) in src.iter().zip(dst.iter()).enumerate() {
            let out = &mut data[d * c..(d + 1) * c];
            let row = &x[s * c..(s + 1) * c];
            match wv {
                Some(w) => {
                    let wk = w[k];
                    for (o, &v) in out.iter_mut().zip(row) {
                        *o = *o + v * wk;
                    }
                }
                None => {
                    for (o, &v) in out.iter_mut().zip(row) {
                        *o = *o + v;
                    }
                }
            }
        }
        let out = Tensor::matrix(rows, c, data)?;
        let tracked = self.tracked(a) || weights.is_some_and(|w| self.tracked(w));
        Ok(self.push(
            out,
            Op::Propagate {
                a,
                weights,
                src,
                dst,
            },
            tracked,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(lv.reshaped_like(vec![T::one()]));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop(
        &self,
        op: &Op<T>,
        out: &Tensor<T>,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let gd = g.data();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k) = va.dims();
                let n = vb.cols();
                if self.tracked(*a) {
                    let bt = transpose_raw(vb.data(), k, n);
                    let da = matmul_raw(gd, &bt, m, n, k);
                    self.accumulate(grads, *a, da);
                }
                if self.tracked(*b) {
                    let at = transpose_raw(va.data(), m, k);
                    let db = matmul_raw(&at, gd, k, m, n);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = out.dims();
                self.accumulate(grads, *a, transpose_raw(gd, r, c));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.to_vec());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.tracked(*a) {
                    self.accumulate(grads, *a, gd.iter().zip(vb).map(|(&g, &y)| g * y).collect());
                }
                if self.tracked(*b) {
                    self.accumulate(grads, *b, gd.iter().zip(va).map(|(&g, &x)| g * x).collect());
                }
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, gd.to_vec());
                if self.tracked(*bias) {
                    let (r, c) = out.dims();
                    let mut db = vec![T::zero(); c];
                    for i in 0..r {
                        for (d, &x) in db.iter_mut().zip(&gd[i * c..(i + 1) * c]) {
                            *d = *d + x;
                        }
                    }
                    self.accumulate(grads, *bias, db);
                }
            }
            Op::ScaleRows(a, w) => {
                let (r, c) = out.dims();
                let (va, vw) = (self.value(*a).data(), self.value(*w).data());
                if self.tracked(*a) {
                    let mut da = gd.to_vec();
                    for i in 0..r {
                        for x in &mut da[i * c..(i + 1) * c] {
                            *x = *x * vw[i];
                        }
                    }
                    self.accumulate(grads, *a, da);
                }
                if self.tracked(*w) {
                    let dw = (0..r)
                        .map(|i| {
                            (0..c).fold(T::zero(), |acc, j| acc + gd[i * c + j] * va[i * c + j])
                        })
                        .collect();
                    self.accumulate(grads, *w, dw);
                }
            }
            Op::ScaleCols(a, w) => {
                let (r, c) = out.dims();
                let (va, vw) = (self.value(*a).data(), self.value(*w).data());
                if self.tracked(*a) {
                    let mut da = gd.to_vec();
                    for i in 0..r {
                        for (x, &wv) in da[i * c..(i + 1) * c].iter_mut().zip(vw) {
                            *x = *x * wv;
                        }
                    }
                    self.accumulate(grads, *a, da);
                }
                if self.tracked(*w) {
                    let mut dw = vec![T::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            dw[j] = dw[j] + gd[i * c + j] * va[i * c + j];
                        }
                    }
                    self.accumulate(grads, *w, dw);
                }
            }
            Op::Affine(a, scale, _) => {
                self.accumulate(grads, *a, gd.iter().map(|&g| g * *scale).collect());
            }
            Op::LeakyRelu(a, slope) => {
                let va = self.value(*a).data();
                let da = gd
                    .iter()
                    .zip(va)
                    .map(|(&g, &x)| if x > T::zero() { g } else { g * *slope })
                    .collect();
                self.accumulate(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let da = gd
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * y * (T::one() - y))
                    .collect();
                self.accumulate(grads, *a, da);
            }
            Op::Ln(a, floor) => {
                let va = self.value(*a).data();
                let da = gd
                    .iter()
                    .zip(va)
                    .map(|(&g, &x)| if x > *floor { g / x } else { T::zero() })
                    .collect();
                self.accumulate(grads, *a, da);
            }
            Op::SoftmaxRows(a) => {
                let (r, c) = out.dims();
                let y = out.data();
                let mut da = vec![T::zero(); r * c];
                for i in 0..r {
                    let span = i * c..(i + 1) * c;
                    let dot = gd[span.clone()]
                        .iter()
                        .zip(&y[span.clone()])
                        .fold(T::zero(), |acc, (&g, &p)| acc + g * p);
                    for j in span {
                        da[j] = y[j] * (gd[j] - dot);
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::SegmentSoftmax(a, segments) => {
                let y = out.data();
                let n_seg = segments.iter().max().map_or(0, |&m| m + 1);
                let mut dot = vec![T::zero(); n_seg];
                for ((&s, &g), &p) in segments.iter().zip(gd).zip(y) {
                    dot[s] = dot[s] + g * p;
                }
                let da = segments
                    .iter()
                    .zip(gd)
                    .zip(y)
                    .map(|((&s, &g), &p)| p * (g - dot[s]))
                    .collect();
                self.accumulate(grads, *a, da);
            }
            Op::GatherRows(a, index) => {
                let (r, c) = self.value(*a).dims();
                let mut da = vec![T::zero(); r * c];
                for (k, &i) in index.iter().enumerate() {
                    for (d, &x) in da[i * c..(i + 1) * c]
                        .iter_mut()
                        .zip(&gd[k * c..(k + 1) * c])
                    {
                        *d = *d + x;
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::ScatterAddRows(a, index) => {
                let c = out.cols();
                let mut da = Vec::with_capacity(index.len() * c);
                for &dst in index.iter() {
                    da.extend_from_slice(&gd[dst * c..(dst + 1) * c]);
                }
                self.accumulate(grads, *a, da);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let r = out.rows();
                let mut da = Vec::with_capacity(r * ca);
                let mut db = Vec::with_capacity(r * cb);
                for i in 0..r {
                    let row = &gd[i * (ca + cb)..(i + 1) * (ca + cb)];
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..]);
                }
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::ConcatRows(a, b) => {
                let na = self.value(*a).numel();
                self.accumulate(grads, *a, gd[..na].to_vec());
                self.accumulate(grads, *b, gd[na..].to_vec());
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![gd[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                let scale = gd[0] / T::from_f64(n as f64);
                self.accumulate(grads, *a, vec![scale; n]);
            }
            Op::PickCols(a, cols) => {
                let (r, c) = self.value(*a).dims();
                let mut da = vec![T::zero(); r * c];
                for (i, &j) in cols.iter().enumerate() {
                    da[i * c + j] = gd[i];
                }
                self.accumulate(grads, *a, da);
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.value(*a).dims();
                if self.tracked(*a) {
                    let mut da = vec![T::zero(); r * c];
                    da[start * c..start * c + gd.len()].copy_from_slice(gd);
                    self.accumulate(grads, *a, da);
                }
            }
            Op::Propagate {
                a,
                weights,
                src,
                dst,
            } => {
                let (r, c) = self.value(*a).dims();
                let x = self.value(*a).data();
                let wv = weights.map(|w| self.value(w).data());
                if self.tracked(*a) {
                    let mut da = vec![T::zero(); r * c];
                    for (k, (&s, &d)) in src.iter().zip(dst.iter()).enumerate() {
                        let g_row = &gd[d * c..(d + 1) * c];
                        let out = &mut da[s * c..(s + 1) * c];
                        let wk = wv.map_or(T::one(), |w| w[k]);
                        for (o, &g) in out.iter_mut().zip(g_row) {
                            *o = *o + g * wk;
                        }
                    }
                    self.accumulate(grads, *a, da);
                }
                if let Some(w) = weights.filter(|w| self.tracked(*w)) {
                    let dw = src
                        .iter()
                        .zip(dst.iter())
                        .map(|(&s, &d)| {
                            gd[d * c..(d + 1) * c]
                                .iter()
                                .zip(&x[s * c..(s + 1) * c])
                                .fold(T::zero(), |acc, (&g, &v)| acc + g * v)
                        })
                        .collect();
                    self.accumulate(grads, w, dw);
                }
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, delta: Vec<T>) {
        if !self.tracked(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, d) in existing.data_mut().iter_mut().zip(delta) {
                    *e = *e + d;
                }
            }
            slot @ None => *slot = Some(self.value(v).reshaped_like(delta)),
        }
    }
}

#[inline]
pub(crate) fn leaky<T: Real>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        slope * x
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_into<T: Real>(src: &[T], dst: &mut [T]) {
    let max = src.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut denom = T::zero();
    for (d, &x) in dst.iter_mut().zip(src) {
        *d = (x - max).exp();
        denom = denom + *d;
    }
    for d in dst.iter_mut() {
        *d = *d / denom;
    }
}
