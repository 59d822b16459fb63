//! Minimal reverse-mode autodiff over a flat tape.
//!
//! Nodes are created in topological order, so the backward pass is a single
//! reverse sweep. Leaf gradients persist across `backward` calls and
//! accumulate additively; intermediate gradients are scratch space reset on
//! every call.

// the backward sweep walks several aliased buffers by index; iterator forms
// fight the split borrows
#![allow(clippy::needless_range_loop)]

use std::fmt;

#[derive(Debug)]
pub enum ModelError {
    Shape(String),
    Contract(String),
    Config(String),
    Checkpoint(String),
    Io(std::io::Error),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Shape(why) => write!(f, "shape error: {why}"),
            ModelError::Contract(why) => write!(f, "contract violation: {why}"),
            ModelError::Config(why) => write!(f, "bad model config: {why}"),
            ModelError::Checkpoint(why) => write!(f, "bad checkpoint: {why}"),
            ModelError::Io(e) => write!(f, "model i/o error: {e}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e)
    }
}

/// Handle to a tensor on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorRef(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorRef, TensorRef),
    Sub(TensorRef, TensorRef),
    Mul(TensorRef, TensorRef),
    Scale(TensorRef, f64),
    Relu(TensorRef),
    Tanh(TensorRef),
    Sigmoid(TensorRef),
    /// [m,k] x [k,n] -> [m,n]
    MatMul(TensorRef, TensorRef),
    /// [r,c] x [c] -> [r]
    MatVec(TensorRef, TensorRef),
    /// [r] x [r,c] -> [c]
    VecMat(TensorRef, TensorRef),
    /// input [ci,t], weight [co,ci,k], bias [co] -> [co,t], same-length
    /// output via symmetric zero padding; kernel must be odd.
    Conv1d {
        input: TensorRef,
        weight: TensorRef,
        bias: TensorRef,
        dilation: usize,
    },
    /// Concatenate along the leading dimension.
    ConcatRows(Vec<TensorRef>),
    /// Rows starting at `start` of the leading dimension; the row count is
    /// the node's own leading dimension.
    SliceRows {
        input: TensorRef,
        start: usize,
    },
    /// [c,t] -> [c], mean over the time axis.
    MeanOverCols(TensorRef),
    /// [c,t] * [c] broadcast over columns.
    MulColVec(TensorRef, TensorRef),
    /// [c,t] + [c] broadcast over columns.
    AddColVec(TensorRef, TensorRef),
    /// Softmax over a vector.
    Softmax(TensorRef),
    /// sqrt(max(x, eps)) elementwise.
    ClampedSqrt(TensorRef, f64),
    /// [1] scalar times any tensor.
    ScalarMul(TensorRef, TensorRef),
    /// Binary cross-entropy of a scalar probability against a fixed target,
    /// with the probability clamped away from {0, 1} before the logs.
    Bce {
        pred: TensorRef,
        target: f64,
    },
}

struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
    is_leaf: bool,
    op: Op,
}

pub const BCE_CLAMP: f64 = 1e-7;

/// Computation tape. Create leaves, compose ops, call [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn pair_mut(nodes: &mut [Node], i: usize, j: usize) -> (&mut Node, &mut Node) {
    debug_assert_ne!(i, j);
    if i < j {
        let (l, r) = nodes.split_at_mut(j);
        (&mut l[i], &mut r[0])
    } else {
        let (l, r) = nodes.split_at_mut(i);
        (&mut r[0], &mut l[j])
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        shape: Vec<usize>,
        values: Vec<f64>,
        requires_grad: bool,
        is_leaf: bool,
        op: Op,
    ) -> TensorRef {
        debug_assert_eq!(numel(&shape), values.len());
        let grad = vec![0.0; values.len()];
        self.nodes.push(Node {
            shape,
            values,
            grad,
            requires_grad,
            is_leaf,
            op,
        });
        TensorRef(self.nodes.len() - 1)
    }

    fn requires(&self, t: TensorRef) -> bool {
        self.nodes[t.0].requires_grad
    }

    pub fn leaf(&mut self, shape: &[usize], values: Vec<f64>, requires_grad: bool) -> TensorRef {
        self.push(shape.to_vec(), values, requires_grad, true, Op::Leaf)
    }

    pub fn constant(&mut self, shape: &[usize], values: Vec<f64>) -> TensorRef {
        self.leaf(shape, values, false)
    }

    pub fn scalar(&mut self, v: f64) -> TensorRef {
        self.constant(&[1], vec![v])
    }

    pub fn shape(&self, t: TensorRef) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn values(&self, t: TensorRef) -> &[f64] {
        &self.nodes[t.0].values
    }

    pub fn grad(&self, t: TensorRef) -> &[f64] {
        &self.nodes[t.0].grad
    }

    pub fn value_scalar(&self, t: TensorRef) -> f64 {
        self.nodes[t.0].values[0]
    }

    pub fn zero_grad(&mut self, t: TensorRef) {
        for g in self.nodes[t.0].grad.iter_mut() {
            *g = 0.0;
        }
    }

    fn same_shape(&self, a: TensorRef, b: TensorRef, op: &str) -> Result<(), ModelError> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(ModelError::Shape(format!(
                "{op}: {:?} vs {:?}",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef, ModelError> {
        self.same_shape(a, b, "add")?;
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(
            self.nodes[a.0].shape.clone(),
            values,
            rg,
            false,
            Op::Add(a, b),
        ))
    }

    pub fn sub(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef, ModelError> {
        self.same_shape(a, b, "sub")?;
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x - y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(
            self.nodes[a.0].shape.clone(),
            values,
            rg,
            false,
            Op::Sub(a, b),
        ))
    }

    pub fn mul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef, ModelError> {
        self.same_shape(a, b, "mul")?;
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(
            self.nodes[a.0].shape.clone(),
            values,
            rg,
            false,
            Op::Mul(a, b),
        ))
    }

    pub fn scale(&mut self, a: TensorRef, c: f64) -> TensorRef {
        let values = self.nodes[a.0].values.iter().map(|x| x * c).collect();
        let rg = self.requires(a);
        self.push(
            self.nodes[a.0].shape.clone(),
            values,
            rg,
            false,
            Op::Scale(a, c),
        )
    }

    pub fn relu(&mut self, a: TensorRef) -> TensorRef {
        let values = self.nodes[a.0].values.iter().map(|x| x.max(0.0)).collect();
        let rg = self.requires(a);
        self.push(
            self.nodes[a.0].shape.clone(),
            values,
            rg,
            false,
            Op::Relu(a),
        )
    }

    pub fn tanh(&mut self, a: TensorRef) -> TensorRef {
        let values = self.nodes[a.0].values.iter().map(|x| x.tanh()).collect();
        let rg = self.requires(a);
        self.push(
            self.nodes[a.0].shape.clone(),
            values,
            rg,
            false,
            Op::Tanh(a),
        )
    }

    pub fn sigmoid(&mut self, a: TensorRef) -> TensorRef {
        let values = self.nodes[a.0]
            .values
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let rg = self.requires(a);
        self.push(
            self.nodes[a.0].shape.clone(),
            values,
            rg,
            false,
            Op::Sigmoid(a),
        )
    }

    pub fn matmul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef, ModelError> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(ModelError::Shape(format!("matmul: {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b_) in orow.iter_mut().zip(brow.iter()) {
                    *o += aip * b_;
                }
            }
        }
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(vec![m, n], out, rg, false, Op::MatMul(a, b)))
    }

    pub fn matvec(&mut self, m: TensorRef, v: TensorRef) -> Result<TensorRef, ModelError> {
        let (sm, sv) = (&self.nodes[m.0].shape, &self.nodes[v.0].shape);
        if sm.len() != 2 || sv.len() != 1 || sm[1] != sv[0] {
            return Err(ModelError::Shape(format!("matvec: {sm:?} x {sv:?}")));
        }
        let (rows, cols) = (sm[0], sm[1]);
        let mv = &self.nodes[m.0].values;
        let vv = &self.nodes[v.0].values;
        let out: Vec<f64> = (0..rows)
            .map(|r| {
                mv[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(vv.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        let rg = self.requires(m) || self.requires(v);
        Ok(self.push(vec![rows], out, rg, false, Op::MatVec(m, v)))
    }

    pub fn vecmat(&mut self, v: TensorRef, m: TensorRef) -> Result<TensorRef, ModelError> {
        let (sv, sm) = (&self.nodes[v.0].shape, &self.nodes[m.0].shape);
        if sv.len() != 1 || sm.len() != 2 || sv[0] != sm[0] {
            return Err(ModelError::Shape(format!("vecmat: {sv:?} x {sm:?}")));
        }
        let (rows, cols) = (sm[0], sm[1]);
        let vv = &self.nodes[v.0].values;
        let mv = &self.nodes[m.0].values;
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            let vr = vv[r];
            if vr == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(mv[r * cols..(r + 1) * cols].iter()) {
                *o += vr * x;
            }
        }
        let rg = self.requires(v) || self.requires(m);
        Ok(self.push(vec![cols], out, rg, false, Op::VecMat(v, m)))
    }

    /// Dilated 1-D convolution with symmetric zero padding, so the output
    /// has the same length as the input. The kernel must be odd.
    pub fn conv1d(
        &mut self,
        input: TensorRef,
        weight: TensorRef,
        bias: TensorRef,
        dilation: usize,
    ) -> Result<TensorRef, ModelError> {
        let si = self.nodes[input.0].shape.clone();
        let sw = self.nodes[weight.0].shape.clone();
        let sb = self.nodes[bias.0].shape.clone();
        if si.len() != 2 || sw.len() != 3 || sb.len() != 1 {
            return Err(ModelError::Shape(format!(
                "conv1d: input {si:?}, weight {sw:?}, bias {sb:?}"
            )));
        }
        let (c_in, t) = (si[0], si[1]);
        let (c_out, w_in, kernel) = (sw[0], sw[1], sw[2]);
        if w_in != c_in || sb[0] != c_out {
            return Err(ModelError::Shape(format!(
                "conv1d: weight {sw:?} does not match input {si:?} / bias {sb:?}"
            )));
        }
        if kernel % 2 == 0 {
            return Err(ModelError::Shape(format!(
                "conv1d: kernel {kernel} must be odd"
            )));
        }
        if dilation == 0 {
            return Err(ModelError::Shape("conv1d: dilation must be >= 1".into()));
        }
        let half = kernel / 2;
        let xv = &self.nodes[input.0].values;
        let wv = &self.nodes[weight.0].values;
        let bv = &self.nodes[bias.0].values;
        let mut out = vec![0.0; c_out * t];
        for o in 0..c_out {
            let orow = &mut out[o * t..(o + 1) * t];
            for v in orow.iter_mut() {
                *v = bv[o];
            }
            for i in 0..c_in {
                let xrow = &xv[i * t..(i + 1) * t];
                for k in 0..kernel {
                    let w = wv[(o * c_in + i) * kernel + k];
                    if w == 0.0 {
                        continue;
                    }
                    let offset = (k as i64 - half as i64) * dilation as i64;
                    let lo = (-offset).max(0) as usize;
                    let hi = (t as i64).min(t as i64 - offset).max(0) as usize;
                    for t_idx in lo..hi {
                        orow[t_idx] += w * xrow[(t_idx as i64 + offset) as usize];
                    }
                }
            }
        }
        let rg = self.requires(input) || self.requires(weight) || self.requires(bias);
        Ok(self.push(
            vec![c_out, t],
            out,
            rg,
            false,
            Op::Conv1d {
                input,
                weight,
                bias,
                dilation,
            },
        ))
    }

    /// Concatenate along the leading dimension. All inputs must share their
    /// trailing dimensions.
    pub fn concat_rows(&mut self, parts: &[TensorRef]) -> Result<TensorRef, ModelError> {
        if parts.is_empty() {
            return Err(ModelError::Shape("concat of zero tensors".into()));
        }
        let first = &self.nodes[parts[0].0].shape;
        let tail = first[1..].to_vec();
        let mut rows = 0usize;
        for &p in parts {
            let s = &self.nodes[p.0].shape;
            if s[1..] != tail[..] {
                return Err(ModelError::Shape(format!(
                    "concat: trailing dims differ, {:?} vs {:?}",
                    s, first
                )));
            }
            rows += s[0];
        }
        let mut values = Vec::with_capacity(rows * tail.iter().product::<usize>().max(1));
        for &p in parts {
            values.extend_from_slice(&self.nodes[p.0].values);
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        let rg = parts.iter().any(|&p| self.requires(p));
        Ok(self.push(shape, values, rg, false, Op::ConcatRows(parts.to_vec())))
    }

    /// Rows [start, start + len) along the leading dimension.
    pub fn slice_rows(
        &mut self,
        input: TensorRef,
        start: usize,
        len: usize,
    ) -> Result<TensorRef, ModelError> {
        let s = self.nodes[input.0].shape.clone();
        if start + len > s[0] {
            return Err(ModelError::Shape(format!(
                "slice [{start}, {}) of {:?}",
                start + len,
                s
            )));
        }
        let stride: usize = s[1..].iter().product::<usize>().max(1);
        let values = self.nodes[input.0].values[start * stride..(start + len) * stride].to_vec();
        let mut shape = vec![len];
        shape.extend_from_slice(&s[1..]);
        let rg = self.requires(input);
        Ok(self.push(shape, values, rg, false, Op::SliceRows { input, start }))
    }

    /// [c,t] -> [c], mean over the time axis.
    pub fn mean_over_cols(&mut self, a: TensorRef) -> Result<TensorRef, ModelError> {
        let s = &self.nodes[a.0].shape;
        if s.len() != 2 {
            return Err(ModelError::Shape(format!("mean_over_cols: {s:?}")));
        }
        let (c, t) = (s[0], s[1]);
        let av = &self.nodes[a.0].values;
        let values: Vec<f64> = (0..c)
            .map(|r| av[r * t..(r + 1) * t].iter().sum::<f64>() / t as f64)
            .collect();
        let rg = self.requires(a);
        Ok(self.push(vec![c], values, rg, false, Op::MeanOverCols(a)))
    }

    /// [c,t] * [c] with the vector broadcast along time.
    pub fn mul_col_vec(&mut self, a: TensorRef, v: TensorRef) -> Result<TensorRef, ModelError> {
        let (sa, sv) = (&self.nodes[a.0].shape, &self.nodes[v.0].shape);
        if sa.len() != 2 || sv.len() != 1 || sa[0] != sv[0] {
            return Err(ModelError::Shape(format!("mul_col_vec: {sa:?} x {sv:?}")));
        }
        let (c, t) = (sa[0], sa[1]);
        let av = &self.nodes[a.0].values;
        let vv = &self.nodes[v.0].values;
        let mut values = Vec::with_capacity(c * t);
        for r in 0..c {
            for i in 0..t {
                values.push(av[r * t + i] * vv[r]);
            }
        }
        let rg = self.requires(a) || self.requires(v);
        Ok(self.push(vec![c, t], values, rg, false, Op::MulColVec(a, v)))
    }

    /// [c,t] + [c] with the vector broadcast along time.
    pub fn add_col_vec(&mut self, a: TensorRef, v: TensorRef) -> Result<TensorRef, ModelError> {
        let (sa, sv) = (&self.nodes[a.0].shape, &self.nodes[v.0].shape);
        if sa.len() != 2 || sv.len() != 1 || sa[0] != sv[0] {
            return Err(ModelError::Shape(format!("add_col_vec: {sa:?} x {sv:?}")));
        }
        let (c, t) = (sa[0], sa[1]);
        let av = &self.nodes[a.0].values;
        let vv = &self.nodes[v.0].values;
        let mut values = Vec::with_capacity(c * t);
        for r in 0..c {
            for i in 0..t {
                values.push(av[r * t + i] + vv[r]);
            }
        }
        let rg = self.requires(a) || self.requires(v);
        Ok(self.push(vec![c, t], values, rg, false, Op::AddColVec(a, v)))
    }

    /// Softmax over a vector, computed with the usual max-shift.
    pub fn softmax(&mut self, a: TensorRef) -> Result<TensorRef, ModelError> {
        let s = &self.nodes[a.0].shape;
        if s.len() != 1 {
            return Err(ModelError::Shape(format!("softmax: {s:?}")));
        }
        let av = &self.nodes[a.0].values;
        let max = av.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let exps: Vec<f64> = av.iter().map(|&x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let values: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
        let rg = self.requires(a);
        Ok(self.push(s.clone(), values, rg, false, Op::Softmax(a)))
    }

    /// sqrt(max(x, eps)) elementwise; gradient is zero in the clamped region.
    pub fn clamped_sqrt(&mut self, a: TensorRef, eps: f64) -> TensorRef {
        let values = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| x.max(eps).sqrt())
            .collect();
        let rg = self.requires(a);
        self.push(
            self.nodes[a.0].shape.clone(),
            values,
            rg,
            false,
            Op::ClampedSqrt(a, eps),
        )
    }

    /// Scalar [1] times any tensor; the gradient flows to both.
    pub fn scalar_mul(&mut self, s: TensorRef, a: TensorRef) -> Result<TensorRef, ModelError> {
        if s == a {
            return self.mul(s, a);
        }
        if self.nodes[s.0].shape != [1] {
            return Err(ModelError::Shape(format!(
                "scalar_mul: scalar has shape {:?}",
                self.nodes[s.0].shape
            )));
        }
        let sv = self.nodes[s.0].values[0];
        let values = self.nodes[a.0].values.iter().map(|x| x * sv).collect();
        let rg = self.requires(s) || self.requires(a);
        Ok(self.push(
            self.nodes[a.0].shape.clone(),
            values,
            rg,
            false,
            Op::ScalarMul(s, a),
        ))
    }

    /// Binary cross-entropy of a scalar probability against target 0 or 1.
    pub fn bce(&mut self, pred: TensorRef, target: f64) -> Result<TensorRef, ModelError> {
        if self.nodes[pred.0].shape != [1] {
            return Err(ModelError::Shape(format!(
                "bce: prediction has shape {:?}",
                self.nodes[pred.0].shape
            )));
        }
        if target != 0.0 && target != 1.0 {
            return Err(ModelError::Contract(format!(
                "bce: target {target} not in {{0, 1}}"
            )));
        }
        let p = self.nodes[pred.0].values[0].clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let loss = -(target * p.ln() + (1.0 - target) * (1.0 - p).ln());
        let rg = self.requires(pred);
        Ok(self.push(vec![1], vec![loss], rg, false, Op::Bce { pred, target }))
    }

    /// Reverse sweep from a scalar loss. Leaf gradients accumulate across
    /// calls; intermediate gradients are reset each call.
    pub fn backward(&mut self, loss: TensorRef) -> Result<(), ModelError> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(ModelError::Contract(format!(
                "backward on non-scalar of shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        for node in self.nodes.iter_mut() {
            if !node.is_leaf {
                for g in node.grad.iter_mut() {
                    *g = 0.0;
                }
            }
        }
        self.nodes[loss.0].grad[0] += 1.0;

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let (before, after) = self.nodes.split_at_mut(id);
            let node = &after[0];
            let g = &node.grad;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    if before[a.0].requires_grad {
                        for (pg, &gi) in before[a.0].grad.iter_mut().zip(g.iter()) {
                            *pg += gi;
                        }
                    }
                    if before[b.0].requires_grad {
                        for (pg, &gi) in before[b.0].grad.iter_mut().zip(g.iter()) {
                            *pg += gi;
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if before[a.0].requires_grad {
                        for (pg, &gi) in before[a.0].grad.iter_mut().zip(g.iter()) {
                            *pg += gi;
                        }
                    }
                    if before[b.0].requires_grad {
                        for (pg, &gi) in before[b.0].grad.iter_mut().zip(g.iter()) {
                            *pg -= gi;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if a == b {
                        if before[a.0].requires_grad {
                            for i in 0..g.len() {
                                let av = before[a.0].values[i];
                                before[a.0].grad[i] += 2.0 * g[i] * av;
                            }
                        }
                    } else {
                        let (na, nb) = pair_mut(before, a.0, b.0);
                        if na.requires_grad {
                            for i in 0..g.len() {
                                na.grad[i] += g[i] * nb.values[i];
                            }
                        }
                        if nb.requires_grad {
                            for i in 0..g.len() {
                                nb.grad[i] += g[i] * na.values[i];
                            }
                        }
                    }
                }
                Op::Scale(a, c) => {
                    if before[a.0].requires_grad {
                        for (pg, &gi) in before[a.0].grad.iter_mut().zip(g.iter()) {
                            *pg += gi * c;
                        }
                    }
                }
                Op::Relu(a) => {
                    if before[a.0].requires_grad {
                        for i in 0..g.len() {
                            if before[a.0].values[i] > 0.0 {
                                before[a.0].grad[i] += g[i];
                            }
                        }
                    }
                }
                Op::Tanh(a) => {
                    if before[a.0].requires_grad {
                        for i in 0..g.len() {
                            let y = node.values[i];
                            before[a.0].grad[i] += g[i] * (1.0 - y * y);
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    if before[a.0].requires_grad {
                        for i in 0..g.len() {
                            let y = node.values[i];
                            before[a.0].grad[i] += g[i] * y * (1.0 - y);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let m = before[a.0].shape[0];
                    let k = before[a.0].shape[1];
                    let n = before[b.0].shape[1];
                    if a == b {
                        // square self-product: dA = G A^T + A^T G
                        if before[a.0].requires_grad {
                            let vals = before[a.0].values.clone();
                            let na = &mut before[a.0];
                            for i in 0..m {
                                for p in 0..k {
                                    let mut acc = 0.0;
                                    for j in 0..n {
                                        acc += g[i * n + j] * vals[p * n + j];
                                        acc += vals[j * k + i] * g[j * n + p];
                                    }
                                    na.grad[i * k + p] += acc;
                                }
                            }
                        }
                        continue;
                    }
                    let (na, nb) = pair_mut(before, a.0, b.0);
                    if na.requires_grad {
                        // dA = G x B^T
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += g[i * n + j] * nb.values[p * n + j];
                                }
                                na.grad[i * k + p] += acc;
                            }
                        }
                    }
                    if nb.requires_grad {
                        // dB = A^T x G
                        for p in 0..k {
                            for i in 0..m {
                                let a_ip = na.values[i * k + p];
                                if a_ip == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    nb.grad[p * n + j] += a_ip * g[i * n + j];
                                }
                            }
                        }
                    }
                }
                Op::MatVec(m_ref, v_ref) => {
                    let rows = before[m_ref.0].shape[0];
                    let cols = before[m_ref.0].shape[1];
                    let (nm, nv) = pair_mut(before, m_ref.0, v_ref.0);
                    if nm.requires_grad {
                        for r in 0..rows {
                            let gr = g[r];
                            if gr == 0.0 {
                                continue;
                            }
                            for c in 0..cols {
                                nm.grad[r * cols + c] += gr * nv.values[c];
                            }
                        }
                    }
                    if nv.requires_grad {
                        for r in 0..rows {
                            let gr = g[r];
                            if gr == 0.0 {
                                continue;
                            }
                            for c in 0..cols {
                                nv.grad[c] += gr * nm.values[r * cols + c];
                            }
                        }
                    }
                }
                Op::VecMat(v_ref, m_ref) => {
                    let rows = before[m_ref.0].shape[0];
                    let cols = before[m_ref.0].shape[1];
                    let (nv, nm) = pair_mut(before, v_ref.0, m_ref.0);
                    if nv.requires_grad {
                        for r in 0..rows {
                            let mut acc = 0.0;
                            for c in 0..cols {
                                acc += g[c] * nm.values[r * cols + c];
                            }
                            nv.grad[r] += acc;
                        }
                    }
                    if nm.requires_grad {
                        for r in 0..rows {
                            let vr = nv.values[r];
                            if vr == 0.0 {
                                continue;
                            }
                            for c in 0..cols {
                                nm.grad[r * cols + c] += vr * g[c];
                            }
                        }
                    }
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    dilation,
                } => {
                    let (c_in, t) = (before[input.0].shape[0], before[input.0].shape[1]);
                    let sw = before[weight.0].shape.clone();
                    let (c_out, kernel) = (sw[0], sw[2]);
                    let half = kernel / 2;
                    let dilation = *dilation;
                    {
                        let (nx, nw) = pair_mut(before, input.0, weight.0);
                        for o in 0..c_out {
                            let grow = &g[o * t..(o + 1) * t];
                            for i in 0..c_in {
                                for k in 0..kernel {
                                    let offset = (k as i64 - half as i64) * dilation as i64;
                                    let lo = (-offset).max(0) as usize;
                                    let hi = (t as i64).min(t as i64 - offset).max(0) as usize;
                                    let widx = (o * c_in + i) * kernel + k;
                                    if nw.requires_grad {
                                        let mut acc = 0.0;
                                        for t_idx in lo..hi {
                                            acc += grow[t_idx]
                                                * nx.values
                                                    [i * t + (t_idx as i64 + offset) as usize];
                                        }
                                        nw.grad[widx] += acc;
                                    }
                                    if nx.requires_grad {
                                        let w = nw.values[widx];
                                        if w != 0.0 {
                                            for t_idx in lo..hi {
                                                nx.grad
                                                    [i * t + (t_idx as i64 + offset) as usize] +=
                                                    w * grow[t_idx];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    if before[bias.0].requires_grad {
                        for o in 0..c_out {
                            let acc: f64 = g[o * t..(o + 1) * t].iter().sum();
                            before[bias.0].grad[o] += acc;
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0usize;
                    for &p in parts {
                        let len = before[p.0].values.len();
                        if before[p.0].requires_grad {
                            for (pg, &gi) in before[p.0]
                                .grad
                                .iter_mut()
                                .zip(g[offset..offset + len].iter())
                            {
                                *pg += gi;
                            }
                        }
                        offset += len;
                    }
                }
                Op::SliceRows { input, start } => {
                    if before[input.0].requires_grad {
                        let stride: usize =
                            before[input.0].shape[1..].iter().product::<usize>().max(1);
                        let base = start * stride;
                        for (i, &gi) in g.iter().enumerate() {
                            before[input.0].grad[base + i] += gi;
                        }
                    }
                }
                Op::MeanOverCols(a) => {
                    if before[a.0].requires_grad {
                        let (c, t) = (before[a.0].shape[0], before[a.0].shape[1]);
                        let inv = 1.0 / t as f64;
                        for r in 0..c {
                            let gr = g[r] * inv;
                            for i in 0..t {
                                before[a.0].grad[r * t + i] += gr;
                            }
                        }
                    }
                }
                Op::MulColVec(a, v) => {
                    let (c, t) = (before[a.0].shape[0], before[a.0].shape[1]);
                    let (na, nv) = pair_mut(before, a.0, v.0);
                    if na.requires_grad {
                        for r in 0..c {
                            let vr = nv.values[r];
                            for i in 0..t {
                                na.grad[r * t + i] += g[r * t + i] * vr;
                            }
                        }
                    }
                    if nv.requires_grad {
                        for r in 0..c {
                            let mut acc = 0.0;
                            for i in 0..t {
                                acc += g[r * t + i] * na.values[r * t + i];
                            }
                            nv.grad[r] += acc;
                        }
                    }
                }
                Op::AddColVec(a, v) => {
                    let (c, t) = (before[a.0].shape[0], before[a.0].shape[1]);
                    if before[a.0].requires_grad {
                        for (pg, &gi) in before[a.0].grad.iter_mut().zip(g.iter()) {
                            *pg += gi;
                        }
                    }
                    if before[v.0].requires_grad {
                        for r in 0..c {
                            let acc: f64 = g[r * t..(r + 1) * t].iter().sum();
                            before[v.0].grad[r] += acc;
                        }
                    }
                }
                Op::Softmax(a) => {
                    if before[a.0].requires_grad {
                        let y = &node.values;
                        let dot: f64 = y.iter().zip(g.iter()).map(|(yi, gi)| yi * gi).sum();
                        for i in 0..g.len() {
                            before[a.0].grad[i] += y[i] * (g[i] - dot);
                        }
                    }
                }
                Op::ClampedSqrt(a, eps) => {
                    if before[a.0].requires_grad {
                        for i in 0..g.len() {
                            if before[a.0].values[i] > *eps {
                                before[a.0].grad[i] += g[i] * 0.5 / node.values[i];
                            }
                        }
                    }
                }
                Op::ScalarMul(s, a) => {
                    let (ns, na) = pair_mut(before, s.0, a.0);
                    if ns.requires_grad {
                        let mut acc = 0.0;
                        for i in 0..g.len() {
                            acc += g[i] * na.values[i];
                        }
                        ns.grad[0] += acc;
                    }
                    if na.requires_grad {
                        let sv = ns.values[0];
                        for i in 0..g.len() {
                            na.grad[i] += g[i] * sv;
                        }
                    }
                }
                Op::Bce { pred, target } => {
                    if before[pred.0].requires_grad {
                        let p = before[pred.0].values[0];
                        if p > BCE_CLAMP && p < 1.0 - BCE_CLAMP {
                            before[pred.0].grad[0] += g[0] * (p - target) / (p * (1.0 - p));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
