//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node in creation order, so the
//! node list is already a topological order and `backward` is a single reverse
//! sweep. One graph belongs to one thread; independent graphs share nothing.

use crate::error::{Error, Result};
use crate::tensor::{kernels, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, gamma: Var, beta: Var, eps: f64 },
    Gelu(Var),
    Tanh(Var),
    MeanRows(Var),
    Sum(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    CrossEntropy { logits: Var, label: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Counters of attention score entries, kept per graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AttentionCounter {
    pub cross_entries: u64,
    pub latent_entries: u64,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    counter: AttentionCounter,
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_COEF: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Numerically stable softmax of one row, written into `out`.
pub fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Softmax of a vector; rejects non-finite input.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Dimension("softmax of empty vector".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("softmax input is not finite".into()));
    }
    let mut out = vec![0.0; x.len()];
    softmax_into(x, &mut out);
    Ok(out)
}

/// `(x - mean) / sqrt(var + eps) * gamma + beta` with 1/D variance.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if x.is_empty() || gamma.len() != x.len() || beta.len() != x.len() {
        return Err(Error::Dimension(format!(
            "layer_norm lengths x={} gamma={} beta={}",
            x.len(),
            gamma.len(),
            beta.len()
        )));
    }
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv = 1.0 / (var + eps).sqrt();
    let out: Vec<f64> = x
        .iter()
        .zip(gamma.iter().zip(beta))
        .map(|(v, (g, b))| (v - mean) * inv * g + b)
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("layer_norm produced a non-finite value".into()));
    }
    Ok(out)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node created after the first `len`; earlier handles stay
    /// valid. Used to reuse bound parameters across inference passes.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated on `v` by `backward`; `None` for nodes that do
    /// not require gradients.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Zeroes every stored gradient.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    pub fn counter(&self) -> AttentionCounter {
        self.counter
    }

    pub(crate) fn record_cross_scores(&mut self, entries: u64) {
        self.counter.cross_entries += entries;
    }

    pub(crate) fn record_latent_scores(&mut self, entries: u64) {
        self.counter.latent_entries += entries;
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric("leaf tensor contains non-finite values".into()));
        }
        let grad = requires_grad.then(|| Tensor::zeros(value.shape()));
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "operation {} produced a non-finite value",
                op_name(&op)
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner extents differ: {m}x{k} * {k2}x{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), &[a, b])
    }

    /// `a * b^T`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul_nt inner extents differ: {m}x{k} * ({n}x{k2})^T"
            )));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMulNt(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.len() != vb.len() || va.dims2() != vb.dims2() {
            return Err(Error::Dimension(format!(
                "add shapes differ: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push(value, Op::Add(a, b), &[a, b])
    }

    /// Adds a length-`n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.value(row).len() != n {
            return Err(Error::Dimension(format!(
                "row broadcast: matrix has {n} columns, row has {}",
                self.value(row).len()
            )));
        }
        let r = self.value(row).data();
        let mut data = self.value(a).data().to_vec();
        for i in 0..m {
            for (x, y) in data[i * n..(i + 1) * n].iter_mut().zip(r) {
                *x += y;
            }
        }
        self.push(Tensor::matrix(m, n, data)?, Op::AddRow(a, row), &[a, row])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.len() != vb.len() || va.dims2() != vb.dims2() {
            return Err(Error::Dimension(format!(
                "mul shapes differ: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let src = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            softmax_into(&src[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
        }
        self.push(Tensor::matrix(m, n, out)?, Op::SoftmaxRows(a), &[a])
    }

    /// Row-wise layer normalization with per-column `gamma` and `beta`.
    pub fn layer_norm_rows(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.dims(x);
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(Error::Dimension(format!(
                "layer_norm over {n} columns with gamma {} / beta {}",
                self.value(gamma).len(),
                self.value(beta).len()
            )));
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend(layer_norm(&src[i * n..(i + 1) * n], g, b, eps)?);
        }
        self.push(
            Tensor::matrix(m, n, out)?,
            Op::LayerNormRows { x, gamma, beta, eps },
            &[x, gamma, beta],
        )
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(gelu);
        self.push(value, Op::Gelu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a), &[a])
    }

    /// Mean over rows: `m x n -> 1 x n`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let src = self.value(a).data();
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, v) in out.iter_mut().zip(&src[i * n..(i + 1) * n]) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
        self.push(Tensor::matrix(1, n, out)?, Op::MeanRows(a), &[a])
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if len == 0 || start + len > n {
            return Err(Error::Dimension(format!(
                "column slice {start}..{} out of {n}",
                start + len
            )));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        self.push(Tensor::matrix(m, len, out)?, Op::SliceCols { x, start }, &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Dimension("concat of zero tensors".into()));
        };
        let m = self.dims(first).0;
        if parts.iter().any(|&p| self.dims(p).0 != m) {
            return Err(Error::Dimension("concat_cols row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        self.push(Tensor::matrix(m, total, out)?, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// `-ln softmax(logits)[label]` for a single row of logits.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let row = self.value(logits).data();
        if label >= row.len() {
            return Err(Error::Range(format!("label {label} outside {} classes", row.len())));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        self.push(
            Tensor::scalar(lse - row[label]),
            Op::CrossEntropy { logits, label },
            &[logits],
        )
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Leaf gradients accumulate across calls; callers reset them with
    /// [`Graph::zero_grad`] between optimizer steps.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                let node = &mut self.nodes[idx];
                let g = node.grad.get_or_insert_with(|| Tensor::zeros(node.value.shape()));
                for (a, b) in g.data_mut().iter_mut().zip(&gout) {
                    *a += b;
                }
                continue;
            }
            let node = &self.nodes[idx];
            for (var, g) in self.local_grads(&node.op, &node.value, &gout) {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(g),
                }
            }
            // Keep the last-pass gradient on interior nodes for inspection.
            let shape = self.nodes[idx].value.shape().to_vec();
            self.nodes[idx].grad = Tensor::new(shape, gout).ok();
        }
        Ok(())
    }

    fn local_grads(&self, op: &Op, out: &Tensor, gout: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let val = |v: &Var| &self.nodes[v.0].value;
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        match op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (m, k) = val(a).dims2();
                let n = val(b).cols();
                let mut res = Vec::new();
                if needs(a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::matmul_nt(gout, val(b).data(), &mut ga, m, n, k);
                    res.push((*a, ga));
                }
                if needs(b) {
                    let mut gb = vec![0.0; k * n];
                    kernels::matmul_tn(val(a).data(), gout, &mut gb, k, m, n);
                    res.push((*b, gb));
                }
                res
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = val(a).dims2();
                let n = val(b).rows();
                let mut res = Vec::new();
                if needs(a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::matmul(gout, val(b).data(), &mut ga, m, n, k);
                    res.push((*a, ga));
                }
                if needs(b) {
                    let mut gb = vec![0.0; n * k];
                    kernels::matmul_tn(gout, val(a).data(), &mut gb, n, m, k);
                    res.push((*b, gb));
                }
                res
            }
            Op::Add(a, b) => vec![(*a, gout.to_vec()), (*b, gout.to_vec())],
            Op::AddRow(a, row) => {
                let n = val(row).len();
                let mut gr = vec![0.0; n];
                for chunk in gout.chunks(n) {
                    gr.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                }
                vec![(*a, gout.to_vec()), (*row, gr)]
            }
            Op::Mul(a, b) => {
                let ga = gout.iter().zip(val(b).data()).map(|(g, y)| g * y).collect();
                let gb = gout.iter().zip(val(a).data()).map(|(g, x)| g * x).collect();
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(a, c) => vec![(*a, gout.iter().map(|g| g * c).collect())],
            Op::Transpose(a) => {
                let (r, c) = out.dims2();
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        ga[j * r + i] = gout[i * c + j];
                    }
                }
                vec![(*a, ga)]
            }
            Op::SoftmaxRows(a) => {
                let n = out.cols();
                let mut ga = vec![0.0; gout.len()];
                for ((gr, yr), dst) in gout.chunks(n).zip(out.data().chunks(n)).zip(ga.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    for ((d, g), y) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = y * (g - dot);
                    }
                }
                vec![(*a, ga)]
            }
            Op::LayerNormRows { x, gamma, beta, eps } => {
                let (m, n) = val(x).dims2();
                let (xs, gs) = (val(x).data(), val(gamma).data());
                let mut gx = vec![0.0; m * n];
                let mut gg = vec![0.0; n];
                let mut gb = vec![0.0; n];
                let d = n as f64;
                for i in 0..m {
                    let row = &xs[i * n..(i + 1) * n];
                    let go = &gout[i * n..(i + 1) * n];
                    let mean = row.iter().sum::<f64>() / d;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                    let dxhat: Vec<f64> = go.iter().zip(gs).map(|(g, s)| g * s).collect();
                    let sum_d: f64 = dxhat.iter().sum();
                    let sum_dx: f64 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        gx[i * n + j] = inv / d * (d * dxhat[j] - sum_d - xhat[j] * sum_dx);
                        gg[j] += go[j] * xhat[j];
                        gb[j] += go[j];
                    }
                }
                vec![(*x, gx), (*gamma, gg), (*beta, gb)]
            }
            Op::Gelu(a) => {
                let ga = gout
                    .iter()
                    .zip(val(a).data())
                    .map(|(g, x)| g * gelu_derivative(*x))
                    .collect();
                vec![(*a, ga)]
            }
            Op::Tanh(a) => {
                let ga = gout.iter().zip(out.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                vec![(*a, ga)]
            }
            Op::MeanRows(a) => {
                let (m, n) = val(a).dims2();
                let mut ga = Vec::with_capacity(m * n);
                for _ in 0..m {
                    ga.extend(gout.iter().map(|g| g / m as f64));
                }
                vec![(*a, ga)]
            }
            Op::Sum(a) => vec![(*a, vec![gout[0]; val(a).len()])],
            Op::SliceCols { x, start } => {
                let (m, n) = val(x).dims2();
                let len = out.cols();
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    gx[i * n + start..i * n + start + len].copy_from_slice(&gout[i * len..(i + 1) * len]);
                }
                vec![(*x, gx)]
            }
            Op::ConcatCols(parts) => {
                let (m, total) = out.dims2();
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for p in parts {
                    let w = val(p).cols();
                    let mut gp = Vec::with_capacity(m * w);
                    for i in 0..m {
                        gp.extend_from_slice(&gout[i * total + offset..i * total + offset + w]);
                    }
                    offset += w;
                    res.push((*p, gp));
                }
                res
            }
            Op::CrossEntropy { logits, label } => {
                let mut p = vec![0.0; val(logits).len()];
                softmax_into(val(logits).data(), &mut p);
                p[*label] -= 1.0;
                vec![(*logits, p.into_iter().map(|v| v * gout[0]).collect())]
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::MatMulNt(..) => "matmul_nt",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Transpose(..) => "transpose",
        Op::SoftmaxRows(..) => "softmax",
        Op::LayerNormRows { .. } => "layer_norm",
        Op::Gelu(..) => "gelu",
        Op::Tanh(..) => "tanh",
        Op::MeanRows(..) => "mean_rows",
        Op::Sum(..) => "sum",
        Op::SliceCols { .. } => "slice_cols",
        Op::ConcatCols(..) => "concat_cols",
        Op::CrossEntropy { .. } => "cross_entropy",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Triple-loop product, independent of the kernels.
    fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = a.dims2();
        let n = b.cols();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a.at(i, p) * b.at(p, j);
                }
            }
        }
        Tensor::matrix(m, n, out).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let x = mat(&[&[1., 2.], &[3., 4.]]);
        let y = mat(&[&[5., 6.], &[7., 8.]]);
        let i2 = g.constant(Tensor::identity(2)).unwrap();
        let xv = g.constant(x.clone()).unwrap();
        let yv = g.constant(y.clone()).unwrap();
        let z = g.constant(Tensor::zeros(&[2, 2])).unwrap();

        let ix = g.matmul(i2, xv).unwrap();
        assert_eq!(g.value(ix), &x);

        let xy = g.matmul(xv, yv).unwrap();
        assert_eq!(g.value(xy), &naive_matmul(&x, &y));
        assert_eq!(g.value(xy).data(), &[19., 22., 43., 50.]);

        let xz = g.matmul(xv, z).unwrap();
        assert!(g.value(xz).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(g.matmul(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for p in &u {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        // exp(k - 3) / sum, evaluated independently below.
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expected = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_64,
            0.665_240_955_774_821_9,
        ];
        for ((pi, ei), xi) in p.iter().zip(&e).zip(expected) {
            assert!((pi - ei / s).abs() < 1e-15);
            assert!((pi - xi).abs() < 1e-12);
        }
        assert!(matches!(softmax(&[1.0, f64::NAN]), Err(Error::Numeric(_))));
    }

    #[test]
    fn layer_norm_examples() {
        let z = layer_norm(&[4.0; 5], &[1.0; 5], &[0.0; 5], 1e-5).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let y = layer_norm(&[1.0, -1.0], &[1.0; 2], &[0.0; 2], 0.0).unwrap();
        assert_eq!(y, vec![1.0, -1.0]);
        let w = layer_norm(&[1.0, 2.0, 3.0], &[1.0; 3], &[0.0; 3], 1e-5).unwrap();
        // var = 2/3, so the outer entries are +-1/sqrt(2/3 + 1e-5).
        let edge = 1.0 / (2.0f64 / 3.0 + 1e-5).sqrt();
        assert!((w[0] + edge).abs() < 1e-12 && w[1].abs() < 1e-15 && (w[2] - edge).abs() < 1e-12);
        assert!((w[2] - 1.22474).abs() < 1e-4);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0)).unwrap();
        let y = g.mul(x, x).unwrap();
        let l = g.sum(y).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn constant_loss_gives_zero_grads() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(vec![1.0, 2.0]).unwrap()).unwrap();
        let c = g.constant(Tensor::row(vec![0.5, 0.5]).unwrap()).unwrap();
        let l = g.sum(c).unwrap();
        g.backward(l).unwrap();
        assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_accumulates_and_reset_clears() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0)).unwrap();
        let y = g.mul(x, x).unwrap();
        let l = g.sum(y).unwrap();
        g.backward(l).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[12.0]);
        g.zero_grad();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(vec![1.0, 2.0]).unwrap()).unwrap();
        assert!(matches!(g.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn non_finite_results_are_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1e300)).unwrap();
        assert!(matches!(g.mul(x, x), Err(Error::Numeric(_))));
        assert!(g.constant(Tensor::scalar(f64::INFINITY)).is_err());
    }
}
