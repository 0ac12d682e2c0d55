//! Reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Tape`] is an append-only arena of nodes. Building an expression
//! records, per node, its operation and parent ids; [`Tape::backward`] then
//! walks nodes in reverse creation order and accumulates vector-Jacobian
//! products into every node on a path to a gradient-requiring leaf. Nodes
//! whose subtree contains no such leaf are skipped, so frozen backbone
//! weights cost nothing extra to differentiate through.
//!
//! The op set is exactly what the prompt-injected transformer needs; it is
//! not a general-purpose autodiff system.

use crate::error::Result;
use crate::linalg::{sigmoid_scalar, softmax_rows, Matrix};

pub type NodeId = usize;

/// Smooth gelu-like activation x * sigmoid(1.702 x).
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    x * sigmoid_scalar(1.702 * x)
}

#[inline]
fn gelu_deriv(x: f64) -> f64 {
    let s = sigmoid_scalar(1.702 * x);
    s + 1.702 * x * s * (1.0 - s)
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    /// rows(a) x cols(a) plus a 1 x cols(a) row vector added to every row.
    AddRowBroadcast(NodeId, NodeId),
    Transpose(NodeId),
    Sigmoid(NodeId),
    Gelu(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    },
    SliceCols {
        x: NodeId,
        start: usize,
        len: usize,
    },
    ConcatCols(Vec<NodeId>),
    /// Stacks 1 x d row vectors into a rows x d matrix.
    StackRows(Vec<NodeId>),
    Row(NodeId, usize),
    /// Mean binary cross entropy against fixed 0/1 labels, with probability
    /// clamping. Value is 1x1.
    Bce {
        probs: NodeId,
        labels: Matrix,
        clamp: f64,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node id. Nodes off
/// the differentiation path hold `None`.
pub struct Grads {
    grads: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix> {
        self.grads.get_mut(id).and_then(|g| g.take())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
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

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    /// A differentiable leaf when `requires_grad`, otherwise a constant.
    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a]
            .value
            .matmul(&self.nodes[b].value)
            .expect("tape matmul shape mismatch");
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a]
            .value
            .add(&self.nodes[b].value)
            .expect("tape add shape mismatch");
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), needs)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a].value.scale(c);
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, c), needs)
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let m = &self.nodes[a].value;
        let v = &self.nodes[row].value;
        assert_eq!(v.rows(), 1, "broadcast operand must be a row vector");
        assert_eq!(v.cols(), m.cols(), "broadcast width mismatch");
        let mut value = m.clone();
        for r in 0..value.rows() {
            for c in 0..value.cols() {
                let x = value.get(r, c) + v.get(0, c);
                value.set(r, c, x);
            }
        }
        let needs = self.needs(a) || self.needs(row);
        self.push(value, Op::AddRowBroadcast(a, row), needs)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.transpose();
        let needs = self.needs(a);
        self.push(value, Op::Transpose(a), needs)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = crate::linalg::sigmoid(&self.nodes[a].value);
        let needs = self.needs(a);
        self.push(value, Op::Sigmoid(a), needs)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(gelu_scalar);
        let needs = self.needs(a);
        self.push(value, Op::Gelu(a), needs)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let value = softmax_rows(&self.nodes[a].value);
        let needs = self.needs(a);
        self.push(value, Op::SoftmaxRows(a), needs)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> NodeId {
        let m = &self.nodes[x].value;
        let g = &self.nodes[gamma].value;
        let b = &self.nodes[beta].value;
        assert_eq!(g.shape(), (1, m.cols()), "layer norm gamma shape");
        assert_eq!(b.shape(), (1, m.cols()), "layer norm beta shape");
        let mut value = Matrix::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            let row = m.row(r);
            let mean = row.iter().sum::<f64>() / m.cols() as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m.cols() as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for c in 0..m.cols() {
                let xhat = (row[c] - mean) * inv;
                value.set(r, c, g.get(0, c) * xhat + b.get(0, c));
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(value, Op::LayerNorm { x, gamma, beta, eps }, needs)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let m = &self.nodes[x].value;
        assert!(start + len <= m.cols(), "column slice out of range");
        let value = Matrix::from_fn(m.rows(), len, |r, c| m.get(r, start + c));
        let needs = self.needs(x);
        self.push(value, Op::SliceCols { x, start, len }, needs)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0]].value.rows();
        let total: usize = parts.iter().map(|&p| self.nodes[p].value.cols()).sum();
        let mut value = Matrix::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let m = &self.nodes[p].value;
            assert_eq!(m.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                for c in 0..m.cols() {
                    value.set(r, offset + c, m.get(r, c));
                }
            }
            offset += m.cols();
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), needs)
    }

    pub fn stack_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.nodes[parts[0]].value.cols();
        let mut value = Matrix::zeros(parts.len(), cols);
        for (r, &p) in parts.iter().enumerate() {
            let m = &self.nodes[p].value;
            assert_eq!(m.shape(), (1, cols), "stack_rows expects 1 x d rows");
            for c in 0..cols {
                value.set(r, c, m.get(0, c));
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::StackRows(parts.to_vec()), needs)
    }

    pub fn row(&mut self, x: NodeId, index: usize) -> NodeId {
        let m = &self.nodes[x].value;
        assert!(index < m.rows(), "row index out of range");
        let value = Matrix::row_vector(m.row(index).to_vec());
        let needs = self.needs(x);
        self.push(value, Op::Row(x, index), needs)
    }

    /// Mean over all entries of -(y ln p + (1-y) ln(1-p)) with p clamped to
    /// [clamp, 1-clamp]. `labels` must contain only 0.0 and 1.0.
    pub fn bce(&mut self, probs: NodeId, labels: Matrix, clamp: f64) -> NodeId {
        let p = &self.nodes[probs].value;
        assert_eq!(p.shape(), labels.shape(), "bce probs vs labels shape");
        let count = p.len() as f64;
        let mut total = 0.0;
        for (pv, yv) in p.data().iter().zip(labels.data()) {
            let pc = pv.clamp(clamp, 1.0 - clamp);
            total += -(yv * pc.ln() + (1.0 - yv) * (1.0 - pc).ln());
        }
        let needs = self.needs(probs);
        self.push(
            Matrix::scalar(total / count),
            Op::Bce {
                probs,
                labels,
                clamp,
            },
            needs,
        )
    }

    /// Accumulates d(node `of`)/d(every reachable leaf). `of` must be 1x1.
    pub fn backward(&self, of: NodeId) -> Result<Grads> {
        assert_eq!(
            self.nodes[of].value.shape(),
            (1, 1),
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[of] = Some(Matrix::scalar(1.0));

        for id in (0..=of).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.apply_vjp(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn apply_vjp(&self, id: NodeId, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let acc = |grads: &mut [Option<Matrix>], target: NodeId, delta: Matrix| -> Result<()> {
            match &mut grads[target] {
                Some(existing) => existing.add_assign(&delta)?,
                slot @ None => *slot = Some(delta),
            }
            Ok(())
        };

        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let bt = self.nodes[*b].value.transpose();
                    acc(grads, *a, g.matmul(&bt)?)?;
                }
                if self.needs(*b) {
                    let at = self.nodes[*a].value.transpose();
                    acc(grads, *b, at.matmul(g)?)?;
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    acc(grads, *a, g.clone())?;
                }
                if self.needs(*b) {
                    acc(grads, *b, g.clone())?;
                }
            }
            Op::Scale(a, c) => {
                if self.needs(*a) {
                    acc(grads, *a, g.scale(*c))?;
                }
            }
            Op::AddRowBroadcast(a, row) => {
                if self.needs(*a) {
                    acc(grads, *a, g.clone())?;
                }
                if self.needs(*row) {
                    acc(grads, *row, g.col_sums())?;
                }
            }
            Op::Transpose(a) => {
                if self.needs(*a) {
                    acc(grads, *a, g.transpose())?;
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[id].value;
                    let dx = g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv))?;
                    acc(grads, *a, dx)?;
                }
            }
            Op::Gelu(a) => {
                if self.needs(*a) {
                    let x = &self.nodes[*a].value;
                    let dx = g.zip_map(x, |gv, xv| gv * gelu_deriv(xv))?;
                    acc(grads, *a, dx)?;
                }
            }
            Op::SoftmaxRows(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[id].value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = (0..y.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum();
                        for c in 0..y.cols() {
                            dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    acc(grads, *a, dx)?;
                }
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let xm = &self.nodes[*x].value;
                let gm = &self.nodes[*gamma].value;
                let d = xm.cols() as f64;
                let mut dx = Matrix::zeros(xm.rows(), xm.cols());
                let mut dgamma = Matrix::zeros(1, xm.cols());
                let mut dbeta = Matrix::zeros(1, xm.cols());
                for r in 0..xm.rows() {
                    let row = xm.row(r);
                    let mean = row.iter().sum::<f64>() / d;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                    let gh: Vec<f64> = (0..xm.cols())
                        .map(|c| g.get(r, c) * gm.get(0, c))
                        .collect();
                    let mean_gh = gh.iter().sum::<f64>() / d;
                    let mean_gh_xhat =
                        gh.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d;
                    for c in 0..xm.cols() {
                        dx.set(r, c, (gh[c] - mean_gh - xhat[c] * mean_gh_xhat) * inv);
                        dgamma.data_mut()[c] += g.get(r, c) * xhat[c];
                        dbeta.data_mut()[c] += g.get(r, c);
                    }
                }
                if self.needs(*x) {
                    acc(grads, *x, dx)?;
                }
                if self.needs(*gamma) {
                    acc(grads, *gamma, dgamma)?;
                }
                if self.needs(*beta) {
                    acc(grads, *beta, dbeta)?;
                }
            }
            Op::SliceCols { x, start, len } => {
                if self.needs(*x) {
                    let m = &self.nodes[*x].value;
                    let mut dx = Matrix::zeros(m.rows(), m.cols());
                    for r in 0..m.rows() {
                        for c in 0..*len {
                            dx.set(r, start + c, g.get(r, c));
                        }
                    }
                    acc(grads, *x, dx)?;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p].value.cols();
                    if self.needs(p) {
                        let dp = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                        acc(grads, p, dp)?;
                    }
                    offset += w;
                }
            }
            Op::StackRows(parts) => {
                for (r, &p) in parts.iter().enumerate() {
                    if self.needs(p) {
                        acc(grads, p, Matrix::row_vector(g.row(r).to_vec()))?;
                    }
                }
            }
            Op::Row(x, index) => {
                if self.needs(*x) {
                    let m = &self.nodes[*x].value;
                    let mut dx = Matrix::zeros(m.rows(), m.cols());
                    for c in 0..m.cols() {
                        dx.set(*index, c, g.get(0, c));
                    }
                    acc(grads, *x, dx)?;
                }
            }
            Op::Bce {
                probs,
                labels,
                clamp,
            } => {
                if self.needs(*probs) {
                    let p = &self.nodes[*probs].value;
                    let scale = g.get(0, 0) / p.len() as f64;
                    let dp = p.zip_map(labels, |pv, yv| {
                        if pv < *clamp || pv > 1.0 - *clamp {
                            0.0
                        } else {
                            scale * (-yv / pv + (1.0 - yv) / (1.0 - pv))
                        }
                    })?;
                    acc(grads, *probs, dp)?;
                }
            }
        }
        Ok(())
    }
}
