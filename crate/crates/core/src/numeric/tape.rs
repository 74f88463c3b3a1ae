//! Reverse-mode gradient tape.
//!
//! Every operation appends a node holding its forward value and enough
//! information to run its vector-Jacobian product. `backward` walks the
//! nodes in reverse insertion order, which is a valid topological order
//! because operands are always recorded before their consumers.

use std::rc::Rc;

use super::tensor::kernels;
use super::{activation, NumericError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sparse gather/scatter pattern for attention over neighborhoods.
///
/// Entry `k` is a message from row `src[k]` to row `dst[k]` carrying weight
/// `weight[k]`. Entries are grouped by destination: the entries aimed at
/// row `v` occupy `offsets[v]..offsets[v + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeIndex {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub weight: Vec<f64>,
    pub offsets: Vec<usize>,
}

impl EdgeIndex {
    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_entries(&self) -> usize {
        self.src.len()
    }

    pub fn segment(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Rc<Vec<f64>>),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Sum(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Rc<Vec<usize>>),
    RowDot(Var, Var),
    MaskedSoftmaxRows(Var),
    EdgeScores(Var, Var, Rc<EdgeIndex>),
    SegmentSoftmax(Var, Rc<EdgeIndex>),
    Aggregate(Var, Var, Rc<EdgeIndex>),
    BlockMatMulNt(Var, Var, usize),
    BlockMatMul(Var, Var, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Lower clamp for probabilities inside logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    attention_flops: u64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-adds spent in block attention products (score and
    /// aggregation), counted as 2 flops each.
    pub fn attention_flops(&self) -> u64 {
        self.attention_flops
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf whose gradient is wanted.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.len() != y.len() || x.rows() != y.rows() {
            return Err(NumericError::Shape(format!(
                "add of {:?} and {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// `a[m x n] + b` where `b` holds `n` values broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (m, n) = self.dims(a);
        let bias = self.value(b);
        if bias.len() != n {
            return Err(NumericError::Shape(format!(
                "row broadcast of {} values onto {m}x{n}",
                bias.len()
            )));
        }
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(bias.data()) {
                *o += bv;
            }
        }
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRow(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(NumericError::Shape(format!(
                "elementwise product of {:?} and {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| c * x);
        self.push(out, Op::Scale(a, c), &[a])
    }

    /// Elementwise product with fixed factors (dropout masks).
    pub fn mul_const(&mut self, a: Var, factors: Vec<f64>) -> Result<Var, NumericError> {
        let x = self.value(a);
        if factors.len() != x.len() {
            return Err(NumericError::Shape(format!(
                "{} factors for {:?}",
                factors.len(),
                x.shape()
            )));
        }
        let data = x.data().iter().zip(&factors).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::MulConst(a, Rc::new(factors)), &[a]))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = activation::leaky_relu(self.value(a), slope);
        self.push(out, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let out = activation::elu(self.value(a));
        self.push(out, Op::Elu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = activation::sigmoid(self.value(a));
        self.push(out, Op::Sigmoid(a), &[a])
    }

    /// `ln(max(sigmoid(x), 1e-12))` elementwise.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| activation::sigmoid_scalar(x).max(LOG_CLAMP).ln());
        self.push(out, Op::LogSigmoid(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let first = *parts
            .first()
            .ok_or_else(|| NumericError::Shape("concat of nothing".into()))?;
        if parts.len() == 1 {
            return Ok(first);
        }
        let m = self.dims(first).0;
        if parts.iter().any(|&p| self.dims(p).0 != m) {
            return Err(NumericError::Shape("column concat with differing row counts".into()));
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new(vec![m, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericError> {
        let (m, n) = self.dims(a);
        if start >= end || end > n {
            return Err(NumericError::Shape(format!("columns {start}..{end} of {m}x{n}")));
        }
        let x = self.value(a);
        let mut data = Vec::with_capacity(m * (end - start));
        for i in 0..m {
            data.extend_from_slice(&x.row(i)[start..end]);
        }
        let out = Tensor::new(vec![m, end - start], data)?;
        Ok(self.push(out, Op::SliceCols(a, start), &[a]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let first = *parts
            .first()
            .ok_or_else(|| NumericError::Shape("concat of nothing".into()))?;
        if parts.len() == 1 {
            return Ok(first);
        }
        let n = self.dims(first).1;
        if parts.iter().any(|&p| self.dims(p).1 != n) {
            return Err(NumericError::Shape("row concat with differing column counts".into()));
        }
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
            m += self.dims(p).0;
        }
        let out = Tensor::new(vec![m, n], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericError> {
        let (m, n) = self.dims(a);
        if start >= end || end > m {
            return Err(NumericError::Shape(format!("rows {start}..{end} of {m}x{n}")));
        }
        let data = self.value(a).data()[start * n..end * n].to_vec();
        let out = Tensor::new(vec![end - start, n], data)?;
        Ok(self.push(out, Op::SliceRows(a, start), &[a]))
    }

    /// Output row `i` is input row `index[i]`; rows may repeat.
    pub fn gather_rows(&mut self, a: Var, index: Rc<Vec<usize>>) -> Result<Var, NumericError> {
        let (m, n) = self.dims(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= m) {
            return Err(NumericError::Shape(format!("gather of row {bad} from {m} rows")));
        }
        let x = self.value(a);
        let mut data = Vec::with_capacity(index.len() * n);
        for &i in index.iter() {
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::new(vec![index.len(), n], data)?;
        Ok(self.push(out, Op::GatherRows(a, index), &[a]))
    }

    /// Per-row inner products of two equally shaped matrices, as an `[m]` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (m, n) = self.dims(a);
        if self.dims(b) != (m, n) {
            return Err(NumericError::Shape("row_dot of differently shaped matrices".into()));
        }
        let (x, y) = (self.value(a), self.value(b));
        let data = (0..m).map(|i| kernels::dot(x.row(i), y.row(i))).collect();
        let out = Tensor::new(vec![m], data)?;
        Ok(self.push(out, Op::RowDot(a, b), &[a, b]))
    }

    /// Row-wise softmax of `a + mask`, where the additive mask has entries
    /// in `{0, -inf}` and row `i` of `a` uses mask row `i % mask.rows()`.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: Rc<Tensor>) -> Result<Var, NumericError> {
        let (m, n) = self.dims(a);
        if mask.cols() != n || m % mask.rows() != 0 {
            return Err(NumericError::Shape(format!(
                "mask {:?} does not tile {m}x{n}",
                mask.shape()
            )));
        }
        let x = self.value(a);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            activation::masked_softmax_into(
                x.row(i),
                mask.row(i % mask.rows()),
                &mut data[i * n..(i + 1) * n],
            )?;
        }
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(out, Op::MaskedSoftmaxRows(a), &[a]))
    }

    /// Attention logits per edge entry: `w_k * (src[src_k] + dst[dst_k])`,
    /// where `src` and `dst` are per-row scores.
    pub fn edge_scores(
        &mut self,
        src: Var,
        dst: Var,
        edges: Rc<EdgeIndex>,
    ) -> Result<Var, NumericError> {
        let rows = edges.num_rows();
        if self.value(src).len() != rows || self.value(dst).len() != rows {
            return Err(NumericError::Shape(format!(
                "edge scores need {rows} per-row scores"
            )));
        }
        let (s, d) = (self.value(src).data(), self.value(dst).data());
        let data = (0..edges.num_entries())
            .map(|k| edges.weight[k] * (s[edges.src[k]] + d[edges.dst[k]]))
            .collect();
        let out = Tensor::new(vec![edges.num_entries()], data)?;
        Ok(self.push(out, Op::EdgeScores(src, dst, edges), &[src, dst]))
    }

    /// Softmax within each destination segment of an edge list.
    pub fn segment_softmax(&mut self, a: Var, edges: Rc<EdgeIndex>) -> Result<Var, NumericError> {
        let x = self.value(a);
        if x.len() != edges.num_entries() {
            return Err(NumericError::Shape("segment softmax length mismatch".into()));
        }
        let mut data = vec![0.0; x.len()];
        for v in 0..edges.num_rows() {
            let seg = edges.segment(v);
            if seg.is_empty() {
                continue;
            }
            activation::softmax_into(&x.data()[seg.clone()], &mut data[seg]);
        }
        let out = Tensor::new(vec![x.len()], data)?;
        Ok(self.push(out, Op::SegmentSoftmax(a, edges), &[a]))
    }

    /// `out[v] = sum over entries k aimed at v of coef[k] * h[src_k]`.
    pub fn aggregate(&mut self, coef: Var, h: Var, edges: Rc<EdgeIndex>) -> Result<Var, NumericError> {
        let (m, n) = self.dims(h);
        if self.value(coef).len() != edges.num_entries() || edges.num_rows() != m {
            return Err(NumericError::Shape("aggregate shape mismatch".into()));
        }
        let (c, hv) = (self.value(coef).data(), self.value(h));
        let mut data = vec![0.0; m * n];
        for v in 0..m {
            let out = &mut data[v * n..(v + 1) * n];
            for k in edges.segment(v) {
                let ck = c[k];
                for (o, &x) in out.iter_mut().zip(hv.row(edges.src[k])) {
                    *o += ck * x;
                }
            }
        }
        let out = Tensor::new(vec![m, n], data)?;
        Ok(self.push(out, Op::Aggregate(coef, h, edges), &[coef, h]))
    }

    /// Block-diagonal `A B^T`: both operands are `(B * T) x F`, split into `B`
    /// consecutive blocks of `block` rows; the result is `(B * T) x T`.
    pub fn block_matmul_nt(&mut self, a: Var, b: Var, block: usize) -> Result<Var, NumericError> {
        let (m, f) = self.dims(a);
        if self.dims(b) != (m, f) || block == 0 || m % block != 0 {
            return Err(NumericError::Shape("block_matmul_nt shape mismatch".into()));
        }
        let mut data = vec![0.0; m * block];
        let (x, y) = (self.value(a).data(), self.value(b).data());
        for blk in 0..m / block {
            let r = blk * block;
            kernels::matmul_nt(
                &x[r * f..(r + block) * f],
                &y[r * f..(r + block) * f],
                &mut data[r * block..(r + block) * block],
                block,
                f,
                block,
            );
        }
        self.attention_flops += 2 * (m * block * f) as u64;
        let out = Tensor::new(vec![m, block], data)?;
        Ok(self.push(out, Op::BlockMatMulNt(a, b, block), &[a, b]))
    }

    /// Block-diagonal `P V`: `P` is `(B * T) x T`, `V` is `(B * T) x F`.
    pub fn block_matmul(&mut self, p: Var, v: Var, block: usize) -> Result<Var, NumericError> {
        let (m, t) = self.dims(p);
        let (m2, f) = self.dims(v);
        if t != block || m2 != m || block == 0 || m % block != 0 {
            return Err(NumericError::Shape("block_matmul shape mismatch".into()));
        }
        let mut data = vec![0.0; m * f];
        let (x, y) = (self.value(p).data(), self.value(v).data());
        for blk in 0..m / block {
            let r = blk * block;
            kernels::matmul(
                &x[r * block..(r + block) * block],
                &y[r * f..(r + block) * f],
                &mut data[r * f..(r + block) * f],
                block,
                block,
                f,
            );
        }
        self.attention_flops += 2 * (m * block * f) as u64;
        let out = Tensor::new(vec![m, f], data)?;
        Ok(self.push(out, Op::BlockMatMul(p, v, block), &[p, v]))
    }

    /// Gradients of the scalar `loss` with respect to every recorded value
    /// that depends on a [`Tape::param`] leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericError> {
        if self.value(loss).len() != 1 {
            return Err(NumericError::Shape(format!(
                "backward needs a scalar, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (before, rest) = grads.split_at_mut(i);
            let Some(g) = rest[0].as_deref() else {
                continue;
            };
            self.node_backward(node, g, before);
        }
        Ok(Gradients { grads })
    }

    fn node_backward(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let (m, k, n) = (x.rows(), x.cols(), y.cols());
                if let Some(ga) = acc(nodes, grads, *a) {
                    kernels::matmul_nt(g, y.data(), ga, m, n, k);
                }
                if let Some(gb) = acc(nodes, grads, *b) {
                    kernels::matmul_tn(x.data(), g, gb, m, k, n);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = acc(nodes, grads, v) {
                        add_into(gv, g);
                    }
                }
            }
            Op::AddRow(a, b) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    add_into(ga, g);
                }
                let n = val(*b).len();
                if let Some(gb) = acc(nodes, grads, *b) {
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a).data(), val(*b).data());
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((o, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *o += gi * yi;
                    }
                }
                if let Some(gb) = acc(nodes, grads, *b) {
                    for ((o, &gi), &xi) in gb.iter_mut().zip(g).zip(x) {
                        *o += gi * xi;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    for (o, &gi) in ga.iter_mut().zip(g) {
                        *o += c * gi;
                    }
                }
            }
            Op::MulConst(a, f) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((o, &gi), &fi) in ga.iter_mut().zip(g).zip(f.iter()) {
                        *o += gi * fi;
                    }
                }
            }
            Op::LeakyRelu(a, slope) => {
                let x = val(*a).data();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        *o += if xi > 0.0 { gi } else { slope * gi };
                    }
                }
            }
            Op::Elu(a) => {
                let x = val(*a).data();
                let y = node.value.data();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for (((o, &gi), &xi), &yi) in ga.iter_mut().zip(g).zip(x).zip(y) {
                        *o += if xi > 0.0 { gi } else { gi * (yi + 1.0) };
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((o, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *o += gi * yi * (1.0 - yi);
                    }
                }
            }
            Op::LogSigmoid(a) => {
                let x = val(*a).data();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        let s = activation::sigmoid_scalar(xi);
                        if s > LOG_CLAMP {
                            *o += gi * (1.0 - s);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let (m, n) = (val(p).rows(), val(p).cols());
                    if let Some(gp) = acc(nodes, grads, p) {
                        for i in 0..m {
                            add_into(
                                &mut gp[i * n..(i + 1) * n],
                                &g[i * total + offset..i * total + offset + n],
                            );
                        }
                    }
                    offset += n;
                }
            }
            Op::SliceCols(a, start) => {
                let n = val(*a).cols();
                let w = node.value.cols();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for (i, grow) in g.chunks(w).enumerate() {
                        add_into(&mut ga[i * n + start..i * n + start + w], grow);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    if let Some(gp) = acc(nodes, grads, p) {
                        add_into(gp, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::SliceRows(a, start) => {
                let n = val(*a).cols();
                if let Some(ga) = acc(nodes, grads, *a) {
                    add_into(&mut ga[start * n..start * n + g.len()], g);
                }
            }
            Op::GatherRows(a, index) => {
                let n = val(*a).cols();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for (r, &src) in index.iter().enumerate() {
                        add_into(&mut ga[src * n..(src + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::RowDot(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let n = x.cols();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for (i, &gi) in g.iter().enumerate() {
                        axpy(&mut ga[i * n..(i + 1) * n], gi, y.row(i));
                    }
                }
                if let Some(gb) = acc(nodes, grads, *b) {
                    for (i, &gi) in g.iter().enumerate() {
                        axpy(&mut gb[i * n..(i + 1) * n], gi, x.row(i));
                    }
                }
            }
            Op::MaskedSoftmaxRows(a) => {
                let n = node.value.cols();
                let y = node.value.data();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((orow, grow), yrow) in ga.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                        softmax_backward(orow, grow, yrow);
                    }
                }
            }
            Op::EdgeScores(src, dst, edges) => {
                if let Some(gs) = acc(nodes, grads, *src) {
                    for k in 0..edges.num_entries() {
                        gs[edges.src[k]] += edges.weight[k] * g[k];
                    }
                }
                if let Some(gd) = acc(nodes, grads, *dst) {
                    for k in 0..edges.num_entries() {
                        gd[edges.dst[k]] += edges.weight[k] * g[k];
                    }
                }
            }
            Op::SegmentSoftmax(a, edges) => {
                let y = node.value.data();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for v in 0..edges.num_rows() {
                        let seg = edges.segment(v);
                        softmax_backward(&mut ga[seg.clone()], &g[seg.clone()], &y[seg]);
                    }
                }
            }
            Op::Aggregate(coef, h, edges) => {
                let hv = val(*h);
                let n = hv.cols();
                if wants(*coef) {
                    let gc = acc(nodes, grads, *coef).expect("coef requires grad");
                    for v in 0..edges.num_rows() {
                        let grow = &g[v * n..(v + 1) * n];
                        for k in edges.segment(v) {
                            gc[k] += kernels::dot(grow, hv.row(edges.src[k]));
                        }
                    }
                }
                let c = val(*coef).data();
                if let Some(gh) = acc(nodes, grads, *h) {
                    for v in 0..edges.num_rows() {
                        let grow = &g[v * n..(v + 1) * n];
                        for k in edges.segment(v) {
                            let s = edges.src[k];
                            axpy(&mut gh[s * n..(s + 1) * n], c[k], grow);
                        }
                    }
                }
            }
            Op::BlockMatMulNt(a, b, block) => {
                let block = *block;
                let (x, y) = (val(*a), val(*b));
                let f = x.cols();
                let m = x.rows();
                for blk in 0..m / block {
                    let r = blk * block;
                    let gblk = &g[r * block..(r + block) * block];
                    // dA = G B, dB = G^T A
                    if let Some(ga) = acc(nodes, grads, *a) {
                        kernels::matmul(
                            gblk,
                            &y.data()[r * f..(r + block) * f],
                            &mut ga[r * f..(r + block) * f],
                            block,
                            block,
                            f,
                        );
                    }
                    if let Some(gb) = acc(nodes, grads, *b) {
                        kernels::matmul_tn(
                            gblk,
                            &x.data()[r * f..(r + block) * f],
                            &mut gb[r * f..(r + block) * f],
                            block,
                            block,
                            f,
                        );
                    }
                }
            }
            Op::BlockMatMul(p, v, block) => {
                let block = *block;
                let (pv, vv) = (val(*p), val(*v));
                let f = vv.cols();
                let m = pv.rows();
                for blk in 0..m / block {
                    let r = blk * block;
                    let gblk = &g[r * f..(r + block) * f];
                    // dP = G V^T, dV = P^T G
                    if let Some(gp) = acc(nodes, grads, *p) {
                        kernels::matmul_nt(
                            gblk,
                            &vv.data()[r * f..(r + block) * f],
                            &mut gp[r * block..(r + block) * block],
                            block,
                            f,
                            block,
                        );
                    }
                    if let Some(gv) = acc(nodes, grads, *v) {
                        kernels::matmul_tn(
                            &pv.data()[r * block..(r + block) * block],
                            gblk,
                            &mut gv[r * f..(r + block) * f],
                            block,
                            block,
                            f,
                        );
                    }
                }
            }
        }
    }
}

fn acc<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(x) {
        *d += a * s;
    }
}

fn softmax_backward(out: &mut [f64], g: &[f64], y: &[f64]) {
    let inner = kernels::dot(g, y);
    for ((o, &gi), &yi) in out.iter_mut().zip(g).zip(y) {
        *o += yi * (gi - inner);
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when `v` was not reached from the loss or does not depend on
    /// any parameter.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as an owned vector, zeros when unreached.
    pub fn take_or_zeros(&mut self, v: Var, len: usize) -> Vec<f64> {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| vec![0.0; len])
    }
}
