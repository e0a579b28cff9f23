//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] is a tape: every operation computes its value eagerly and
//! records how to push gradients back to its inputs. Graphs are rebuilt per
//! example, which keeps variable-length documents simple. Node ids are
//! insertion-ordered, so the tape is already topologically sorted.

use crate::tensor::{dims2_of, softmax_stable, Tensor, TensorError};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// (r,k) x (k,c) -> (r,c)
    MatMul { a: NodeId, b: NodeId },
    /// Same-shape elementwise sum.
    Add { a: NodeId, b: NodeId },
    /// Row-vector broadcast: a(r,c) + b[c].
    AddRow { a: NodeId, b: NodeId },
    /// Column-vector broadcast: a(r,c) + b[r].
    AddCol { a: NodeId, b: NodeId },
    /// Same-shape elementwise product.
    Mul { a: NodeId, b: NodeId },
    /// Row-vector broadcast product: a(r,c) * b[c].
    MulRow { a: NodeId, b: NodeId },
    /// alpha * a + beta, elementwise.
    Affine { a: NodeId, alpha: f64 },
    Sigmoid { a: NodeId },
    Tanh { a: NodeId },
    Relu { a: NodeId },
    /// Row-wise softmax with max subtraction.
    SoftmaxRows { a: NodeId },
    ConcatCols { parts: Vec<NodeId> },
    ConcatRows { parts: Vec<NodeId> },
    SliceCols { a: NodeId, start: usize, len: usize },
    /// Single row as (1, c).
    Row { a: NodeId, index: usize },
    /// Column-wise max over rows: (r,c) -> [c]. Ties go to the lowest row.
    MaxOverRows { a: NodeId },
    /// Embedding lookup: rows of `a` selected by constant indices.
    GatherRows { a: NodeId, indices: Vec<usize> },
    /// Sliding windows of `width` consecutive rows, each flattened to one row.
    Im2Row { a: NodeId, width: usize },
    /// out[t][j] = w . tanh(keys[j] + queries[t])
    AttnScores {
        keys: NodeId,
        queries: NodeId,
        w: NodeId,
    },
    /// One element by flat index, as a [1] scalar.
    Pick { a: NodeId, index: usize },
    Ln { a: NodeId },
    /// Sum of all elements, as a [1] scalar.
    Sum { a: NodeId },
    /// Same-shape elementwise sum of many nodes.
    AddN { parts: Vec<NodeId> },
    /// Inverted dropout; mask entries are 0 or 1/(1-rate).
    Dropout { a: NodeId, mask: Vec<f64> },
    Transpose { a: NodeId },
    /// Shape change only; data order preserved.
    Reshape { a: NodeId },
}

#[derive(Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    /// Persistent gradient, populated for leaves by `backward`.
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a tensor as a leaf; `requires_grad` is taken from the tensor.
    pub fn leaf(&mut self, t: &Tensor) -> NodeId {
        self.push(
            Op::Leaf,
            t.shape().to_vec(),
            t.data().to_vec(),
            t.requires_grad,
        )
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<NodeId, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::DataShapeMismatch {
                len: data.len(),
                shape,
            });
        }
        Ok(self.push(Op::Leaf, shape, data, false))
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Accumulated leaf gradient, if `backward` has reached this node.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn dims2(&self, id: NodeId) -> (usize, usize) {
        dims2_of(&self.nodes[id.0].shape)
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> NodeId {
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value committed by {op:?}"
        );
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
            grad: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    // ---- forward ops ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (r, k) = self.dims2(a);
        let (k2, c) = self.dims2(b);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let value = matmul_raw(self.value(a), self.value(b), r, k, c);
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::MatMul { a, b }, vec![r, c], value, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::Add { a, b }, shape, value, rg))
    }

    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a);
        if self.value(b).len() != c {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let bv = self.value(b);
        let mut value = Vec::with_capacity(r * c);
        for row in self.value(a).chunks_exact(c) {
            value.extend(row.iter().zip(bv).map(|(x, y)| x + y));
        }
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::AddRow { a, b }, shape, value, rg))
    }

    pub fn add_col(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a);
        if self.value(b).len() != r {
            return Err(TensorError::ShapeMismatch {
                op: "add_col",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut value = Vec::with_capacity(r * c);
        for (i, row) in av.chunks_exact(c).enumerate() {
            value.extend(row.iter().map(|x| x + bv[i]));
        }
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::AddCol { a, b }, shape, value, rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::Mul { a, b }, shape, value, rg))
    }

    pub fn mul_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a);
        if self.value(b).len() != c {
            return Err(TensorError::ShapeMismatch {
                op: "mul_row",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let bv = self.value(b);
        let mut value = Vec::with_capacity(r * c);
        for row in self.value(a).chunks_exact(c) {
            value.extend(row.iter().zip(bv).map(|(x, y)| x * y));
        }
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::MulRow { a, b }, shape, value, rg))
    }

    /// `alpha * a + beta` elementwise; covers negation, scaling, `1 - x`.
    pub fn affine(&mut self, a: NodeId, alpha: f64, beta: f64) -> NodeId {
        let value: Vec<f64> = self.value(a).iter().map(|x| alpha * x + beta).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a]);
        self.push(Op::Affine { a, alpha }, shape, value, rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a]);
        self.push(Op::Sigmoid { a }, shape, value, rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value: Vec<f64> = self.value(a).iter().map(|x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a]);
        self.push(Op::Tanh { a }, shape, value, rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value: Vec<f64> = self.value(a).iter().map(|x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a]);
        self.push(Op::Relu { a }, shape, value, rg)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a);
        if c == 0 || r == 0 {
            return Err(TensorError::EmptyInput { op: "softmax" });
        }
        let mut value = Vec::with_capacity(r * c);
        for row in self.value(a).chunks_exact(c) {
            value.extend(softmax_stable(row)?);
        }
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a]);
        Ok(self.push(Op::SoftmaxRows { a }, shape, value, rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat_cols" });
        }
        let (r, _) = self.dims2(parts[0]);
        let mut total = 0;
        for &p in parts {
            let (rp, cp) = self.dims2(p);
            if rp != r {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            total += cp;
        }
        let mut value = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let (_, cp) = self.dims2(p);
                value.extend_from_slice(&self.value(p)[i * cp..(i + 1) * cp]);
            }
        }
        let rg = self.needs(parts);
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            vec![r, total],
            value,
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat_rows" });
        }
        let (_, c) = self.dims2(parts[0]);
        let mut total = 0;
        for &p in parts {
            let (rp, cp) = self.dims2(p);
            if cp != c {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            total += rp;
        }
        let mut value = Vec::with_capacity(total * c);
        for &p in parts {
            value.extend_from_slice(self.value(p));
        }
        let rg = self.needs(parts);
        Ok(self.push(
            Op::ConcatRows {
                parts: parts.to_vec(),
            },
            vec![total, c],
            value,
            rg,
        ))
    }

    pub fn slice_cols(
        &mut self,
        a: NodeId,
        start: usize,
        len: usize,
    ) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a);
        if start + len > c {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                size: c,
            });
        }
        let av = self.value(a);
        let mut value = Vec::with_capacity(r * len);
        for i in 0..r {
            value.extend_from_slice(&av[i * c + start..i * c + start + len]);
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Op::SliceCols { a, start, len }, vec![r, len], value, rg))
    }

    pub fn row(&mut self, a: NodeId, index: usize) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a);
        if index >= r {
            return Err(TensorError::IndexOutOfRange {
                op: "row",
                index,
                size: r,
            });
        }
        let value = self.value(a)[index * c..(index + 1) * c].to_vec();
        let rg = self.needs(&[a]);
        Ok(self.push(Op::Row { a, index }, vec![1, c], value, rg))
    }

    /// Max-over-time pooling: column-wise max across rows, `(r,c) -> [c]`.
    pub fn max_over_rows(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a);
        if r == 0 {
            return Err(TensorError::EmptyInput { op: "max_over_rows" });
        }
        let av = self.value(a);
        let mut value = av[..c].to_vec();
        for i in 1..r {
            for j in 0..c {
                if av[i * c + j] > value[j] {
                    value[j] = av[i * c + j];
                }
            }
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Op::MaxOverRows { a }, vec![c], value, rg))
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a);
        if indices.is_empty() {
            return Err(TensorError::EmptyInput { op: "gather_rows" });
        }
        let av = self.value(a);
        let mut value = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    size: r,
                });
            }
            value.extend_from_slice(&av[i * c..(i + 1) * c]);
        }
        let rg = self.needs(&[a]);
        Ok(self.push(
            Op::GatherRows {
                a,
                indices: indices.to_vec(),
            },
            vec![indices.len(), c],
            value,
            rg,
        ))
    }

    /// 1-D convolution windows: rows `i..i+width` flattened into row `i`.
    pub fn im2row(&mut self, a: NodeId, width: usize) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims2(a);
        if width == 0 || width > r {
            return Err(TensorError::BadShape {
                op: "im2row",
                expected: format!("window width in 1..={r}"),
                got: vec![width],
            });
        }
        let av = self.value(a);
        let out_rows = r - width + 1;
        let mut value = Vec::with_capacity(out_rows * width * c);
        for i in 0..out_rows {
            value.extend_from_slice(&av[i * c..(i + width) * c]);
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Op::Im2Row { a, width }, vec![out_rows, width * c], value, rg))
    }

    /// Additive tanh attention scores: `out[t][j] = w . tanh(keys[j] + queries[t])`.
    pub fn attn_scores(
        &mut self,
        keys: NodeId,
        queries: NodeId,
        w: NodeId,
    ) -> Result<NodeId, TensorError> {
        let (n, dk) = self.dims2(keys);
        let (q, dq) = self.dims2(queries);
        if dk != dq || self.value(w).len() != dk {
            return Err(TensorError::ShapeMismatch {
                op: "attn_scores",
                lhs: self.shape(keys).to_vec(),
                rhs: self.shape(queries).to_vec(),
            });
        }
        let kv = self.value(keys);
        let qv = self.value(queries);
        let wv = self.value(w);
        let mut value = Vec::with_capacity(q * n);
        for t in 0..q {
            let qrow = &qv[t * dk..(t + 1) * dk];
            for j in 0..n {
                let krow = &kv[j * dk..(j + 1) * dk];
                let mut s = 0.0;
                for k in 0..dk {
                    s += wv[k] * (krow[k] + qrow[k]).tanh();
                }
                value.push(s);
            }
        }
        let rg = self.needs(&[keys, queries, w]);
        Ok(self.push(Op::AttnScores { keys, queries, w }, vec![q, n], value, rg))
    }

    /// Extracts one element (by flat index) as a scalar node.
    pub fn pick(&mut self, a: NodeId, index: usize) -> Result<NodeId, TensorError> {
        let n = self.value(a).len();
        if index >= n {
            return Err(TensorError::IndexOutOfRange {
                op: "pick",
                index,
                size: n,
            });
        }
        let value = vec![self.value(a)[index]];
        let rg = self.needs(&[a]);
        Ok(self.push(Op::Pick { a, index }, vec![1], value, rg))
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        if let Some(index) = self.value(a).iter().position(|v| *v <= 0.0) {
            return Err(TensorError::NonFinite { op: "ln", index });
        }
        let value: Vec<f64> = self.value(a).iter().map(|x| x.ln()).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a]);
        Ok(self.push(Op::Ln { a }, shape, value, rg))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = vec![self.value(a).iter().sum()];
        let rg = self.needs(&[a]);
        self.push(Op::Sum { a }, vec![1], value, rg)
    }

    pub fn add_n(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "add_n" });
        }
        let shape = self.shape(parts[0]).to_vec();
        for &p in parts {
            if self.shape(p) != shape {
                return Err(TensorError::ShapeMismatch {
                    op: "add_n",
                    lhs: shape,
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let mut value = self.value(parts[0]).to_vec();
        for &p in &parts[1..] {
            for (acc, x) in value.iter_mut().zip(self.value(p)) {
                *acc += x;
            }
        }
        let rg = self.needs(parts);
        Ok(self.push(
            Op::AddN {
                parts: parts.to_vec(),
            },
            shape,
            value,
            rg,
        ))
    }

    /// Inverted dropout: in training, zeroes with probability `rate` and
    /// scales survivors by `1/(1-rate)`; at inference it is the identity.
    pub fn dropout<R: Rng>(
        &mut self,
        a: NodeId,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<NodeId, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidDropoutRate(rate));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs(&[a]);
        Ok(self.push(Op::Dropout { a, mask }, shape, value, rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims2(a);
        let av = self.value(a);
        let mut value = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                value[j * r + i] = av[i * c + j];
            }
        }
        let rg = self.needs(&[a]);
        self.push(Op::Transpose { a }, vec![c, r], value, rg)
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() {
            return Err(TensorError::DataShapeMismatch {
                len: self.value(a).len(),
                shape,
            });
        }
        let value = self.value(a).to_vec();
        let rg = self.needs(&[a]);
        Ok(self.push(Op::Reshape { a }, shape, value, rg))
    }

    // ---- backward ----

    /// Reverse-mode sweep from a scalar seed. Gradients of `requires_grad`
    /// leaves accumulate across calls; interior buffers are per-call.
    pub fn backward(&mut self, seed: NodeId) -> Result<(), TensorError> {
        if self.value(seed).len() != 1 {
            return Err(TensorError::SeedNotScalar(self.shape(seed).to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[seed.0] = Some(vec![1.0]);

        for i in (0..=seed.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                accumulate(&mut self.nodes[i].grad, &g);
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let needs = |id: NodeId| self.nodes[id.0].requires_grad;
        // Adds `src` into the pending gradient buffer of `id`.
        macro_rules! send {
            ($id:expr, $src:expr) => {
                if needs($id) {
                    let buf = grads[$id.0]
                        .get_or_insert_with(|| vec![0.0; self.nodes[$id.0].value.len()]);
                    for (a, b) in buf.iter_mut().zip($src) {
                        *a += b;
                    }
                }
            };
        }

        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (r, k) = self.dims2(*a);
                let (_, c) = self.dims2(*b);
                if needs(*a) {
                    // dA = g . B^T
                    let bv = self.value(*b);
                    let buf = grads[a.0].get_or_insert_with(|| vec![0.0; r * k]);
                    for i in 0..r {
                        for j in 0..c {
                            let gij = g[i * c + j];
                            if gij != 0.0 {
                                for p in 0..k {
                                    buf[i * k + p] += gij * bv[p * c + j];
                                }
                            }
                        }
                    }
                }
                if needs(*b) {
                    // dB = A^T . g
                    let av = self.value(*a);
                    let buf = grads[b.0].get_or_insert_with(|| vec![0.0; k * c]);
                    for i in 0..r {
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip != 0.0 {
                                for j in 0..c {
                                    buf[p * c + j] += aip * g[i * c + j];
                                }
                            }
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                send!(*a, g.iter());
                send!(*b, g.iter());
            }
            Op::AddRow { a, b } => {
                send!(*a, g.iter());
                if needs(*b) {
                    let (_, c) = self.dims2(*a);
                    let buf = grads[b.0].get_or_insert_with(|| vec![0.0; c]);
                    for row in g.chunks_exact(c) {
                        for (acc, x) in buf.iter_mut().zip(row) {
                            *acc += x;
                        }
                    }
                }
            }
            Op::AddCol { a, b } => {
                send!(*a, g.iter());
                if needs(*b) {
                    let (r, c) = self.dims2(*a);
                    let buf = grads[b.0].get_or_insert_with(|| vec![0.0; r]);
                    for (i, row) in g.chunks_exact(c).enumerate() {
                        buf[i] += row.iter().sum::<f64>();
                    }
                }
            }
            Op::Mul { a, b } => {
                if needs(*a) {
                    let src: Vec<f64> = g.iter().zip(self.value(*b)).map(|(x, y)| x * y).collect();
                    send!(*a, src.iter());
                }
                if needs(*b) {
                    let src: Vec<f64> = g.iter().zip(self.value(*a)).map(|(x, y)| x * y).collect();
                    send!(*b, src.iter());
                }
            }
            Op::MulRow { a, b } => {
                let (_, c) = self.dims2(*a);
                if needs(*a) {
                    let bv = self.value(*b);
                    let buf = grads[a.0].get_or_insert_with(|| vec![0.0; self.value(*a).len()]);
                    for (grow, brow) in buf.chunks_exact_mut(c).zip(g.chunks_exact(c)) {
                        for j in 0..c {
                            grow[j] += brow[j] * bv[j];
                        }
                    }
                }
                if needs(*b) {
                    let av = self.value(*a);
                    let buf = grads[b.0].get_or_insert_with(|| vec![0.0; c]);
                    for (arow, grow) in av.chunks_exact(c).zip(g.chunks_exact(c)) {
                        for j in 0..c {
                            buf[j] += arow[j] * grow[j];
                        }
                    }
                }
            }
            Op::Affine { a, alpha } => {
                let src: Vec<f64> = g.iter().map(|x| x * alpha).collect();
                send!(*a, src.iter());
            }
            Op::Sigmoid { a } => {
                let src: Vec<f64> = g
                    .iter()
                    .zip(&node.value)
                    .map(|(x, y)| x * y * (1.0 - y))
                    .collect();
                send!(*a, src.iter());
            }
            Op::Tanh { a } => {
                let src: Vec<f64> = g
                    .iter()
                    .zip(&node.value)
                    .map(|(x, y)| x * (1.0 - y * y))
                    .collect();
                send!(*a, src.iter());
            }
            Op::Relu { a } => {
                let src: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a))
                    .map(|(x, v)| if *v > 0.0 { *x } else { 0.0 })
                    .collect();
                send!(*a, src.iter());
            }
            Op::SoftmaxRows { a } => {
                // dx = y * (g - (g . y)) per row
                let (_, c) = self.dims2(*a);
                let mut src = Vec::with_capacity(g.len());
                for (grow, yrow) in g.chunks_exact(c).zip(node.value.chunks_exact(c)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                    src.extend(grow.iter().zip(yrow).map(|(x, y)| y * (x - dot)));
                }
                send!(*a, src.iter());
            }
            Op::ConcatCols { parts } => {
                let (r, total) = dims2_of(&node.shape);
                let mut offset = 0;
                for &p in parts {
                    let (_, cp) = self.dims2(p);
                    if needs(p) {
                        let buf = grads[p.0].get_or_insert_with(|| vec![0.0; r * cp]);
                        for i in 0..r {
                            for j in 0..cp {
                                buf[i * cp + j] += g[i * total + offset + j];
                            }
                        }
                    }
                    offset += cp;
                }
            }
            Op::ConcatRows { parts } => {
                let (_, c) = dims2_of(&node.shape);
                let mut offset = 0;
                for &p in parts {
                    let (rp, _) = self.dims2(p);
                    send!(p, g[offset * c..(offset + rp) * c].iter());
                    offset += rp;
                }
            }
            Op::SliceCols { a, start, len } => {
                if needs(*a) {
                    let (r, c) = self.dims2(*a);
                    let buf = grads[a.0].get_or_insert_with(|| vec![0.0; r * c]);
                    for i in 0..r {
                        for j in 0..*len {
                            buf[i * c + start + j] += g[i * len + j];
                        }
                    }
                }
            }
            Op::Row { a, index } => {
                if needs(*a) {
                    let (r, c) = self.dims2(*a);
                    let buf = grads[a.0].get_or_insert_with(|| vec![0.0; r * c]);
                    for j in 0..c {
                        buf[index * c + j] += g[j];
                    }
                }
            }
            Op::MaxOverRows { a } => {
                if needs(*a) {
                    let (r, c) = self.dims2(*a);
                    let av = self.value(*a);
                    let buf = grads[a.0].get_or_insert_with(|| vec![0.0; r * c]);
                    for j in 0..c {
                        // first row attaining the max gets the gradient
                        let mut best = 0;
                        for i in 1..r {
                            if av[i * c + j] > av[best * c + j] {
                                best = i;
                            }
                        }
                        buf[best * c + j] += g[j];
                    }
                }
            }
            Op::GatherRows { a, indices } => {
                if needs(*a) {
                    let (r, c) = self.dims2(*a);
                    let buf = grads[a.0].get_or_insert_with(|| vec![0.0; r * c]);
                    for (pos, &i) in indices.iter().enumerate() {
                        for j in 0..c {
                            buf[i * c + j] += g[pos * c + j];
                        }
                    }
                }
            }
            Op::Im2Row { a, width } => {
                if needs(*a) {
                    let (r, c) = self.dims2(*a);
                    let buf = grads[a.0].get_or_insert_with(|| vec![0.0; r * c]);
                    let out_rows = r - width + 1;
                    for i in 0..out_rows {
                        for w in 0..*width {
                            for j in 0..c {
                                buf[(i + w) * c + j] += g[i * (width * c) + w * c + j];
                            }
                        }
                    }
                }
            }
            Op::AttnScores { keys, queries, w } => {
                let (n, dk) = self.dims2(*keys);
                let (q, _) = self.dims2(*queries);
                let kv = self.value(*keys);
                let qv = self.value(*queries);
                let wv = self.value(*w);
                let mut dkeys = vec![0.0; needs(*keys) as usize * n * dk];
                let mut dqueries = vec![0.0; needs(*queries) as usize * q * dk];
                let mut dw = vec![0.0; needs(*w) as usize * dk];
                for t in 0..q {
                    let qrow = &qv[t * dk..(t + 1) * dk];
                    for j in 0..n {
                        let gij = g[t * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        let krow = &kv[j * dk..(j + 1) * dk];
                        for k in 0..dk {
                            let th = (krow[k] + qrow[k]).tanh();
                            let sech2 = 1.0 - th * th;
                            let common = gij * wv[k] * sech2;
                            if !dkeys.is_empty() {
                                dkeys[j * dk + k] += common;
                            }
                            if !dqueries.is_empty() {
                                dqueries[t * dk + k] += common;
                            }
                            if !dw.is_empty() {
                                dw[k] += gij * th;
                            }
                        }
                    }
                }
                if !dkeys.is_empty() {
                    send!(*keys, dkeys.iter());
                }
                if !dqueries.is_empty() {
                    send!(*queries, dqueries.iter());
                }
                if !dw.is_empty() {
                    send!(*w, dw.iter());
                }
            }
            Op::Pick { a, index } => {
                if needs(*a) {
                    let buf = grads[a.0].get_or_insert_with(|| vec![0.0; self.value(*a).len()]);
                    buf[*index] += g[0];
                }
            }
            Op::Ln { a } => {
                let src: Vec<f64> = g.iter().zip(self.value(*a)).map(|(x, v)| x / v).collect();
                send!(*a, src.iter());
            }
            Op::Sum { a } => {
                if needs(*a) {
                    let buf = grads[a.0].get_or_insert_with(|| vec![0.0; self.value(*a).len()]);
                    for v in buf.iter_mut() {
                        *v += g[0];
                    }
                }
            }
            Op::AddN { parts } => {
                for &p in parts {
                    send!(p, g.iter());
                }
            }
            Op::Dropout { a, mask } => {
                let src: Vec<f64> = g.iter().zip(mask).map(|(x, m)| x * m).collect();
                send!(*a, src.iter());
            }
            Op::Transpose { a } => {
                if needs(*a) {
                    let (r, c) = self.dims2(*a);
                    let buf = grads[a.0].get_or_insert_with(|| vec![0.0; r * c]);
                    for i in 0..r {
                        for j in 0..c {
                            buf[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::Reshape { a } => {
                send!(*a, g.iter());
            }
        }
    }
}

fn accumulate(target: &mut Option<Vec<f64>>, src: &[f64]) {
    match target.as_mut() {
        Some(t) => {
            for (a, b) in t.iter_mut().zip(src) {
                *a += b;
            }
        }
        None => *target = Some(src.to_vec()),
    }
}

/// Plain triple-loop matmul on row-major buffers (ikj order).
pub fn matmul_raw(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * c..(p + 1) * c];
            let orow = &mut out[i * c..(i + 1) * c];
            for j in 0..c {
                orow[j] += aip * brow[j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf_grad(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::from_vec(shape, data).unwrap().with_grad()
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut g = Graph::new();
        let x = g.constant(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = g.relu(x);
        assert_eq!(g.value(y), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut g = Graph::new();
        let x = g.constant(vec![1], vec![0.0]).unwrap();
        let y = g.sigmoid(x);
        assert!((g.value(y)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matmul_shapes_and_values_match_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Tensor::uniform(vec![2, 3], -1.0, 1.0, &mut rng);
        let b = Tensor::uniform(vec![3, 4], -1.0, 1.0, &mut rng);
        let mut g = Graph::new();
        let na = g.leaf(&a);
        let nb = g.leaf(&b);
        let nc = g.matmul(na, nb).unwrap();
        assert_eq!(g.shape(nc), &[2, 4]);
        // independent naive triple loop, ijk order
        for i in 0..2 {
            for j in 0..4 {
                let mut s = 0.0;
                for p in 0..3 {
                    s += a.data()[i * 3 + p] * b.data()[p * 4 + j];
                }
                assert!((g.value(nc)[i * 4 + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let mut g = Graph::new();
        let a = g.constant(vec![2, 3], vec![0.0; 6]).unwrap();
        let b = g.constant(vec![2, 3], vec![0.0; 6]).unwrap();
        let err = g.matmul(a, b).unwrap_err();
        match err {
            TensorError::ShapeMismatch { lhs, rhs, .. } => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn backward_square_gives_two_x() {
        // f(x) = sum(x*x), df/dx = 2x
        let t = leaf_grad(vec![1], vec![3.0]);
        let mut g = Graph::new();
        let x = g.leaf(&t);
        let sq = g.mul(x, x).unwrap();
        let f = g.sum(sq);
        g.backward(f).unwrap();
        assert!((g.grad(x).unwrap()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn backward_sigmoid_at_zero_quarter() {
        let t = leaf_grad(vec![4], vec![0.0; 4]);
        let mut g = Graph::new();
        let x = g.leaf(&t);
        let s = g.sigmoid(x);
        let f = g.sum(s);
        g.backward(f).unwrap();
        for v in g.grad(x).unwrap() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_requires_scalar_seed() {
        let t = leaf_grad(vec![2], vec![1.0, 2.0]);
        let mut g = Graph::new();
        let x = g.leaf(&t);
        assert!(matches!(
            g.backward(x),
            Err(TensorError::SeedNotScalar(_))
        ));
    }

    #[test]
    fn repeated_backward_accumulates_leaf_grads() {
        let t = leaf_grad(vec![1], vec![2.0]);
        let mut g = Graph::new();
        let x = g.leaf(&t);
        let f = g.sum(x);
        g.backward(f).unwrap();
        g.backward(f).unwrap();
        assert!((g.grad(x).unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn concat_cols_backward_splits_gradient_exactly() {
        let ta = leaf_grad(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let tb = leaf_grad(vec![2, 1], vec![5.0, 6.0]);
        let mut g = Graph::new();
        let a = g.leaf(&ta);
        let b = g.leaf(&tb);
        let cat = g.concat_cols(&[a, b]).unwrap();
        // weight each output element distinctly so the split is observable
        let w = g
            .constant(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
            .unwrap();
        let prod = g.mul(cat, w).unwrap();
        let f = g.sum(prod);
        g.backward(f).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[1.0, 2.0, 4.0, 5.0]);
        assert_eq!(g.grad(b).unwrap(), &[3.0, 6.0]);
    }

    #[test]
    fn max_over_rows_routes_gradient_to_first_max() {
        let t = leaf_grad(vec![3, 2], vec![1.0, 5.0, 7.0, 5.0, 7.0, 2.0]);
        let mut g = Graph::new();
        let x = g.leaf(&t);
        let m = g.max_over_rows(x).unwrap();
        assert_eq!(g.value(m), &[7.0, 5.0]);
        let f = g.sum(m);
        g.backward(f).unwrap();
        // col 0: rows 1 and 2 tie at 7.0 -> row 1 wins; col 1: rows 0 and 1 tie at 5.0 -> row 0
        assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dropout_identity_at_inference_and_rate_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = leaf_grad(vec![4], vec![1.0, 2.0, 3.0, 4.0]);
        let mut g = Graph::new();
        let x = g.leaf(&t);
        let a = g.dropout(x, 0.5, false, &mut rng).unwrap();
        let b = g.dropout(x, 0.0, true, &mut rng).unwrap();
        assert_eq!(a, x);
        assert_eq!(b, x);
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = leaf_grad(vec![2], vec![1.0, 2.0]);
        let mut g = Graph::new();
        let x = g.leaf(&t);
        assert!(matches!(
            g.dropout(x, 1.0, true, &mut rng),
            Err(TensorError::InvalidDropoutRate(_))
        ));
    }

    #[test]
    fn dropout_preserves_mean_over_large_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let t = Tensor::filled(vec![100_000], 1.0);
        let mut g = Graph::new();
        let x = g.leaf(&t);
        let d = g.dropout(x, 0.2, true, &mut rng).unwrap();
        let mean: f64 = g.value(d).iter().sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn softmax_rows_each_row_sums_to_one() {
        let mut g = Graph::new();
        let x = g
            .constant(vec![2, 3], vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0])
            .unwrap();
        let s = g.softmax_rows(x).unwrap();
        for row in g.value(s).chunks_exact(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_values_are_deterministic_across_rebuilds() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let a = Tensor::uniform(vec![3, 3], -1.0, 1.0, &mut rng);
            let mut g = Graph::new();
            let na = g.leaf(&a);
            let t = g.tanh(na);
            let s = g.softmax_rows(t).unwrap();
            g.value(s).to_vec()
        };
        assert_eq!(build(), build());
    }
}
