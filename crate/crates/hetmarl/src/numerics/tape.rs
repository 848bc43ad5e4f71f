//! Reverse-mode gradient tape.
//!
//! A [`Tape`] records every primitive operation of one forward pass. Each
//! node owns its output value; [`Tape::backward`] walks the record once in
//! reverse (which is reverse topological order, since an op is always
//! appended after its inputs) and accumulates gradients.
//!
//! A tape belongs to exactly one forward pass and is never shared.

use super::tensor::{matmul_nn, matmul_nt, matmul_tn, sigmoid_scalar, Real, Tensor};

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

enum Op<R: Real> {
    /// Parameter or constant input; no inputs of its own.
    Leaf,
    /// a[m,k] * b[n,k]^T -> [m,n]
    MatMulNT { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: R },
    /// a scaled by the idx-th element of node s.
    ScaleByElem { a: NodeId, s: NodeId, idx: usize },
    /// [m,n] + bias[n] broadcast over rows.
    AddBias { a: NodeId, bias: NodeId },
    Sigmoid { a: NodeId },
    LeakyRelu { a: NodeId, slope: R },
    Ln { a: NodeId },
    /// out[i] = a[idx[i]] (rows; duplicates allowed).
    GatherRows { a: NodeId, idx: Vec<usize> },
    /// out[idx[i]] += a[i].
    ScatterAddRows { a: NodeId, idx: Vec<usize> },
    /// Row i multiplied by the constant w[i].
    ScaleRows { a: NodeId, w: Vec<R> },
    /// Row i multiplied by element i of node s (shape [m] or [m,1]).
    ScaleRowsBy { a: NodeId, s: NodeId },
    ConcatCols { parts: Vec<NodeId> },
    /// Sum of all elements -> scalar [1].
    Sum { a: NodeId },
    /// Softmax within each contiguous (start, len) segment of a column vector.
    SegmentSoftmax { a: NodeId, segments: Vec<(usize, usize)> },
    /// out[i] = a[i, cols[i]] -> [m, 1]
    SelectColsPerRow { a: NodeId, cols: Vec<usize> },
    /// a / s.item(); s is a scalar node.
    DivByScalar { a: NodeId, s: NodeId },
    Reshape { a: NodeId },
}

struct Node<R: Real> {
    value: Tensor<R>,
    op: Op<R>,
    wants_grad: bool,
}

/// Gradients from one backward pass, indexed by the tape's node ids.
pub struct Gradients<R: Real> {
    grads: Vec<Option<Tensor<R>>>,
}

impl<R: Real> Gradients<R> {
    /// Gradient of the loss w.r.t. `node`, or `None` if the loss does not
    /// depend on it.
    pub fn get(&self, node: NodeId) -> Option<&Tensor<R>> {
        self.grads[node.0].as_ref()
    }
}

/// Operation record for one forward pass.
pub struct Tape<R: Real> {
    nodes: Vec<Node<R>>,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<R> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>, wants_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            wants_grad,
        });
        id
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].wants_grad
    }

    /// Trainable leaf: gradients flow into it.
    pub fn leaf(&mut self, value: Tensor<R>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: gradients are not tracked through it.
    pub fn constant(&mut self, value: Tensor<R>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul_nt(self.value(a), self.value(b));
        let wg = self.wants(a) || self.wants(b);
        self.push(v, Op::MatMulNT { a, b }, wg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.shape(),
            vb.shape(),
            "add: shape {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let v = Tensor::new(va.shape().to_vec(), data);
        let wg = self.wants(a) || self.wants(b);
        self.push(v, Op::Add { a, b }, wg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.shape(),
            vb.shape(),
            "sub: shape {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x - y)
            .collect();
        let v = Tensor::new(va.shape().to_vec(), data);
        let wg = self.wants(a) || self.wants(b);
        self.push(v, Op::Sub { a, b }, wg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.shape(),
            vb.shape(),
            "mul: shape {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let v = Tensor::new(va.shape().to_vec(), data);
        let wg = self.wants(a) || self.wants(b);
        self.push(v, Op::Mul { a, b }, wg)
    }

    pub fn scale(&mut self, a: NodeId, c: R) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        let wg = self.wants(a);
        self.push(v, Op::Scale { a, c }, wg)
    }

    pub fn scale_by_elem(&mut self, a: NodeId, s: NodeId, idx: usize) -> NodeId {
        let coef = self.value(s).data()[idx];
        let v = self.value(a).map(|x| x * coef);
        let wg = self.wants(a) || self.wants(s);
        self.push(v, Op::ScaleByElem { a, s, idx }, wg)
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(bias));
        let cols = va.cols();
        assert_eq!(
            cols,
            vb.numel(),
            "add_bias: matrix {:?} vs bias {:?}",
            va.shape(),
            vb.shape()
        );
        let mut data = Vec::with_capacity(va.numel());
        for row in 0..va.rows() {
            for (j, &b) in vb.data().iter().enumerate() {
                data.push(va.row(row)[j] + b);
            }
        }
        let v = Tensor::new(va.shape().to_vec(), data);
        let wg = self.wants(a) || self.wants(bias);
        self.push(v, Op::AddBias { a, bias }, wg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid_scalar);
        let wg = self.wants(a);
        self.push(v, Op::Sigmoid { a }, wg)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: R) -> NodeId {
        let v = self
            .value(a)
            .map(|x| if x >= R::zero() { x } else { x * slope });
        let wg = self.wants(a);
        self.push(v, Op::LeakyRelu { a, slope }, wg)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.ln());
        let wg = self.wants(a);
        self.push(v, Op::Ln { a }, wg)
    }

    pub fn gather_rows(&mut self, a: NodeId, idx: Vec<usize>) -> NodeId {
        let va = self.value(a);
        let cols = va.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in &idx {
            data.extend_from_slice(va.row(i));
        }
        let v = Tensor::new(vec![idx.len(), cols], data);
        let wg = self.wants(a);
        self.push(v, Op::GatherRows { a, idx }, wg)
    }

    pub fn scatter_add_rows(&mut self, a: NodeId, idx: Vec<usize>, rows: usize) -> NodeId {
        let va = self.value(a);
        assert_eq!(
            va.rows(),
            idx.len(),
            "scatter_add_rows: {} source rows vs {} indices",
            va.rows(),
            idx.len()
        );
        let cols = va.cols();
        let mut out = Tensor::zeros(vec![rows, cols]);
        for (r, &i) in idx.iter().enumerate() {
            assert!(i < rows, "scatter_add_rows: index {} out of {} rows", i, rows);
            let src = va.row(r);
            let dst = &mut out.data_mut()[i * cols..(i + 1) * cols];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + s;
            }
        }
        let wg = self.wants(a);
        self.push(out, Op::ScatterAddRows { a, idx }, wg)
    }

    pub fn scale_rows(&mut self, a: NodeId, w: Vec<R>) -> NodeId {
        let va = self.value(a);
        assert_eq!(
            va.rows(),
            w.len(),
            "scale_rows: {} rows vs {} weights",
            va.rows(),
            w.len()
        );
        let mut data = Vec::with_capacity(va.numel());
        for (r, &wr) in w.iter().enumerate() {
            data.extend(va.row(r).iter().map(|&x| x * wr));
        }
        let v = Tensor::new(va.shape().to_vec(), data);
        let wg = self.wants(a);
        self.push(v, Op::ScaleRows { a, w }, wg)
    }

    pub fn scale_rows_by(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let (va, vs) = (self.value(a), self.value(s));
        assert_eq!(
            va.rows(),
            vs.numel(),
            "scale_rows_by: {} rows vs {} scales",
            va.rows(),
            vs.numel()
        );
        let mut data = Vec::with_capacity(va.numel());
        for r in 0..va.rows() {
            let wr = vs.data()[r];
            data.extend(va.row(r).iter().map(|&x| x * wr));
        }
        let v = Tensor::new(va.shape().to_vec(), data);
        let wg = self.wants(a) || self.wants(s);
        self.push(v, Op::ScaleRowsBy { a, s }, wg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols: no parts");
        let rows = self.value(parts[0]).rows();
        let total: usize = parts
            .iter()
            .map(|&p| {
                assert_eq!(
                    self.value(p).rows(),
                    rows,
                    "concat_cols: row counts differ ({} vs {})",
                    self.value(p).rows(),
                    rows
                );
                self.value(p).cols()
            })
            .sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = Tensor::new(vec![rows, total], data);
        let wg = parts.iter().any(|&p| self.wants(p));
        self.push(
            v,
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            wg,
        )
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: R = self.value(a).data().iter().copied().sum();
        let wg = self.wants(a);
        self.push(Tensor::scalar(s), Op::Sum { a }, wg)
    }

    /// Softmax inside each contiguous `(start, len)` run of a column vector.
    /// Runs may not overlap; elements outside every run pass through as-is.
    pub fn segment_softmax(&mut self, a: NodeId, segments: Vec<(usize, usize)>) -> NodeId {
        let va = self.value(a);
        assert_eq!(va.cols(), 1, "segment_softmax expects a column vector");
        let mut data = va.data().to_vec();
        for &(start, len) in &segments {
            let seg = &mut data[start..start + len];
            let max = seg.iter().copied().fold(R::neg_infinity(), R::max);
            let mut total = R::zero();
            for v in seg.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in seg.iter_mut() {
                *v = *v / total;
            }
        }
        let v = Tensor::new(va.shape().to_vec(), data);
        let wg = self.wants(a);
        self.push(v, Op::SegmentSoftmax { a, segments }, wg)
    }

    pub fn select_cols_per_row(&mut self, a: NodeId, cols: Vec<usize>) -> NodeId {
        let va = self.value(a);
        assert_eq!(
            va.rows(),
            cols.len(),
            "select_cols_per_row: {} rows vs {} column picks",
            va.rows(),
            cols.len()
        );
        let data: Vec<R> = cols.iter().enumerate().map(|(r, &c)| va.row(r)[c]).collect();
        let v = Tensor::new(vec![cols.len(), 1], data);
        let wg = self.wants(a);
        self.push(v, Op::SelectColsPerRow { a, cols }, wg)
    }

    pub fn div_by_scalar(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let denom = self.value(s).item();
        let v = self.value(a).map(|x| x / denom);
        let wg = self.wants(a) || self.wants(s);
        self.push(v, Op::DivByScalar { a, s }, wg)
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> NodeId {
        let va = self.value(a);
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            va.numel(),
            "reshape: {:?} incompatible with {:?}",
            va.shape(),
            shape
        );
        let v = Tensor::new(shape, va.data().to_vec());
        let wg = self.wants(a);
        self.push(v, Op::Reshape { a }, wg)
    }

    /// y = Wx + b for a vector x; W is [m, n], b is [m], result is [m].
    pub fn affine(&mut self, w: NodeId, b: NodeId, x: NodeId) -> NodeId {
        let (wn, xn) = (self.value(w).cols(), self.value(x).numel());
        assert_eq!(
            wn,
            xn,
            "affine: weight shape {:?} does not accept input shape {:?}",
            self.value(w).shape(),
            self.value(x).shape()
        );
        let m = self.value(w).rows();
        let row = self.reshape(x, vec![1, xn]);
        let prod = self.matmul_nt(row, w);
        let with_bias = self.add_bias(prod, b);
        self.reshape(with_bias, vec![m])
    }

    /// Gradients of a scalar `loss` node w.r.t. every node it depends on.
    pub fn backward(&self, loss: NodeId) -> Gradients<R> {
        assert!(
            self.value(loss).is_scalar(),
            "backward: loss must be scalar, got shape {:?}",
            self.value(loss).shape()
        );
        let mut grads: Vec<Option<Tensor<R>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(R::one()));

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.wants_grad {
                grads[i] = Some(g);
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::MatMulNT { a, b } => {
                    if self.wants(*a) {
                        let da = matmul_nn(&g, self.value(*b));
                        accumulate(&mut grads[a.0], da);
                    }
                    if self.wants(*b) {
                        let db = matmul_tn(&g, self.value(*a));
                        accumulate(&mut grads[b.0], db);
                    }
                }
                Op::Add { a, b } => {
                    if self.wants(*a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if self.wants(*b) {
                        accumulate(&mut grads[b.0], g.clone());
                    }
                }
                Op::Sub { a, b } => {
                    if self.wants(*a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if self.wants(*b) {
                        accumulate(&mut grads[b.0], g.map(|x| -x));
                    }
                }
                Op::Mul { a, b } => {
                    if self.wants(*a) {
                        let da = hadamard(&g, self.value(*b));
                        accumulate(&mut grads[a.0], da);
                    }
                    if self.wants(*b) {
                        let db = hadamard(&g, self.value(*a));
                        accumulate(&mut grads[b.0], db);
                    }
                }
                Op::Scale { a, c } => {
                    if self.wants(*a) {
                        accumulate(&mut grads[a.0], g.map(|x| x * *c));
                    }
                }
                Op::ScaleByElem { a, s, idx } => {
                    let coef = self.value(*s).data()[*idx];
                    if self.wants(*a) {
                        accumulate(&mut grads[a.0], g.map(|x| x * coef));
                    }
                    if self.wants(*s) {
                        let dot: R = g
                            .data()
                            .iter()
                            .zip(self.value(*a).data())
                            .map(|(&gv, &av)| gv * av)
                            .sum();
                        let mut ds = Tensor::zeros(self.value(*s).shape().to_vec());
                        ds.data_mut()[*idx] = dot;
                        accumulate(&mut grads[s.0], ds);
                    }
                }
                Op::AddBias { a, bias } => {
                    if self.wants(*a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if self.wants(*bias) {
                        let mut db = Tensor::zeros(self.value(*bias).shape().to_vec());
                        for r in 0..g.rows() {
                            for (j, &gv) in g.row(r).iter().enumerate() {
                                db.data_mut()[j] = db.data()[j] + gv;
                            }
                        }
                        accumulate(&mut grads[bias.0], db);
                    }
                }
                Op::Sigmoid { a } => {
                    if self.wants(*a) {
                        let y = &node.value;
                        let data: Vec<R> = g
                            .data()
                            .iter()
                            .zip(y.data())
                            .map(|(&gv, &yv)| gv * yv * (R::one() - yv))
                            .collect();
                        accumulate(&mut grads[a.0], Tensor::new(y.shape().to_vec(), data));
                    }
                }
                Op::LeakyRelu { a, slope } => {
                    if self.wants(*a) {
                        let x = self.value(*a);
                        let data: Vec<R> = g
                            .data()
                            .iter()
                            .zip(x.data())
                            .map(|(&gv, &xv)| if xv >= R::zero() { gv } else { gv * *slope })
                            .collect();
                        accumulate(&mut grads[a.0], Tensor::new(x.shape().to_vec(), data));
                    }
                }
                Op::Ln { a } => {
                    if self.wants(*a) {
                        let x = self.value(*a);
                        let data: Vec<R> = g
                            .data()
                            .iter()
                            .zip(x.data())
                            .map(|(&gv, &xv)| gv / xv)
                            .collect();
                        accumulate(&mut grads[a.0], Tensor::new(x.shape().to_vec(), data));
                    }
                }
                Op::GatherRows { a, idx } => {
                    if self.wants(*a) {
                        let va = self.value(*a);
                        let cols = va.cols();
                        let mut da = Tensor::zeros(va.shape().to_vec());
                        for (r, &i) in idx.iter().enumerate() {
                            let dst = &mut da.data_mut()[i * cols..(i + 1) * cols];
                            for (d, &s) in dst.iter_mut().zip(g.row(r)) {
                                *d = *d + s;
                            }
                        }
                        accumulate(&mut grads[a.0], da);
                    }
                }
                Op::ScatterAddRows { a, idx } => {
                    if self.wants(*a) {
                        let va = self.value(*a);
                        let cols = va.cols();
                        let mut da = Tensor::zeros(va.shape().to_vec());
                        for (r, &i) in idx.iter().enumerate() {
                            let dst = &mut da.data_mut()[r * cols..(r + 1) * cols];
                            for (d, &s) in dst.iter_mut().zip(g.row(i)) {
                                *d = *d + s;
                            }
                        }
                        accumulate(&mut grads[a.0], da);
                    }
                }
                Op::ScaleRows { a, w } => {
                    if self.wants(*a) {
                        let mut data = Vec::with_capacity(g.numel());
                        for (r, &wr) in w.iter().enumerate() {
                            data.extend(g.row(r).iter().map(|&x| x * wr));
                        }
                        accumulate(
                            &mut grads[a.0],
                            Tensor::new(self.value(*a).shape().to_vec(), data),
                        );
                    }
                }
                Op::ScaleRowsBy { a, s } => {
                    let vs = self.value(*s);
                    if self.wants(*a) {
                        let mut data = Vec::with_capacity(g.numel());
                        for r in 0..g.rows() {
                            let wr = vs.data()[r];
                            data.extend(g.row(r).iter().map(|&x| x * wr));
                        }
                        accumulate(
                            &mut grads[a.0],
                            Tensor::new(self.value(*a).shape().to_vec(), data),
                        );
                    }
                    if self.wants(*s) {
                        let va = self.value(*a);
                        let data: Vec<R> = (0..g.rows())
                            .map(|r| {
                                g.row(r)
                                    .iter()
                                    .zip(va.row(r))
                                    .map(|(&gv, &av)| gv * av)
                                    .sum()
                            })
                            .collect();
                        accumulate(&mut grads[s.0], Tensor::new(vs.shape().to_vec(), data));
                    }
                }
                Op::ConcatCols { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        if self.wants(p) {
                            let rows = g.rows();
                            let mut data = Vec::with_capacity(rows * pc);
                            for r in 0..rows {
                                data.extend_from_slice(&g.row(r)[offset..offset + pc]);
                            }
                            accumulate(
                                &mut grads[p.0],
                                Tensor::new(self.value(p).shape().to_vec(), data),
                            );
                        }
                        offset += pc;
                    }
                }
                Op::Sum { a } => {
                    if self.wants(*a) {
                        let gv = g.item();
                        let va = self.value(*a);
                        accumulate(
                            &mut grads[a.0],
                            Tensor::new(va.shape().to_vec(), vec![gv; va.numel()]),
                        );
                    }
                }
                Op::SegmentSoftmax { a, segments } => {
                    if self.wants(*a) {
                        let y = &node.value;
                        let mut data = g.data().to_vec();
                        for &(start, len) in segments {
                            let dot: R = (start..start + len)
                                .map(|j| g.data()[j] * y.data()[j])
                                .sum();
                            for j in start..start + len {
                                data[j] = y.data()[j] * (g.data()[j] - dot);
                            }
                        }
                        accumulate(&mut grads[a.0], Tensor::new(y.shape().to_vec(), data));
                    }
                }
                Op::SelectColsPerRow { a, cols } => {
                    if self.wants(*a) {
                        let va = self.value(*a);
                        let width = va.cols();
                        let mut da = Tensor::zeros(va.shape().to_vec());
                        for (r, &c) in cols.iter().enumerate() {
                            da.data_mut()[r * width + c] = g.data()[r];
                        }
                        accumulate(&mut grads[a.0], da);
                    }
                }
                Op::DivByScalar { a, s } => {
                    let denom = self.value(*s).item();
                    if self.wants(*a) {
                        accumulate(&mut grads[a.0], g.map(|x| x / denom));
                    }
                    if self.wants(*s) {
                        let va = self.value(*a);
                        let dot: R = g
                            .data()
                            .iter()
                            .zip(va.data())
                            .map(|(&gv, &av)| gv * av)
                            .sum();
                        let ds = -dot / (denom * denom);
                        accumulate(&mut grads[s.0], Tensor::scalar(ds));
                    }
                }
                Op::Reshape { a } => {
                    if self.wants(*a) {
                        let va = self.value(*a);
                        accumulate(
                            &mut grads[a.0],
                            Tensor::new(va.shape().to_vec(), g.data().to_vec()),
                        );
                    }
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

fn accumulate<R: Real>(slot: &mut Option<Tensor<R>>, delta: Tensor<R>) {
    match slot {
        None => *slot = Some(delta),
        Some(t) => {
            debug_assert_eq!(t.shape(), delta.shape());
            for (d, &s) in t.data_mut().iter_mut().zip(delta.data()) {
                *d = *d + s;
            }
        }
    }
}

fn hadamard<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Tensor<R> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x * y)
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}
