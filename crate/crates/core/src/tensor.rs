//! Minimal dense-tensor engine with tape-based reverse-mode automatic
//! differentiation.
//!
//! The engine supports exactly the primitives the matching model needs:
//! matrix multiply, elementwise add/multiply, ReLU, sigmoid, row-wise masked
//! softmax, same-length 1-D convolution over the token axis, cosine
//! similarity, concatenation, sum, row selection, masked column-wise max, and
//! mean binary cross-entropy with logits. Every primitive carries an exact
//! analytic backward rule; `finite_diff_check` is the independent oracle.
//!
//! A tape records one forward pass and is consumed by one backward pass.
//! Values are 64-bit throughout.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Relu { x: usize },
    Sigmoid { x: usize },
    MaskedSoftmax { x: usize, mask: Vec<bool> },
    Conv1dSame { x: usize, kernel: usize, bias: usize },
    CosineSim { a: usize, b: usize },
    Concat { parts: Vec<usize> },
    Sum { x: usize },
    Row { x: usize, index: usize },
    MaskedRowsMax { x: usize, argmax: Vec<usize> },
    BceWithLogits { logits: usize, labels: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    needs_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
struct TapeInner {
    nodes: Vec<Node>,
    consumed: bool,
}

/// A recording tape. Create one per forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// A handle to a tensor recorded on a tape.
#[derive(Debug, Clone)]
pub struct Tensor {
    tape: Tape,
    idx: usize,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&self, shape: Vec<usize>, values: Vec<f64>, requires_grad: bool, op: Op) -> Tensor {
        debug_assert_eq!(numel(&shape), values.len());
        let needs_grad = match &op {
            Op::Leaf => requires_grad,
            op => self.inputs_of(op).iter().any(|&i| self.needs_grad(i)),
        };
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len();
        inner.nodes.push(Node {
            shape,
            values,
            grad: None,
            requires_grad,
            needs_grad,
            op,
        });
        Tensor {
            tape: self.clone(),
            idx,
        }
    }

    fn inputs_of(&self, op: &Op) -> Vec<usize> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul { a, b } | Op::Add { a, b } | Op::Mul { a, b } | Op::CosineSim { a, b } => {
                vec![*a, *b]
            }
            Op::Relu { x }
            | Op::Sigmoid { x }
            | Op::MaskedSoftmax { x, .. }
            | Op::Sum { x }
            | Op::Row { x, .. }
            | Op::MaskedRowsMax { x, .. } => vec![*x],
            Op::Conv1dSame { x, kernel, bias } => vec![*x, *kernel, *bias],
            Op::Concat { parts } => parts.clone(),
            Op::BceWithLogits { logits, .. } => vec![*logits],
        }
    }

    fn needs_grad(&self, idx: usize) -> bool {
        self.inner.borrow().nodes[idx].needs_grad
    }

    fn values(&self, idx: usize) -> Vec<f64> {
        self.inner.borrow().nodes[idx].values.clone()
    }

    fn shape(&self, idx: usize) -> Vec<usize> {
        self.inner.borrow().nodes[idx].shape.clone()
    }

    /// Create a differentiable leaf.
    pub fn leaf(&self, shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Tensor {
        assert_eq!(
            numel(shape),
            values.len(),
            "leaf values must match shape {shape:?}"
        );
        self.push(shape.to_vec(), values, requires_grad, Op::Leaf)
    }

    /// Create a non-differentiable constant.
    pub fn constant(&self, shape: &[usize], values: Vec<f64>) -> Tensor {
        self.leaf(shape, values, false)
    }

    /// Concatenate 1-D tensors into one vector.
    pub fn concat(&self, parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat needs at least one part");
        let mut values = Vec::new();
        let mut indices = Vec::with_capacity(parts.len());
        for part in parts {
            assert!(
                Rc::ptr_eq(&self.inner, &part.tape.inner),
                "concat parts must share the tape"
            );
            let shape = self.shape(part.idx);
            assert!(shape.len() <= 1, "concat expects scalars or vectors, got {shape:?}");
            values.extend(self.values(part.idx));
            indices.push(part.idx);
        }
        let len = values.len();
        self.push(vec![len], values, false, Op::Concat { parts: indices })
    }

    /// Propagate gradients from a scalar loss back to every reachable tensor
    /// that needs them. Consumes the tape: a second call is an error.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        assert!(
            Rc::ptr_eq(&self.inner, &loss.tape.inner),
            "loss lives on a different tape"
        );
        let inner = &mut *self.inner.borrow_mut();
        if inner.consumed {
            return Err(Error::TapeConsumed);
        }
        if inner.nodes[loss.idx].values.len() != 1 {
            return Err(Error::NonScalarLoss(inner.nodes[loss.idx].shape.clone()));
        }
        inner.consumed = true;

        let nodes = &mut inner.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.idx] = Some(vec![1.0]);

        for idx in (0..=loss.idx).rev() {
            if !nodes[idx].needs_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            backward_step(nodes, idx, &gy, &mut grads);
            nodes[idx].grad = Some(gy);
        }
        Ok(())
    }
}

/// Accumulate `gy` into the gradients of the inputs of node `idx`.
fn backward_step(nodes: &[Node], idx: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let needs = |i: usize| nodes[i].needs_grad;
    macro_rules! acc {
        ($i:expr) => {
            grads[$i].get_or_insert_with(|| vec![0.0; nodes[$i].values.len()])
        };
    }

    match &nodes[idx].op {
        Op::Leaf => {}
        Op::Add { a, b } => {
            if needs(*a) {
                let ga = acc!(*a);
                for (g, &d) in ga.iter_mut().zip(gy) {
                    *g += d;
                }
            }
            if needs(*b) {
                let gb = acc!(*b);
                for (g, &d) in gb.iter_mut().zip(gy) {
                    *g += d;
                }
            }
        }
        Op::Mul { a, b } => {
            if needs(*a) {
                let bv = &nodes[*b].values;
                let ga = acc!(*a);
                for i in 0..gy.len() {
                    ga[i] += gy[i] * bv[i];
                }
            }
            if needs(*b) {
                let av = &nodes[*a].values;
                let gb = acc!(*b);
                for i in 0..gy.len() {
                    gb[i] += gy[i] * av[i];
                }
            }
        }
        Op::MatMul { a, b } => {
            let (m, k, n, _, _) = matmul_dims(&nodes[*a].shape, &nodes[*b].shape);
            let av = &nodes[*a].values;
            let bv = &nodes[*b].values;
            if needs(*a) {
                let ga = acc!(*a);
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += gy[i * n + j] * bv[p * n + j];
                        }
                        ga[i * k + p] += s;
                    }
                }
            }
            if needs(*b) {
                let gb = acc!(*b);
                for p in 0..k {
                    for j in 0..n {
                        let mut s = 0.0;
                        for i in 0..m {
                            s += av[i * k + p] * gy[i * n + j];
                        }
                        gb[p * n + j] += s;
                    }
                }
            }
        }
        Op::Relu { x } => {
            if needs(*x) {
                let xv = &nodes[*x].values;
                let gx = acc!(*x);
                for i in 0..gy.len() {
                    if xv[i] > 0.0 {
                        gx[i] += gy[i];
                    }
                }
            }
        }
        Op::Sigmoid { x } => {
            if needs(*x) {
                let yv = &nodes[idx].values;
                let gx = acc!(*x);
                for i in 0..gy.len() {
                    gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
                }
            }
        }
        Op::MaskedSoftmax { x, mask } => {
            if needs(*x) {
                let yv = &nodes[idx].values;
                let cols = mask.len();
                let rows = yv.len() / cols;
                let gx = acc!(*x);
                for r in 0..rows {
                    let row = &yv[r * cols..(r + 1) * cols];
                    let grow = &gy[r * cols..(r + 1) * cols];
                    let dot: f64 = (0..cols)
                        .filter(|&c| mask[c])
                        .map(|c| grow[c] * row[c])
                        .sum();
                    for c in 0..cols {
                        if mask[c] {
                            gx[r * cols + c] += row[c] * (grow[c] - dot);
                        }
                    }
                }
            }
        }
        Op::Conv1dSame { x, kernel, bias } => {
            let (t, c_in) = (nodes[*x].shape[0], nodes[*x].shape[1]);
            let (w, c_out) = (nodes[*kernel].shape[0], nodes[*kernel].shape[2]);
            let half = w / 2;
            let xv = &nodes[*x].values;
            let kv = &nodes[*kernel].values;
            if needs(*x) {
                let gx = acc!(*x);
                for p in 0..t {
                    for d in 0..w {
                        let q = p as isize + d as isize - half as isize;
                        if q < 0 || q >= t as isize {
                            continue;
                        }
                        let q = q as usize;
                        for i in 0..c_in {
                            for o in 0..c_out {
                                gx[q * c_in + i] +=
                                    gy[p * c_out + o] * kv[(d * c_in + i) * c_out + o];
                            }
                        }
                    }
                }
            }
            if needs(*kernel) {
                let gk = acc!(*kernel);
                for p in 0..t {
                    for d in 0..w {
                        let q = p as isize + d as isize - half as isize;
                        if q < 0 || q >= t as isize {
                            continue;
                        }
                        let q = q as usize;
                        for i in 0..c_in {
                            for o in 0..c_out {
                                gk[(d * c_in + i) * c_out + o] +=
                                    xv[q * c_in + i] * gy[p * c_out + o];
                            }
                        }
                    }
                }
            }
            if needs(*bias) {
                let gb = acc!(*bias);
                for p in 0..t {
                    for o in 0..c_out {
                        gb[o] += gy[p * c_out + o];
                    }
                }
            }
        }
        Op::CosineSim { a, b } => {
            let av = &nodes[*a].values;
            let bv = &nodes[*b].values;
            let na: f64 = av.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb: f64 = bv.iter().map(|v| v * v).sum::<f64>().sqrt();
            // Zero-vector convention: value 0, gradient exactly 0 to both
            // inputs (still allocated so reachable leaves report a grad).
            if na == 0.0 || nb == 0.0 {
                if needs(*a) {
                    acc!(*a);
                }
                if needs(*b) {
                    acc!(*b);
                }
                return;
            }
            let s = nodes[idx].values[0];
            let g = gy[0];
            if needs(*a) {
                let ga = acc!(*a);
                for i in 0..av.len() {
                    ga[i] += g * (bv[i] / (na * nb) - s * av[i] / (na * na));
                }
            }
            if needs(*b) {
                let gb = acc!(*b);
                for i in 0..bv.len() {
                    gb[i] += g * (av[i] / (na * nb) - s * bv[i] / (nb * nb));
                }
            }
        }
        Op::Concat { parts } => {
            let mut offset = 0;
            for &part in parts {
                let len = nodes[part].values.len();
                if needs(part) {
                    let gp = acc!(part);
                    for i in 0..len {
                        gp[i] += gy[offset + i];
                    }
                }
                offset += len;
            }
        }
        Op::Sum { x } => {
            if needs(*x) {
                let gx = acc!(*x);
                for g in gx.iter_mut() {
                    *g += gy[0];
                }
            }
        }
        Op::Row { x, index } => {
            if needs(*x) {
                let cols = nodes[idx].values.len();
                let gx = acc!(*x);
                for c in 0..cols {
                    gx[index * cols + c] += gy[c];
                }
            }
        }
        Op::MaskedRowsMax { x, argmax } => {
            if needs(*x) {
                let cols = argmax.len();
                let gx = acc!(*x);
                for c in 0..cols {
                    gx[argmax[c] * cols + c] += gy[c];
                }
            }
        }
        Op::BceWithLogits { logits, labels } => {
            if needs(*logits) {
                let zv = &nodes[*logits].values;
                let n = zv.len() as f64;
                let gl = acc!(*logits);
                for i in 0..zv.len() {
                    gl[i] += gy[0] * (stable_sigmoid(zv[i]) - labels[i]) / n;
                }
            }
        }
    }
}

fn matmul_dims(a: &[usize], b: &[usize]) -> (usize, usize, usize, bool, bool) {
    match (a.len(), b.len()) {
        (2, 2) => {
            assert_eq!(a[1], b[0], "matmul inner dimensions differ: {a:?} x {b:?}");
            (a[0], a[1], b[1], false, false)
        }
        (1, 2) => {
            assert_eq!(a[0], b[0], "matmul inner dimensions differ: {a:?} x {b:?}");
            (1, a[0], b[1], true, false)
        }
        (2, 1) => {
            assert_eq!(a[1], b[0], "matmul inner dimensions differ: {a:?} x {b:?}");
            (a[0], a[1], 1, false, true)
        }
        _ => panic!("matmul supports 2-D x 2-D, 1-D x 2-D and 2-D x 1-D, got {a:?} x {b:?}"),
    }
}

impl Tensor {
    pub fn shape(&self) -> Vec<usize> {
        self.tape.shape(self.idx)
    }

    pub fn values(&self) -> Vec<f64> {
        self.tape.values(self.idx)
    }

    /// The single element of a scalar tensor.
    pub fn scalar(&self) -> f64 {
        let v = self.values();
        assert_eq!(v.len(), 1, "scalar() on tensor of shape {:?}", self.shape());
        v[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.idx].requires_grad
    }

    /// The gradient populated by the backward pass, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tape.inner.borrow().nodes[self.idx].grad.clone()
    }

    fn same_tape(&self, other: &Tensor) {
        assert!(
            Rc::ptr_eq(&self.tape.inner, &other.tape.inner),
            "operands must share a tape"
        );
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        self.same_tape(other);
        let sa = self.shape();
        let sb = other.shape();
        let (m, k, n, vec_a, vec_b) = matmul_dims(&sa, &sb);
        let av = self.values();
        let bv = other.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = av[i * k + p];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * bv[p * n + j];
                }
            }
        }
        let shape = match (vec_a, vec_b) {
            (true, false) => vec![n],
            (false, true) => vec![m],
            _ => vec![m, n],
        };
        self.tape.push(
            shape,
            out,
            false,
            Op::MatMul {
                a: self.idx,
                b: other.idx,
            },
        )
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.same_tape(other);
        assert_eq!(self.shape(), other.shape(), "add requires equal shapes");
        let out: Vec<f64> = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| a + b)
            .collect();
        self.tape.push(
            self.shape(),
            out,
            false,
            Op::Add {
                a: self.idx,
                b: other.idx,
            },
        )
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        self.same_tape(other);
        assert_eq!(self.shape(), other.shape(), "mul requires equal shapes");
        let out: Vec<f64> = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| a * b)
            .collect();
        self.tape.push(
            self.shape(),
            out,
            false,
            Op::Mul {
                a: self.idx,
                b: other.idx,
            },
        )
    }

    pub fn relu(&self) -> Tensor {
        let out: Vec<f64> = self.values().iter().map(|&v| v.max(0.0)).collect();
        self.tape
            .push(self.shape(), out, false, Op::Relu { x: self.idx })
    }

    pub fn sigmoid(&self) -> Tensor {
        let out: Vec<f64> = self.values().iter().map(|&v| stable_sigmoid(v)).collect();
        self.tape
            .push(self.shape(), out, false, Op::Sigmoid { x: self.idx })
    }

    /// Row-wise softmax where masked columns get weight exactly 0 and no
    /// gradient. A 1-D input is treated as a single row. Fully masked rows
    /// are defined to be all-zero.
    pub fn masked_softmax(&self, mask: &[bool]) -> Tensor {
        let shape = self.shape();
        let cols = *shape.last().expect("masked_softmax needs at least 1-D input");
        assert_eq!(mask.len(), cols, "mask length must equal the row width");
        let values = self.values();
        let rows = values.len() / cols;
        let mut out = vec![0.0; values.len()];
        if mask.iter().any(|&m| m) {
            for r in 0..rows {
                let row = &values[r * cols..(r + 1) * cols];
                let max = row
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(&v, _)| v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for c in 0..cols {
                    if mask[c] {
                        let e = (row[c] - max).exp();
                        out[r * cols + c] = e;
                        denom += e;
                    }
                }
                for c in 0..cols {
                    if mask[c] {
                        out[r * cols + c] /= denom;
                    }
                }
            }
        }
        self.tape.push(
            shape,
            out,
            false,
            Op::MaskedSoftmax {
                x: self.idx,
                mask: mask.to_vec(),
            },
        )
    }

    /// Same-length 1-D convolution over the token axis with zero padding.
    /// Input is `[tokens, c_in]`, kernel `[width, c_in, c_out]` with odd
    /// width, bias `[c_out]`.
    pub fn conv1d_same(&self, kernel: &Tensor, bias: &Tensor) -> Tensor {
        self.same_tape(kernel);
        self.same_tape(bias);
        let xs = self.shape();
        let ks = kernel.shape();
        assert_eq!(xs.len(), 2, "conv input must be [tokens, channels]");
        assert_eq!(ks.len(), 3, "conv kernel must be [width, c_in, c_out]");
        assert_eq!(ks[1], xs[1], "kernel c_in must match input channels");
        assert_eq!(ks[0] % 2, 1, "kernel width must be odd");
        assert_eq!(bias.shape(), vec![ks[2]], "bias must be [c_out]");

        let (t, c_in) = (xs[0], xs[1]);
        let (w, c_out) = (ks[0], ks[2]);
        let half = w / 2;
        let xv = self.values();
        let kv = kernel.values();
        let bv = bias.values();
        let mut out = vec![0.0; t * c_out];
        for p in 0..t {
            for o in 0..c_out {
                out[p * c_out + o] = bv[o];
            }
            for d in 0..w {
                let q = p as isize + d as isize - half as isize;
                if q < 0 || q >= t as isize {
                    continue;
                }
                let q = q as usize;
                for i in 0..c_in {
                    let x = xv[q * c_in + i];
                    if x == 0.0 {
                        continue;
                    }
                    for o in 0..c_out {
                        out[p * c_out + o] += x * kv[(d * c_in + i) * c_out + o];
                    }
                }
            }
        }
        self.tape.push(
            vec![t, c_out],
            out,
            false,
            Op::Conv1dSame {
                x: self.idx,
                kernel: kernel.idx,
                bias: bias.idx,
            },
        )
    }

    /// Cosine similarity of two equal-length vectors. Either vector zero
    /// gives 0 with zero gradient to both inputs.
    pub fn cosine_sim(&self, other: &Tensor) -> Tensor {
        self.same_tape(other);
        let av = self.values();
        let bv = other.values();
        assert_eq!(av.len(), bv.len(), "cosine_sim requires equal lengths");
        let na: f64 = av.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = bv.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            av.iter().zip(&bv).map(|(a, b)| a * b).sum::<f64>() / (na * nb)
        };
        self.tape.push(
            vec![],
            vec![s],
            false,
            Op::CosineSim {
                a: self.idx,
                b: other.idx,
            },
        )
    }

    pub fn sum(&self) -> Tensor {
        let total: f64 = self.values().iter().sum();
        self.tape
            .push(vec![], vec![total], false, Op::Sum { x: self.idx })
    }

    /// Select row `index` of a matrix as a vector.
    pub fn row(&self, index: usize) -> Tensor {
        let shape = self.shape();
        assert_eq!(shape.len(), 2, "row() expects a matrix");
        assert!(index < shape[0], "row {index} out of {} rows", shape[0]);
        let cols = shape[1];
        let values = self.values()[index * cols..(index + 1) * cols].to_vec();
        self.tape.push(
            vec![cols],
            values,
            false,
            Op::Row {
                x: self.idx,
                index,
            },
        )
    }

    /// Column-wise maximum over the unmasked rows of a matrix. Ties send the
    /// gradient to the lowest row index.
    pub fn masked_rows_max(&self, mask: &[bool]) -> Tensor {
        let shape = self.shape();
        assert_eq!(shape.len(), 2, "masked_rows_max expects a matrix");
        assert_eq!(mask.len(), shape[0], "mask length must equal the row count");
        assert!(
            mask.iter().any(|&m| m),
            "masked_rows_max needs at least one unmasked row"
        );
        let (rows, cols) = (shape[0], shape[1]);
        let values = self.values();
        let mut out = vec![f64::NEG_INFINITY; cols];
        let mut argmax = vec![0usize; cols];
        for c in 0..cols {
            for r in 0..rows {
                if mask[r] && values[r * cols + c] > out[c] {
                    out[c] = values[r * cols + c];
                    argmax[c] = r;
                }
            }
        }
        self.tape.push(
            vec![cols],
            out,
            false,
            Op::MaskedRowsMax {
                x: self.idx,
                argmax,
            },
        )
    }

    /// Mean binary cross-entropy over logits, computed in the numerically
    /// stable log-sum-exp form.
    pub fn bce_with_logits(&self, labels: &[f64]) -> Tensor {
        let zv = self.values();
        assert_eq!(zv.len(), labels.len(), "labels must match logits length");
        assert!(!zv.is_empty(), "bce_with_logits needs at least one logit");
        let n = zv.len() as f64;
        let total: f64 = zv
            .iter()
            .zip(labels)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        self.tape.push(
            vec![],
            vec![total / n],
            false,
            Op::BceWithLogits {
                logits: self.idx,
                labels: labels.to_vec(),
            },
        )
    }

    pub fn backward(&self) -> Result<()> {
        self.tape.backward(self)
    }
}

// argmax of argmax ties: strictly-greater comparison above keeps the lowest
// row index, matching the documented tie rule.

/// Compare analytic gradients against central finite differences.
///
/// `f` rebuilds the computation from scratch for each evaluation; params are
/// (shape, values) pairs that become differentiable leaves. Returns the
/// maximum relative error `|a - n| / max(1e-8, |a| + |n|)` over all
/// parameter coordinates.
pub fn finite_diff_check<F>(f: F, params: &[(Vec<usize>, Vec<f64>)], epsilon: f64) -> f64
where
    F: Fn(&Tape, &[Tensor]) -> Tensor,
{
    let eval = |values: &[Vec<f64>]| -> f64 {
        let tape = Tape::new();
        let leaves: Vec<Tensor> = params
            .iter()
            .zip(values)
            .map(|((shape, _), vals)| tape.leaf(shape, vals.clone(), false))
            .collect();
        f(&tape, &leaves).scalar()
    };

    // Analytic gradients.
    let tape = Tape::new();
    let leaves: Vec<Tensor> = params
        .iter()
        .map(|(shape, vals)| tape.leaf(shape, vals.clone(), true))
        .collect();
    let loss = f(&tape, &leaves);
    tape.backward(&loss).expect("finite_diff_check loss must be scalar");
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.values().len()]))
        .collect();

    let mut base: Vec<Vec<f64>> = params.iter().map(|(_, v)| v.clone()).collect();
    let mut max_err = 0.0f64;
    for p in 0..params.len() {
        for i in 0..base[p].len() {
            let orig = base[p][i];
            base[p][i] = orig + epsilon;
            let plus = eval(&base);
            base[p][i] = orig - epsilon;
            let minus = eval(&base);
            base[p][i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[p][i];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            max_err = max_err.max(err);
        }
    }
    max_err
}
