//! Dense row-major 2-D tensors with a recorded computation graph.
//!
//! Every operation on a [`Tensor`] records its parents, so calling
//! [`Tensor::backward`] on a scalar loss walks the graph in reverse
//! topological order and accumulates `dLoss/dleaf` into the gradient
//! buffer of every leaf that requires gradients. Buffers accumulate (`+=`);
//! callers zero them explicitly between steps.
//!
//! Only matrices and a single broadcast form (a `1 x n` row against an
//! `m x n` matrix) are supported. Scalars are `1 x 1` matrices.

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

/// Lower clamp applied to every `log` argument.
pub const LOG_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn numel(&self) -> usize {
        self.rows * self.cols
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}x{}]", self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    Shape {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("data of length {len} cannot fill shape {shape}")]
    DataLength { shape: Shape, len: usize },
    #[error("{op} of an empty tensor")]
    Empty { op: &'static str },
    #[error("backward needs a scalar loss, got {0}")]
    NonScalarLoss(Shape),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Immutable shared view into a flat buffer of reals.
///
/// Used for constants that are large and reused on every step (parameter
/// anchors and importance weights), so graph nodes can hold them without
/// copying.
#[derive(Clone, Debug)]
pub struct SharedSlice {
    buf: Arc<[f64]>,
    start: usize,
    len: usize,
}

impl SharedSlice {
    pub fn new(buf: Arc<[f64]>, start: usize, len: usize) -> Self {
        assert!(start + len <= buf.len(), "slice out of bounds");
        Self { buf, start, len }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.buf[self.start..self.start + self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

enum Op {
    Leaf,
    MatMul(Tensor, Tensor),
    /// `rhs_row` marks a `1 x n` right operand broadcast over rows.
    Binary {
        kind: BinaryKind,
        lhs: Tensor,
        rhs: Tensor,
        rhs_row: bool,
    },
    Neg(Tensor),
    Square(Tensor),
    Relu(Tensor),
    Sigmoid(Tensor),
    Log(Tensor),
    Scale(Tensor, f64),
    ConcatCols(Tensor, Tensor),
    MeanAll(Tensor),
    SumAll(Tensor),
    WeightedSqDist {
        theta: Tensor,
        anchor: SharedSlice,
        weight: SharedSlice,
    },
}

impl Op {
    fn parents(&self) -> Vec<&Tensor> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) | Op::ConcatCols(a, b) => vec![a, b],
            Op::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            Op::Neg(a)
            | Op::Square(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Scale(a, _)
            | Op::MeanAll(a)
            | Op::SumAll(a) => vec![a],
            Op::WeightedSqDist { theta, .. } => vec![theta],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Binary { kind, .. } => match kind {
                BinaryKind::Add => "add",
                BinaryKind::Sub => "sub",
                BinaryKind::Mul => "mul",
            },
            Op::Neg(_) => "neg",
            Op::Square(_) => "square",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Log(_) => "log",
            Op::Scale(..) => "scale",
            Op::ConcatCols(..) => "concat_cols",
            Op::MeanAll(_) => "mean_all",
            Op::SumAll(_) => "sum_all",
            Op::WeightedSqDist { .. } => "weighted_sq_dist",
        }
    }
}

struct Node {
    shape: Shape,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: Cell<bool>,
    op: Op,
}

/// Reference-counted handle to a graph node. Cloning is cheap and shares
/// the node.
#[derive(Clone)]
pub struct Tensor(Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("op", &self.0.op.name())
            .field("requires_grad", &self.0.requires_grad.get())
            .finish()
    }
}

impl Tensor {
    fn from_op(shape: Shape, data: Vec<f64>, op: Op) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        Tensor(Rc::new(Node {
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad: Cell::new(requires_grad),
            op,
        }))
    }

    /// Constant leaf; never receives gradients.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(rows, cols);
        if shape.numel() != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self::from_op(shape, data, Op::Leaf))
    }

    /// Trainable leaf.
    pub fn param(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let t = Self::from_vec(rows, cols, data)?;
        t.0.requires_grad.set(true);
        Ok(t)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_op(Shape::new(rows, cols), vec![0.0; rows * cols], Op::Leaf)
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_op(Shape::new(rows, cols), vec![value; rows * cols], Op::Leaf)
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_op(Shape::new(1, 1), vec![value], Op::Leaf)
    }

    pub fn shape(&self) -> Shape {
        self.0.shape
    }

    pub fn rows(&self) -> usize {
        self.0.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.0.shape.cols
    }

    pub fn numel(&self) -> usize {
        self.0.shape.numel()
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.0.op, Op::Leaf)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad.get()
    }

    /// Toggles gradient tracking on a leaf. Has no effect on nodes that
    /// were already built from it.
    pub fn set_requires_grad(&self, on: bool) {
        assert!(self.is_leaf(), "requires_grad can only be set on leaves");
        self.0.requires_grad.set(on);
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.0.data.borrow()
    }

    /// Mutable access to the values of a leaf (optimizer updates, loading).
    pub fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        assert!(self.is_leaf(), "only leaf data may be mutated");
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().clone()
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on non-scalar {}", self.shape());
        self.0.data.borrow()[0]
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        let s = self.shape();
        assert!(row < s.rows && col < s.cols);
        self.0.data.borrow()[row * s.cols + col]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn grad_ref(&self) -> Ref<'_, Option<Vec<f64>>> {
        self.0.grad.borrow()
    }

    /// Resets the gradient buffer to zeros (allocating it if absent).
    pub fn zero_grad(&self) {
        let mut g = self.0.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => buf.iter_mut().for_each(|v| *v = 0.0),
            None => *g = Some(vec![0.0; self.numel()]),
        }
    }

    pub fn clear_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Constant copy of the current values with no graph history.
    pub fn detach(&self) -> Tensor {
        Self::from_op(self.shape(), self.to_vec(), Op::Leaf)
    }

    fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape(), rhs.shape());
        if a.cols != b.rows {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: a,
                rhs: b,
            });
        }
        let mut out = vec![0.0; a.rows * b.cols];
        gemm(
            a.rows,
            a.cols,
            b.cols,
            &self.data(),
            false,
            &rhs.data(),
            false,
            &mut out,
            0.0,
        );
        Ok(Self::from_op(
            Shape::new(a.rows, b.cols),
            out,
            Op::MatMul(self.clone(), rhs.clone()),
        ))
    }

    fn binary(&self, rhs: &Tensor, kind: BinaryKind) -> Result<Tensor> {
        let (a, b) = (self.shape(), rhs.shape());
        let rhs_row = if a == b {
            false
        } else if b.rows == 1 && b.cols == a.cols {
            true
        } else {
            let op = match kind {
                BinaryKind::Add => "add",
                BinaryKind::Sub => "sub",
                BinaryKind::Mul => "mul",
            };
            return Err(TensorError::Shape { op, lhs: a, rhs: b });
        };
        let out = {
            let x = self.data();
            let y = rhs.data();
            let f = match kind {
                BinaryKind::Add => |p: f64, q: f64| p + q,
                BinaryKind::Sub => |p: f64, q: f64| p - q,
                BinaryKind::Mul => |p: f64, q: f64| p * q,
            };
            if rhs_row {
                x.chunks(a.cols.max(1))
                    .flat_map(|row| row.iter().zip(y.iter()).map(|(&p, &q)| f(p, q)))
                    .collect()
            } else {
                x.iter().zip(y.iter()).map(|(&p, &q)| f(p, q)).collect()
            }
        };
        Ok(Self::from_op(
            a,
            out,
            Op::Binary {
                kind,
                lhs: self.clone(),
                rhs: rhs.clone(),
                rhs_row,
            },
        ))
    }

    /// Elementwise sum; `rhs` may also be a `1 x cols` row (bias broadcast).
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, BinaryKind::Add)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, BinaryKind::Sub)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.binary(rhs, BinaryKind::Mul)
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Tensor {
        let out = self.data().iter().map(|&v| f(v)).collect();
        Self::from_op(self.shape(), out, op)
    }

    pub fn neg(&self) -> Tensor {
        self.unary(Op::Neg(self.clone()), |v| -v)
    }

    pub fn square(&self) -> Tensor {
        self.unary(Op::Square(self.clone()), |v| v * v)
    }

    pub fn relu(&self) -> Tensor {
        self.unary(Op::Relu(self.clone()), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(Op::Sigmoid(self.clone()), sigmoid)
    }

    /// `log(max(v, LOG_CLAMP))`; the gradient is zero where the clamp is active.
    pub fn log(&self) -> Tensor {
        self.unary(Op::Log(self.clone()), |v| v.max(LOG_CLAMP).ln())
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.unary(Op::Scale(self.clone(), factor), |v| v * factor)
    }

    pub fn concat_cols(&self, rhs: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape(), rhs.shape());
        if a.rows != b.rows {
            return Err(TensorError::Shape {
                op: "concat_cols",
                lhs: a,
                rhs: b,
            });
        }
        let cols = a.cols + b.cols;
        let mut out = Vec::with_capacity(a.rows * cols);
        {
            let x = self.data();
            let y = rhs.data();
            for r in 0..a.rows {
                out.extend_from_slice(&x[r * a.cols..(r + 1) * a.cols]);
                out.extend_from_slice(&y[r * b.cols..(r + 1) * b.cols]);
            }
        }
        Ok(Self::from_op(
            Shape::new(a.rows, cols),
            out,
            Op::ConcatCols(self.clone(), rhs.clone()),
        ))
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        if self.numel() == 0 {
            return Err(TensorError::Empty { op: "mean_all" });
        }
        let mean = self.data().iter().sum::<f64>() / self.numel() as f64;
        Ok(Self::from_op(
            Shape::new(1, 1),
            vec![mean],
            Op::MeanAll(self.clone()),
        ))
    }

    pub fn sum_all(&self) -> Tensor {
        let sum = self.data().iter().sum::<f64>();
        Self::from_op(Shape::new(1, 1), vec![sum], Op::SumAll(self.clone()))
    }

    /// `sum_i weight_i * (self_i - anchor_i)^2` as a scalar.
    ///
    /// Fused form of `sum_all(mul(weight, square(sub(self, anchor))))` that
    /// avoids materialising three intermediates the size of the parameter.
    pub fn weighted_sq_dist(&self, anchor: SharedSlice, weight: SharedSlice) -> Result<Tensor> {
        let n = self.numel();
        if anchor.len() != n || weight.len() != n {
            return Err(TensorError::Shape {
                op: "weighted_sq_dist",
                lhs: self.shape(),
                rhs: Shape::new(1, anchor.len().max(weight.len())),
            });
        }
        let value = self
            .data()
            .iter()
            .zip(anchor.as_slice())
            .zip(weight.as_slice())
            .map(|((&t, &a), &w)| {
                let d = t - a;
                w * d * d
            })
            .sum::<f64>();
        Ok(Self::from_op(
            Shape::new(1, 1),
            vec![value],
            Op::WeightedSqDist {
                theta: self.clone(),
                anchor,
                weight,
            },
        ))
    }

    /// Reverse-mode sweep from this scalar, adding `dself/dleaf` into the
    /// gradient buffer of every reachable leaf with `requires_grad`.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut grads: HashMap<usize, Vec<f64>> = HashMap::new();
        grads.insert(self.key(), vec![1.0]);
        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.key()) else {
                continue;
            };
            if node.is_leaf() {
                let mut buf = node.0.grad.borrow_mut();
                match buf.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
                    None => *buf = Some(g),
                }
                continue;
            }
            node.propagate(&g, &mut grads);
        }
        Ok(())
    }

    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        // (node, children pushed?)
        let mut stack = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.key()) {
                continue;
            }
            stack.push((node.clone(), true));
            for p in node.0.op.parents() {
                if p.requires_grad() && !visited.contains(&p.key()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }

    fn propagate(&self, g: &[f64], grads: &mut HashMap<usize, Vec<f64>>) {
        fn slot<'a>(grads: &'a mut HashMap<usize, Vec<f64>>, t: &Tensor) -> &'a mut Vec<f64> {
            grads
                .entry(t.key())
                .or_insert_with(|| vec![0.0; t.numel()])
        }
        let shape = self.shape();
        match &self.0.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k, n) = (a.rows(), a.cols(), b.cols());
                if a.requires_grad() {
                    let da = slot(grads, a);
                    gemm(m, n, k, g, false, &b.data(), true, da, 1.0);
                }
                if b.requires_grad() {
                    let db = slot(grads, b);
                    gemm(k, m, n, &a.data(), true, g, false, db, 1.0);
                }
            }
            Op::Binary {
                kind,
                lhs,
                rhs,
                rhs_row,
            } => {
                let cols = shape.cols.max(1);
                if lhs.requires_grad() {
                    let rhs_data = rhs.data();
                    let dl = slot(grads, lhs);
                    match kind {
                        BinaryKind::Add | BinaryKind::Sub => {
                            dl.iter_mut().zip(g).for_each(|(d, gi)| *d += gi)
                        }
                        BinaryKind::Mul => {
                            for (i, (d, gi)) in dl.iter_mut().zip(g).enumerate() {
                                let r = if *rhs_row { i % cols } else { i };
                                *d += gi * rhs_data[r];
                            }
                        }
                    }
                }
                if rhs.requires_grad() {
                    let lhs_data = lhs.data();
                    let dr = slot(grads, rhs);
                    for (i, gi) in g.iter().enumerate() {
                        let r = if *rhs_row { i % cols } else { i };
                        dr[r] += match kind {
                            BinaryKind::Add => *gi,
                            BinaryKind::Sub => -gi,
                            BinaryKind::Mul => gi * lhs_data[i],
                        };
                    }
                }
            }
            Op::Neg(a) => {
                let da = slot(grads, a);
                da.iter_mut().zip(g).for_each(|(d, gi)| *d -= gi);
            }
            Op::Square(a) => {
                let x = a.data();
                let da = slot(grads, a);
                for ((d, gi), xi) in da.iter_mut().zip(g).zip(x.iter()) {
                    *d += 2.0 * xi * gi;
                }
            }
            Op::Relu(a) => {
                let x = a.data();
                let da = slot(grads, a);
                for ((d, gi), xi) in da.iter_mut().zip(g).zip(x.iter()) {
                    if *xi > 0.0 {
                        *d += gi;
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = self.data();
                let da = slot(grads, a);
                for ((d, gi), yi) in da.iter_mut().zip(g).zip(y.iter()) {
                    *d += gi * yi * (1.0 - yi);
                }
            }
            Op::Log(a) => {
                let x = a.data();
                let da = slot(grads, a);
                for ((d, gi), xi) in da.iter_mut().zip(g).zip(x.iter()) {
                    if *xi >= LOG_CLAMP {
                        *d += gi / xi;
                    }
                }
            }
            Op::Scale(a, factor) => {
                let da = slot(grads, a);
                da.iter_mut().zip(g).for_each(|(d, gi)| *d += gi * factor);
            }
            Op::ConcatCols(a, b) => {
                let (pa, pb) = (a.cols(), b.cols());
                let cols = pa + pb;
                if a.requires_grad() {
                    let da = slot(grads, a);
                    for r in 0..shape.rows {
                        let src = &g[r * cols..r * cols + pa];
                        da[r * pa..(r + 1) * pa]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, s)| *d += s);
                    }
                }
                if b.requires_grad() {
                    let db = slot(grads, b);
                    for r in 0..shape.rows {
                        let src = &g[r * cols + pa..(r + 1) * cols];
                        db[r * pb..(r + 1) * pb]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::MeanAll(a) => {
                let share = g[0] / a.numel() as f64;
                slot(grads, a).iter_mut().for_each(|d| *d += share);
            }
            Op::SumAll(a) => {
                let g0 = g[0];
                slot(grads, a).iter_mut().for_each(|d| *d += g0);
            }
            Op::WeightedSqDist {
                theta,
                anchor,
                weight,
            } => {
                let x = theta.data();
                let g0 = g[0];
                let dt = slot(grads, theta);
                for (((d, t), a), w) in dt
                    .iter_mut()
                    .zip(x.iter())
                    .zip(anchor.as_slice())
                    .zip(weight.as_slice())
                {
                    *d += g0 * 2.0 * w * (t - a);
                }
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `c = a' * b' + beta * c` where `a'` is `m x k` and `b'` is `k x n`.
///
/// `a_t` means `a` is stored row-major as `k x m` and used transposed;
/// likewise for `b_t`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // elements of the three slices, whose lengths are checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    fn p(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::param(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_annihilator() {
        let i2 = t(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let m = t(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(i2.matmul(&m).unwrap().to_vec(), vec![1.0, 2.0, 3.0, 4.0]);

        let z = Tensor::zeros(2, 3);
        let any = t(3, 4, &(0..12).map(|v| v as f64 * 0.7 - 2.0).collect::<Vec<_>>());
        let out = z.matmul(&any).unwrap();
        assert_eq!(out.shape(), Shape::new(2, 4));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_hand_product() {
        let a = t(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = t(2, 1, &[5.0, 6.0]);
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = Tensor::zeros(2, 3).matmul(&Tensor::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2x3]"), "{msg}");
        assert_eq!(
            err,
            TensorError::Shape {
                op: "matmul",
                lhs: Shape::new(2, 3),
                rhs: Shape::new(2, 3)
            }
        );
    }

    #[test]
    fn matmul_backward_transposes() {
        let a = p(2, 3, &[1.0, -2.0, 0.5, 3.0, 1.5, -1.0]);
        let b = p(3, 2, &[0.2, 0.4, -0.6, 0.8, 1.0, -1.2]);
        a.matmul(&b).unwrap().sum_all().backward().unwrap();
        // dL/da = 1 * b^T rowsums: each row of da equals row sums of b
        let ga = a.grad().unwrap();
        assert_relative_eq!(ga[0], 0.6, epsilon = 1e-12);
        assert_relative_eq!(ga[1], 0.2, epsilon = 1e-12);
        assert_relative_eq!(ga[2], -0.2, epsilon = 1e-12);
        assert_eq!(&ga[0..3], &ga[3..6]);
        // dL/db = a^T * 1: each column equals column sums of a
        let gb = b.grad().unwrap();
        assert_relative_eq!(gb[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(gb[2], -0.5, epsilon = 1e-12);
        assert_relative_eq!(gb[4], -0.5, epsilon = 1e-12);
        assert_eq!(gb[0], gb[1]);
    }

    #[test]
    fn sigmoid_relu_log_local_gradients() {
        let x = p(1, 1, &[0.0]);
        let s = x.sigmoid();
        assert_eq!(s.item(), 0.5);
        s.backward().unwrap();
        assert_eq!(x.grad().unwrap()[0], 0.25);

        let x = p(1, 2, &[-3.0, 3.0]);
        let r = x.relu();
        assert_eq!(r.to_vec(), vec![0.0, 3.0]);
        r.sum_all().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0]);

        let x = p(1, 1, &[1.0]);
        let l = x.log();
        assert_eq!(l.item(), 0.0);
        l.backward().unwrap();
        assert_eq!(x.grad().unwrap()[0], 1.0);
    }

    #[test]
    fn log_clamps_nonpositive_inputs() {
        let x = p(1, 3, &[0.0, -1.0, 1e-12]);
        let l = x.log();
        for v in l.to_vec() {
            assert_eq!(v, LOG_CLAMP.ln());
        }
        l.sum_all().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn concat_shapes_and_split_backward() {
        let a = p(1, 2, &[1.0, 2.0]);
        let b = p(1, 3, &[3.0, 4.0, 5.0]);
        let c = a.concat_cols(&b).unwrap();
        assert_eq!(c.shape(), Shape::new(1, 5));
        let w = t(1, 5, &[0.1, 0.2, 0.3, 0.4, 0.5]);
        c.mul(&w).unwrap().sum_all().backward().unwrap();
        let mut recomposed = a.grad().unwrap();
        recomposed.extend(b.grad().unwrap());
        assert_eq!(recomposed, w.to_vec());

        let empty = Tensor::zeros(2, 0);
        let m = t(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.concat_cols(&empty).unwrap().to_vec(), m.to_vec());
        assert!(m.concat_cols(&Tensor::zeros(3, 1)).is_err());
    }

    #[test]
    fn mean_all_values_and_gradient() {
        assert_eq!(t(1, 2, &[2.0, 4.0]).mean_all().unwrap().item(), 3.0);
        assert_eq!(Tensor::scalar(7.5).mean_all().unwrap().item(), 7.5);
        let x = p(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        x.mean_all().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.25; 4]);
        assert!(Tensor::zeros(0, 3).mean_all().is_err());
    }

    #[test]
    fn row_broadcast_is_the_only_broadcast() {
        let m = t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = p(1, 3, &[10.0, 20.0, 30.0]);
        let s = m.add(&b).unwrap();
        assert_eq!(s.to_vec(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        s.sum_all().backward().unwrap();
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0, 2.0]);
        assert!(m.add(&Tensor::zeros(2, 1)).is_err());
        assert!(m.add(&Tensor::zeros(3, 3)).is_err());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = p(1, 2, &[1.0, 2.0]);
        assert_eq!(
            x.square().backward(),
            Err(TensorError::NonScalarLoss(Shape::new(1, 2)))
        );
    }

    #[test]
    fn disconnected_parameter_keeps_zero_gradient() {
        let w = p(1, 2, &[1.0, 2.0]);
        let other = p(1, 2, &[3.0, 4.0]);
        w.zero_grad();
        other.square().sum_all().backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn two_paths_sum_and_backward_accumulates() {
        // f(w) = sum(w*w) + sum(3w) -> df/dw = 2w + 3
        let w = p(1, 2, &[1.0, -2.0]);
        let f = w
            .mul(&w)
            .unwrap()
            .sum_all()
            .add(&w.scale(3.0).sum_all())
            .unwrap();
        f.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![5.0, -1.0]);
        // A second sweep without zeroing adds the same gradient again.
        f.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![10.0, -2.0]);
        w.zero_grad();
        assert_eq!(w.grad().unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn weighted_sq_dist_matches_composed_form() {
        let theta = p(1, 3, &[1.0, 2.0, -1.0]);
        let anchor: Arc<[f64]> = vec![0.5, 2.0, 1.0].into();
        let weight: Arc<[f64]> = vec![2.0, 7.0, 0.25].into();
        let fused = theta
            .weighted_sq_dist(
                SharedSlice::new(anchor.clone(), 0, 3),
                SharedSlice::new(weight.clone(), 0, 3),
            )
            .unwrap();
        assert_relative_eq!(fused.item(), 2.0 * 0.25 + 0.0 + 0.25 * 4.0);
        fused.backward().unwrap();
        assert_eq!(theta.grad().unwrap(), vec![2.0, 0.0, -1.0]);
    }

    #[test]
    fn requires_grad_off_skips_leaf() {
        let w = p(1, 1, &[2.0]);
        w.set_requires_grad(false);
        let x = p(1, 1, &[3.0]);
        w.mul(&x).unwrap().sum_all().backward().unwrap();
        assert!(w.grad().is_none());
        assert_eq!(x.grad().unwrap(), vec![2.0]);
    }
}
