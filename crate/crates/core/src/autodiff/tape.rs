use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{gemm, Matrix};
use crate::math::{exp, ln, sqrt};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Transpose(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    SoftmaxRows(Var),
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    RowSum(Var),
    ColSum(Var),
    Sum(Var),
    Trace(Var),
    ConcatCols(Var, Var),
    Square(Var),
    Reciprocal(Var),
    Sqrt(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    GatherRows(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Records matrix-valued operations for one forward/backward pair.
///
/// Binary element-wise operations broadcast their right operand when it is
/// `1×1`, `1×cols` or `rows×1`. Every recorded value is checked for
/// non-finite entries as it is produced.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Broadcast {
    Full,
    Scalar,
    Row,
    Col,
}

fn broadcast_kind(a: (usize, usize), b: (usize, usize), op: &'static str) -> Result<Broadcast> {
    if a == b {
        Ok(Broadcast::Full)
    } else if b == (1, 1) {
        Ok(Broadcast::Scalar)
    } else if b == (1, a.1) {
        Ok(Broadcast::Row)
    } else if b == (a.0, 1) {
        Ok(Broadcast::Col)
    } else {
        Err(Error::ShapeMismatch { op, lhs: a, rhs: b })
    }
}

fn broadcast_zip(a: &Matrix, b: &Matrix, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let (rows, cols) = a.shape();
    let bs = b.as_slice();
    let mut out = a.clone();
    for i in 0..rows {
        let row = out.row_mut(i);
        for (j, x) in row.iter_mut().enumerate() {
            let y = match kind {
                Broadcast::Full => bs[i * cols + j],
                Broadcast::Scalar => bs[0],
                Broadcast::Row => bs[j],
                Broadcast::Col => bs[i],
            };
            *x = f(*x, y);
        }
    }
    out
}

/// Sums `g` down to the shape of a broadcast operand.
fn reduce_to(g: Matrix, kind: Broadcast) -> Matrix {
    match kind {
        Broadcast::Full => g,
        Broadcast::Scalar => Matrix::filled(1, 1, g.sum()),
        Broadcast::Row => Matrix::row_vector(&g.col_sums()),
        Broadcast::Col => Matrix::column_vector(&g.row_sums()),
    }
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    /// Records an input. Leaves receive gradients like any other node.
    pub fn leaf(&mut self, value: Matrix) -> Result<Var> {
        self.push(value, Op::Leaf, "leaf")
    }

    fn push(&mut self, value: Matrix, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = broadcast_kind(self.shape(a), self.shape(b), "add")?;
        let value = broadcast_zip(self.value(a), self.value(b), kind, |x, y| x + y);
        self.push(value, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = broadcast_kind(self.shape(a), self.shape(b), "sub")?;
        let value = broadcast_zip(self.value(a), self.value(b), kind, |x, y| x - y);
        self.push(value, Op::Sub(a, b), "sub")
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = broadcast_kind(self.shape(a), self.shape(b), "mul")?;
        let value = broadcast_zip(self.value(a), self.value(b), kind, |x, y| x * y);
        self.push(value, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = self.value(a).scaled(factor);
        self.push(value, Op::Scale(a, factor), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::AddScalar(a), "add_scalar")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), "transpose")
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(value, Op::LeakyRelu(a, slope), "leaky_relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a), "sigmoid")
    }

    /// Softmax over each row.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::SoftmaxRows(a), "softmax")
    }

    /// Training-mode batch normalization over rows with learnable
    /// per-column `gamma` and `beta` (`1×cols` each).
    pub fn batch_norm(&mut self, input: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let x = self.value(input);
        let (rows, cols) = x.shape();
        for (v, name) in [(gamma, "batch_norm gamma"), (beta, "batch_norm beta")] {
            if self.shape(v) != (1, cols) {
                return Err(Error::ShapeMismatch {
                    op: name,
                    lhs: (1, cols),
                    rhs: self.shape(v),
                });
            }
        }
        if rows == 0 {
            return Err(Error::EmptyInput);
        }
        let n = rows as f64;
        let mean: Vec<f64> = x.col_sums().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; cols];
        for i in 0..rows {
            for (j, &v) in x.row(i).iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / sqrt(v / n + eps)).collect();
        let normalized = Matrix::from_fn(rows, cols, |i, j| (x.get(i, j) - mean[j]) * inv_std[j]);
        let g = self.value(gamma).as_slice();
        let b = self.value(beta).as_slice();
        let value = Matrix::from_fn(rows, cols, |i, j| normalized.get(i, j) * g[j] + b[j]);
        self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            "batch_norm",
        )
    }

    /// `rows×cols → rows×1`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let value = Matrix::column_vector(&self.value(a).row_sums());
        self.push(value, Op::RowSum(a), "row_sum")
    }

    /// `rows×cols → 1×cols`.
    pub fn col_sum(&mut self, a: Var) -> Result<Var> {
        let value = Matrix::row_vector(&self.value(a).col_sums());
        self.push(value, Op::ColSum(a), "col_sum")
    }

    /// Sum of all entries as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Matrix::filled(1, 1, self.value(a).sum());
        self.push(value, Op::Sum(a), "sum")
    }

    pub fn trace(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() != m.cols() {
            return Err(Error::ShapeMismatch {
                op: "trace",
                lhs: m.shape(),
                rhs: (m.cols(), m.rows()),
            });
        }
        let t = (0..m.rows()).map(|i| m.get(i, i)).sum();
        self.push(Matrix::filled(1, 1, t), Op::Trace(a), "trace")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hconcat(self.value(b))?;
        self.push(value, Op::ConcatCols(a, b), "concat")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x * x);
        self.push(value, Op::Square(a), "square")
    }

    pub fn reciprocal(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| 1.0 / x);
        self.push(value, Op::Reciprocal(a), "reciprocal")
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sqrt);
        self.push(value, Op::Sqrt(a), "sqrt")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(ln);
        self.push(value, Op::Log(a), "log")
    }

    /// Clamps into `[lo, hi]`; the gradient only flows where no clamping
    /// happened.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi), "clamp")
    }

    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let rows = self.value(a).rows();
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::NodeOutOfRange {
                index: bad,
                num_nodes: rows,
            });
        }
        let value = self.value(a).select_rows(&indices);
        self.push(value, Op::GatherRows(a, indices), "gather_rows")
    }

    /// Smallest distance of any recorded non-smooth primitive input from its
    /// kink (leaky-ReLU at 0, clamp bounds). `INFINITY` if there is none.
    pub fn min_kink_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::LeakyRelu(a, _) => {
                    for &x in self.value(*a).as_slice() {
                        best = best.min(x.abs());
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    for &x in self.value(*a).as_slice() {
                        best = best.min((x - lo).abs()).min((x - hi).abs());
                    }
                }
                _ => {}
            }
        }
        best
    }

    /// Reverse sweep from a `1×1` node. Forward values are left untouched, so
    /// repeated calls return identical gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: self.shape(loss),
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, contrib: Matrix| -> Result<()> {
                if !contrib.is_finite() {
                    return Err(Error::NonFinite { op: "backward" });
                }
                match &mut grads[v.0] {
                    Some(existing) => {
                        for (e, c) in existing.as_mut_slice().iter_mut().zip(contrib.as_slice()) {
                            *e += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
                Ok(())
            };
            match &node.op {
                Op::Leaf => {
                    out[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut ga = Matrix::zeros(va.rows(), va.cols());
                    gemm(&g, false, vb, true, &mut ga, 0.0);
                    let mut gb = Matrix::zeros(vb.rows(), vb.cols());
                    gemm(va, true, &g, false, &mut gb, 0.0);
                    acc(*a, ga)?;
                    acc(*b, gb)?;
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let kind = broadcast_kind(self.shape(*a), self.shape(*b), "add")?;
                    let gb = if matches!(node.op, Op::Sub(..)) {
                        g.scaled(-1.0)
                    } else {
                        g.clone()
                    };
                    acc(*b, reduce_to(gb, kind))?;
                    acc(*a, g)?;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let kind = broadcast_kind(va.shape(), vb.shape(), "mul")?;
                    let ga = broadcast_zip(&g, vb, kind, |x, y| x * y);
                    let gb = reduce_to(g.hadamard(va)?, kind);
                    acc(*a, ga)?;
                    acc(*b, gb)?;
                }
                Op::Scale(a, f) => acc(*a, g.scaled(*f))?,
                Op::AddScalar(a) => acc(*a, g)?,
                Op::Transpose(a) => acc(*a, g.transpose())?,
                Op::LeakyRelu(a, slope) => {
                    let x = self.value(*a);
                    let s = *slope;
                    let ga = x.zip_map(&g, |x, g| if x > 0.0 { g } else { s * g });
                    acc(*a, ga)?;
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(*a, y.zip_map(&g, |y, g| g * y * (1.0 - y)))?;
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = g.clone();
                    for i in 0..y.rows() {
                        let dot: f64 = y.row(i).iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
                        for (j, x) in ga.row_mut(i).iter_mut().enumerate() {
                            *x = y.get(i, j) * (g.get(i, j) - dot);
                        }
                    }
                    acc(*a, ga)?;
                }
                Op::BatchNorm {
                    input,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let (rows, cols) = normalized.shape();
                    let n = rows as f64;
                    let gam = self.value(*gamma).as_slice();
                    let gbeta = g.col_sums();
                    let ggamma = g.hadamard(normalized)?.col_sums();
                    // dx = inv_std/N · (N·dx̂ − Σdx̂ − x̂·Σ(dx̂·x̂)), dx̂ = dy·γ
                    let mut sum_dxhat = vec![0.0; cols];
                    let mut sum_dxhat_xhat = vec![0.0; cols];
                    for i in 0..rows {
                        for j in 0..cols {
                            let d = g.get(i, j) * gam[j];
                            sum_dxhat[j] += d;
                            sum_dxhat_xhat[j] += d * normalized.get(i, j);
                        }
                    }
                    let gx = Matrix::from_fn(rows, cols, |i, j| {
                        let d = g.get(i, j) * gam[j];
                        inv_std[j] / n
                            * (n * d - sum_dxhat[j] - normalized.get(i, j) * sum_dxhat_xhat[j])
                    });
                    acc(*input, gx)?;
                    acc(*gamma, Matrix::row_vector(&ggamma))?;
                    acc(*beta, Matrix::row_vector(&gbeta))?;
                }
                Op::RowSum(a) => {
                    let (rows, cols) = self.shape(*a);
                    let gs = g.as_slice();
                    acc(*a, Matrix::from_fn(rows, cols, |i, _| gs[i]))?;
                }
                Op::ColSum(a) => {
                    let (rows, cols) = self.shape(*a);
                    let gs = g.as_slice();
                    acc(*a, Matrix::from_fn(rows, cols, |_, j| gs[j]))?;
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.shape(*a);
                    acc(*a, Matrix::filled(rows, cols, g.as_slice()[0]))?;
                }
                Op::Trace(a) => {
                    let n = self.shape(*a).0;
                    acc(*a, Matrix::identity(n).scaled(g.as_slice()[0]))?;
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(*a).1;
                    let cb = self.shape(*b).1;
                    let ga = Matrix::from_fn(g.rows(), ca, |i, j| g.get(i, j));
                    let gb = Matrix::from_fn(g.rows(), cb, |i, j| g.get(i, ca + j));
                    acc(*a, ga)?;
                    acc(*b, gb)?;
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    acc(*a, x.zip_map(&g, |x, g| 2.0 * x * g))?;
                }
                Op::Reciprocal(a) => {
                    let y = &node.value;
                    acc(*a, y.zip_map(&g, |y, g| -g * y * y))?;
                }
                Op::Sqrt(a) => {
                    let y = &node.value;
                    acc(*a, y.zip_map(&g, |y, g| g * 0.5 / y))?;
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    acc(*a, x.zip_map(&g, |x, g| g / x))?;
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(*a);
                    let (lo, hi) = (*lo, *hi);
                    acc(*a, x.zip_map(&g, |x, g| if x >= lo && x <= hi { g } else { 0.0 }))?;
                }
                Op::GatherRows(a, indices) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for (k, &i) in indices.iter().enumerate() {
                        for (d, s) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                            *d += s;
                        }
                    }
                    acc(*a, ga)?;
                }
            }
        }
        Ok(Gradients { grads: out })
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = exp(*x - max);
            total += *x;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    out
}

impl Matrix {
    pub(crate) fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        Matrix::from_vec(
            self.rows(),
            self.cols(),
            self.as_slice()
                .iter()
                .zip(other.as_slice())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
        .expect("same shape")
    }
}
