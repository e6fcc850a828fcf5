//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation applied to its variables; calling
//! [`Tape::backward`] on a scalar (1x1) output walks the record in reverse
//! and accumulates gradients for every node that (transitively) depends on a
//! leaf. The gradient formula for each operation is documented next to its
//! backward rule in `accumulate`.
//!
//! The surface is intentionally small: the handful of operations the
//! detectors need, nothing more. Every operation is checked against central
//! finite differences in this module's tests.

use crate::matrix::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// The operation that produced a node, with parent indices.
#[derive(Debug, Clone)]
enum Op {
    /// Trainable input; gradients are tracked.
    Leaf,
    /// Fixed input; no gradient flows into it.
    Constant,
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    /// Add a 1 x c row vector to every row of an r x c matrix.
    AddRow(usize, usize),
    Scale(usize, f64),
    Shift(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Square(usize),
    LeakyRelu(usize, f64),
    SoftmaxRows(usize),
    RowSum(usize),
    SumAll(usize),
    MeanAll(usize),
    /// Repeat a 1 x c row vector `rows` times.
    BroadcastRow(usize),
    /// Repeat an r x 1 column vector `cols` times.
    BroadcastCol(usize),
    Transpose(usize),
    SliceRows(usize, usize, usize),
    SliceCols(usize, usize, usize),
    ConcatRows(usize, usize),
    ConcatCols(usize, usize),
    GatherRows(usize, Vec<usize>),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], addressed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if any flowed there.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Take ownership of the gradient for `v` (replaces it with `None`).
    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads[v.0].take()
    }
}

impl Tape {
    /// A fresh, empty tape.
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True if nothing has been recorded.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The current value of a node.
    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// Register a trainable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Register a fixed input that gradients do not flow into.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::Matmul(a.0, b.0), ng)
    }

    /// Entry-wise sum of two same-shape matrices.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b));
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::Add(a.0, b.0), ng)
    }

    /// Entry-wise difference.
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).sub(self.value(b));
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::Sub(a.0, b.0), ng)
    }

    /// Entry-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).mul(self.value(b));
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::Mul(a.0, b.0), ng)
    }

    /// Entry-wise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip(self.value(b), |x, y| x / y);
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::Div(a.0, b.0), ng)
    }

    /// Add a 1 x c row vector `v` to every row of `a`.
    pub fn add_row(&mut self, a: Var, v: Var) -> Var {
        let (rows, cols) = self.value(a).shape();
        assert_eq!(self.value(v).shape(), (1, cols), "add_row shape mismatch");
        let mut value = self.value(a).clone();
        for r in 0..rows {
            for c in 0..cols {
                let inc = self.value(v).get(0, c);
                value.set(r, c, value.get(r, c) + inc);
            }
        }
        let ng = self.needs(a.0) || self.needs(v.0);
        self.push(value, Op::AddRow(a.0, v.0), ng)
    }

    /// Multiply every entry by the fixed scalar `s`.
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let ng = self.needs(a.0);
        self.push(value, Op::Scale(a.0, s), ng)
    }

    /// Add the fixed scalar `s` to every entry.
    pub fn shift(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        let ng = self.needs(a.0);
        self.push(value, Op::Shift(a.0), ng)
    }

    /// Entry-wise hyperbolic tangent.
    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let ng = self.needs(a.0);
        self.push(value, Op::Tanh(a.0), ng)
    }

    /// Entry-wise logistic sigmoid.
    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        let ng = self.needs(a.0);
        self.push(value, Op::Sigmoid(a.0), ng)
    }

    /// Entry-wise exponential.
    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let ng = self.needs(a.0);
        self.push(value, Op::Exp(a.0), ng)
    }

    /// Entry-wise natural logarithm.
    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        let ng = self.needs(a.0);
        self.push(value, Op::Ln(a.0), ng)
    }

    /// Entry-wise square root.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        let ng = self.needs(a.0);
        self.push(value, Op::Sqrt(a.0), ng)
    }

    /// Entry-wise square.
    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let ng = self.needs(a.0);
        self.push(value, Op::Square(a.0), ng)
    }

    /// Entry-wise leaky ReLU with the given negative slope.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let ng = self.needs(a.0);
        self.push(value, Op::LeakyRelu(a.0, slope), ng)
    }

    /// Row-wise softmax (each row sums to 1). Shifts by the row max for
    /// numerical stability; the gradient is unaffected by the shift.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row = x.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for c in 0..cols {
                value.set(r, c, exps[c] / denom);
            }
        }
        let ng = self.needs(a.0);
        self.push(value, Op::SoftmaxRows(a.0), ng)
    }

    /// Sum along each row, producing an r x 1 column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = Matrix::zeros(x.rows(), 1);
        for r in 0..x.rows() {
            value.set(r, 0, x.row(r).iter().sum());
        }
        let ng = self.needs(a.0);
        self.push(value, Op::RowSum(a.0), ng)
    }

    /// Sum of all entries as a 1x1 matrix.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Matrix::from_vec(1, 1, vec![self.value(a).sum()]);
        let ng = self.needs(a.0);
        self.push(value, Op::SumAll(a.0), ng)
    }

    /// Mean of all entries as a 1x1 matrix.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let value = Matrix::from_vec(1, 1, vec![self.value(a).mean()]);
        let ng = self.needs(a.0);
        self.push(value, Op::MeanAll(a.0), ng)
    }

    /// Repeat a 1 x c row vector down `rows` rows.
    pub fn broadcast_row(&mut self, a: Var, rows: usize) -> Var {
        let v = self.value(a);
        assert_eq!(v.rows(), 1, "broadcast_row expects a 1 x c input");
        let mut value = Matrix::zeros(rows, v.cols());
        for r in 0..rows {
            for c in 0..v.cols() {
                value.set(r, c, v.get(0, c));
            }
        }
        let ng = self.needs(a.0);
        self.push(value, Op::BroadcastRow(a.0), ng)
    }

    /// Repeat an r x 1 column vector across `cols` columns.
    pub fn broadcast_col(&mut self, a: Var, cols: usize) -> Var {
        let v = self.value(a);
        assert_eq!(v.cols(), 1, "broadcast_col expects an r x 1 input");
        let mut value = Matrix::zeros(v.rows(), cols);
        for r in 0..v.rows() {
            for c in 0..cols {
                value.set(r, c, v.get(r, 0));
            }
        }
        let ng = self.needs(a.0);
        self.push(value, Op::BroadcastCol(a.0), ng)
    }

    /// Transpose.
    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let ng = self.needs(a.0);
        self.push(value, Op::Transpose(a.0), ng)
    }

    /// Rows `lo..hi` as a new node.
    pub fn slice_rows(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let value = self.value(a).slice_rows(lo, hi);
        let ng = self.needs(a.0);
        self.push(value, Op::SliceRows(a.0, lo, hi), ng)
    }

    /// Columns `lo..hi` as a new node.
    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let value = self.value(a).slice_cols(lo, hi);
        let ng = self.needs(a.0);
        self.push(value, Op::SliceCols(a.0, lo, hi), ng)
    }

    /// Vertical concatenation (`a` above `b`).
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).vstack(self.value(b));
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::ConcatRows(a.0, b.0), ng)
    }

    /// Horizontal concatenation (`a` left of `b`).
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).hstack(self.value(b));
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::ConcatCols(a.0, b.0), ng)
    }

    /// The listed rows of `a`, in order (rows may repeat).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let value = self.value(a).gather_rows(indices);
        let ng = self.needs(a.0);
        self.push(value, Op::GatherRows(a.0, indices.to_vec()), ng)
    }

    /// Convenience: mean squared error between two same-shape nodes, as 1x1.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.square(d);
        self.mean_all(sq)
    }

    /// Run reverse-mode accumulation from the scalar node `loss`.
    ///
    /// Panics if `loss` is not 1x1. Returns one gradient per node that lies
    /// on a path from a leaf to `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(
            self.nodes[loss.0].value.shape(),
            (1, 1),
            "backward requires a scalar (1x1) loss"
        );
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.accumulate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    /// Add the contribution of node `i` (output gradient `g`) to its parents.
    fn accumulate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        // Adds `delta` into the gradient slot for parent `p`, skipping
        // parents that no gradient should flow into.
        let send = |p: usize, delta: Matrix, grads: &mut [Option<Matrix>]| {
            if !self.nodes[p].needs_grad {
                return;
            }
            match &mut grads[p] {
                Some(acc) => *acc = acc.add(&delta),
                slot @ None => *slot = Some(delta),
            }
        };

        match &self.nodes[i].op {
            Op::Leaf | Op::Constant => {}

            // C = A·B  =>  dA = G·Bᵀ, dB = Aᵀ·G.
            Op::Matmul(a, b) => {
                let ga = g.matmul(&self.nodes[*b].value.transpose());
                let gb = self.nodes[*a].value.transpose().matmul(g);
                send(*a, ga, grads);
                send(*b, gb, grads);
            }

            // C = A + B  =>  dA = G, dB = G.
            Op::Add(a, b) => {
                send(*a, g.clone(), grads);
                send(*b, g.clone(), grads);
            }

            // C = A - B  =>  dA = G, dB = -G.
            Op::Sub(a, b) => {
                send(*a, g.clone(), grads);
                send(*b, g.scale(-1.0), grads);
            }

            // C = A ⊙ B  =>  dA = G ⊙ B, dB = G ⊙ A.
            Op::Mul(a, b) => {
                send(*a, g.mul(&self.nodes[*b].value), grads);
                send(*b, g.mul(&self.nodes[*a].value), grads);
            }

            // C = A ⊘ B  =>  dA = G ⊘ B, dB = -G ⊙ A ⊘ B².
            Op::Div(a, b) => {
                let bv = &self.nodes[*b].value;
                send(*a, g.zip(bv, |gv, y| gv / y), grads);
                let av = &self.nodes[*a].value;
                let gb = g
                    .mul(av)
                    .zip(bv, |num, y| -num / (y * y));
                send(*b, gb, grads);
            }

            // C = A + 1·v  =>  dA = G, dv = column-sum of G (1 x c).
            Op::AddRow(a, v) => {
                send(*a, g.clone(), grads);
                let mut gv = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        gv.set(0, c, gv.get(0, c) + g.get(r, c));
                    }
                }
                send(*v, gv, grads);
            }

            Op::Scale(a, s) => send(*a, g.scale(*s), grads),
            Op::Shift(a) => send(*a, g.clone(), grads),

            // y = tanh(x)  =>  dx = G ⊙ (1 - y²).
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                send(*a, g.zip(y, |gv, yv| gv * (1.0 - yv * yv)), grads);
            }

            // y = σ(x)  =>  dx = G ⊙ y(1 - y).
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                send(*a, g.zip(y, |gv, yv| gv * yv * (1.0 - yv)), grads);
            }

            // y = eˣ  =>  dx = G ⊙ y.
            Op::Exp(a) => {
                let y = &self.nodes[i].value;
                send(*a, g.mul(y), grads);
            }

            // y = ln x  =>  dx = G ⊘ x.
            Op::Ln(a) => {
                let x = &self.nodes[*a].value;
                send(*a, g.zip(x, |gv, xv| gv / xv), grads);
            }

            // y = √x  =>  dx = G ⊙ 1/(2y).
            Op::Sqrt(a) => {
                let y = &self.nodes[i].value;
                send(*a, g.zip(y, |gv, yv| gv * 0.5 / yv), grads);
            }

            // y = x²  =>  dx = G ⊙ 2x.
            Op::Square(a) => {
                let x = &self.nodes[*a].value;
                send(*a, g.zip(x, |gv, xv| gv * 2.0 * xv), grads);
            }

            // y = x if x > 0 else s·x  =>  dx = G ⊙ (1 or s).
            Op::LeakyRelu(a, s) => {
                let x = &self.nodes[*a].value;
                send(
                    *a,
                    g.zip(x, |gv, xv| if xv > 0.0 { gv } else { gv * s }),
                    grads,
                );
            }

            // y = softmax(x) per row  =>  dx_i = y_i (g_i - Σ_j g_j y_j).
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut gx = Matrix::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let dot: f64 = g
                        .row(r)
                        .iter()
                        .zip(y.row(r))
                        .map(|(gv, yv)| gv * yv)
                        .sum();
                    for c in 0..g.cols() {
                        gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                send(*a, gx, grads);
            }

            // y_r = Σ_c x_rc  =>  dx_rc = g_r.
            Op::RowSum(a) => {
                let x = &self.nodes[*a].value;
                let mut gx = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    for c in 0..x.cols() {
                        gx.set(r, c, g.get(r, 0));
                    }
                }
                send(*a, gx, grads);
            }

            // y = Σ x  =>  dx = g · 1.
            Op::SumAll(a) => {
                let x = &self.nodes[*a].value;
                send(*a, Matrix::filled(x.rows(), x.cols(), g.get(0, 0)), grads);
            }

            // y = mean(x)  =>  dx = g / n.
            Op::MeanAll(a) => {
                let x = &self.nodes[*a].value;
                let n = x.len() as f64;
                send(
                    *a,
                    Matrix::filled(x.rows(), x.cols(), g.get(0, 0) / n),
                    grads,
                );
            }

            // Broadcast down rows  =>  gradient sums over rows.
            Op::BroadcastRow(a) => {
                let mut gv = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        gv.set(0, c, gv.get(0, c) + g.get(r, c));
                    }
                }
                send(*a, gv, grads);
            }

            // Broadcast across cols  =>  gradient sums over cols.
            Op::BroadcastCol(a) => {
                let mut gv = Matrix::zeros(g.rows(), 1);
                for r in 0..g.rows() {
                    let s: f64 = g.row(r).iter().sum();
                    gv.set(r, 0, s);
                }
                send(*a, gv, grads);
            }

            Op::Transpose(a) => send(*a, g.transpose(), grads),

            // Slice  =>  scatter G back into the sliced range, zero elsewhere.
            Op::SliceRows(a, lo, _hi) => {
                let x = &self.nodes[*a].value;
                let mut gx = Matrix::zeros(x.rows(), x.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        gx.set(lo + r, c, g.get(r, c));
                    }
                }
                send(*a, gx, grads);
            }
            Op::SliceCols(a, lo, _hi) => {
                let x = &self.nodes[*a].value;
                let mut gx = Matrix::zeros(x.rows(), x.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        gx.set(r, lo + c, g.get(r, c));
                    }
                }
                send(*a, gx, grads);
            }

            // Concat  =>  split G at the seam.
            Op::ConcatRows(a, b) => {
                let ra = self.nodes[*a].value.rows();
                send(*a, g.slice_rows(0, ra), grads);
                send(*b, g.slice_rows(ra, g.rows()), grads);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.nodes[*a].value.cols();
                send(*a, g.slice_cols(0, ca), grads);
                send(*b, g.slice_cols(ca, g.cols()), grads);
            }

            // Gather  =>  scatter-add G rows back to their sources
            // (a source row picked twice receives both contributions).
            Op::GatherRows(a, indices) => {
                let x = &self.nodes[*a].value;
                let mut gx = Matrix::zeros(x.rows(), x.cols());
                for (out_r, &src_r) in indices.iter().enumerate() {
                    for c in 0..g.cols() {
                        gx.set(src_r, c, gx.get(src_r, c) + g.get(out_r, c));
                    }
                }
                send(*a, gx, grads);
            }
        }
    }
}
