//! Build-once computation tape for reverse-mode differentiation.
//!
//! Ops append nodes; nodes record their inputs by id, so reverse
//! creation order is a reverse topological order. [`Tape::backward`]
//! seeds the loss gradient with 1 and walks the tape once, accumulating
//! each input's gradient exactly once per use.

use super::{NumericError, Scalar, Tensor};

/// Handle to a tensor living on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tid(usize);

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

enum Op<T> {
    Leaf,
    Matmul(Tid, Tid),
    /// `a * b^T`; keeps attention scores free of explicit transposes.
    MatmulNT(Tid, Tid),
    Add(Tid, Tid),
    Sub(Tid, Tid),
    Mul(Tid, Tid),
    /// matrix + row vector, broadcast over rows
    AddRow(Tid, Tid),
    /// matrix * row vector, broadcast over rows
    MulRow(Tid, Tid),
    Scale(Tid, T),
    /// `s - x`
    RsubScalar(Tid, T),
    Sigmoid(Tid),
    Tanh(Tid),
    Relu(Tid),
    SoftmaxRows(Tid),
    LayerNormRows(Tid),
    ConcatCols(Vec<Tid>),
    ConcatRows(Vec<Tid>),
    SliceCols(Tid, usize, usize),
    SliceRows(Tid, usize, usize),
    GatherRows(Tid, Vec<usize>),
    Reshape(Tid),
    MeanAll(Tid),
    /// element-mean BCE of probabilities against constant targets
    BceMean(Tid, Tensor<T>),
}

const LAYER_NORM_EPS: f64 = 1e-5;
const BCE_CLAMP: f64 = 1e-7;

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Tape<T> {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a differentiable leaf (a parameter).
    pub fn leaf(&mut self, value: Tensor<T>) -> Tid {
        self.push(value, true, Op::Leaf)
    }

    /// Insert a non-differentiable constant (inputs, targets).
    pub fn constant(&mut self, value: Tensor<T>) -> Tid {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, id: Tid) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient, present after `backward` for any node the
    /// loss depends on differentiably.
    pub fn grad(&self, id: Tid) -> Option<&Tensor<T>> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Move a gradient out of the tape.
    pub fn take_grad(&mut self, id: Tid) -> Option<Tensor<T>> {
        self.nodes[id.0].grad.take()
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Tid {
        debug_assert!(value.is_finite(), "op produced non-finite values");
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Tid(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[Tid]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> NumericError {
        NumericError::ShapeMismatch { op, lhs: a, rhs: b }
    }

    // ---- primitive ops ----

    pub fn matmul(&mut self, a: Tid, b: Tid) -> Result<Tid, NumericError> {
        let (m, k) = self.value(a).shape();
        let (k2, n) = self.value(b).shape();
        if k != k2 {
            return Err(Self::shape_err("matmul", (m, k), (k2, n)));
        }
        let mut out = Tensor::zeros(m, n);
        mm_acc(
            out.data_mut(),
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            m,
            k,
            n,
        );
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, rg, Op::Matmul(a, b)))
    }

    /// `a * b^T` for row-major operands of shapes (m, k) and (n, k).
    pub fn matmul_nt(&mut self, a: Tid, b: Tid) -> Result<Tid, NumericError> {
        let (m, k) = self.value(a).shape();
        let (n, k2) = self.value(b).shape();
        if k != k2 {
            return Err(Self::shape_err("matmul_nt", (m, k), (n, k2)));
        }
        let mut out = Tensor::zeros(m, n);
        mm_nt_acc(
            out.data_mut(),
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            m,
            k,
            n,
        );
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, rg, Op::MatmulNT(a, b)))
    }

    fn elementwise_pair(
        &mut self,
        op_name: &'static str,
        a: Tid,
        b: Tid,
    ) -> Result<(usize, usize), NumericError> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa != sb {
            return Err(Self::shape_err(op_name, sa, sb));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Tid, b: Tid) -> Result<Tid, NumericError> {
        let (r, c) = self.elementwise_pair("add", a, b)?;
        let mut out = Tensor::zeros(r, c);
        for (o, (x, y)) in out
            .data_mut()
            .iter_mut()
            .zip(self.nodes[a.0].value.data().iter().zip(self.nodes[b.0].value.data()))
        {
            *o = *x + *y;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Tid, b: Tid) -> Result<Tid, NumericError> {
        let (r, c) = self.elementwise_pair("sub", a, b)?;
        let mut out = Tensor::zeros(r, c);
        for (o, (x, y)) in out
            .data_mut()
            .iter_mut()
            .zip(self.nodes[a.0].value.data().iter().zip(self.nodes[b.0].value.data()))
        {
            *o = *x - *y;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Tid, b: Tid) -> Result<Tid, NumericError> {
        let (r, c) = self.elementwise_pair("mul", a, b)?;
        let mut out = Tensor::zeros(r, c);
        for (o, (x, y)) in out
            .data_mut()
            .iter_mut()
            .zip(self.nodes[a.0].value.data().iter().zip(self.nodes[b.0].value.data()))
        {
            *o = *x * *y;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, rg, Op::Mul(a, b)))
    }

    /// matrix (m, n) + row (1, n), broadcast down the rows.
    pub fn add_row(&mut self, m: Tid, row: Tid) -> Result<Tid, NumericError> {
        let (r, c) = self.value(m).shape();
        let rs = self.value(row).shape();
        if rs != (1, c) {
            return Err(Self::shape_err("add_row", (r, c), rs));
        }
        let mut out = self.value(m).clone();
        for i in 0..r {
            for j in 0..c {
                let v = out.get(i, j) + self.nodes[row.0].value.data()[j];
                out.set(i, j, v);
            }
        }
        let rg = self.needs(&[m, row]);
        Ok(self.push(out, rg, Op::AddRow(m, row)))
    }

    /// matrix (m, n) * row (1, n), broadcast down the rows.
    pub fn mul_row(&mut self, m: Tid, row: Tid) -> Result<Tid, NumericError> {
        let (r, c) = self.value(m).shape();
        let rs = self.value(row).shape();
        if rs != (1, c) {
            return Err(Self::shape_err("mul_row", (r, c), rs));
        }
        let mut out = self.value(m).clone();
        for i in 0..r {
            for j in 0..c {
                let v = out.get(i, j) * self.nodes[row.0].value.data()[j];
                out.set(i, j, v);
            }
        }
        let rg = self.needs(&[m, row]);
        Ok(self.push(out, rg, Op::MulRow(m, row)))
    }

    pub fn scale(&mut self, x: Tid, s: T) -> Tid {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = *v * s;
        }
        let rg = self.needs(&[x]);
        self.push(out, rg, Op::Scale(x, s))
    }

    /// `s - x` elementwise; `rsub_scalar(x, 1)` is the gate complement.
    pub fn rsub_scalar(&mut self, x: Tid, s: T) -> Tid {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = s - *v;
        }
        let rg = self.needs(&[x]);
        self.push(out, rg, Op::RsubScalar(x, s))
    }

    pub fn sigmoid(&mut self, x: Tid) -> Tid {
        let mut out = self.value(x).clone();
        let one = T::one();
        for v in out.data_mut() {
            *v = one / (one + (-*v).exp());
        }
        let rg = self.needs(&[x]);
        self.push(out, rg, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Tid) -> Tid {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = v.tanh();
        }
        let rg = self.needs(&[x]);
        self.push(out, rg, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Tid) -> Tid {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        let rg = self.needs(&[x]);
        self.push(out, rg, Op::Relu(x))
    }

    /// Row-wise softmax with max subtraction for stability.
    pub fn softmax_rows(&mut self, x: Tid) -> Tid {
        let (r, c) = self.value(x).shape();
        let mut out = Tensor::zeros(r, c);
        for i in 0..r {
            let row = self.nodes[x.0].value.row(i);
            let mut mx = row[0];
            for v in row {
                if *v > mx {
                    mx = *v;
                }
            }
            let mut sum = T::zero();
            for j in 0..c {
                let e = (row[j] - mx).exp();
                out.set(i, j, e);
                sum += e;
            }
            for j in 0..c {
                let v = out.get(i, j) / sum;
                out.set(i, j, v);
            }
        }
        let rg = self.needs(&[x]);
        self.push(out, rg, Op::SoftmaxRows(x))
    }

    /// Row-wise normalization to zero mean, unit variance (eps 1e-5).
    /// Learnable gain/bias are separate `mul_row`/`add_row` ops.
    pub fn layer_norm_rows(&mut self, x: Tid) -> Tid {
        let (r, c) = self.value(x).shape();
        let nc = T::from_f64(c as f64);
        let eps = T::from_f64(LAYER_NORM_EPS);
        let mut out = Tensor::zeros(r, c);
        for i in 0..r {
            let row = self.nodes[x.0].value.row(i);
            let mut mean = T::zero();
            for v in row {
                mean += *v;
            }
            mean = mean / nc;
            let mut var = T::zero();
            for v in row {
                var += (*v - mean) * (*v - mean);
            }
            var = var / nc;
            let inv = T::one() / (var + eps).sqrt();
            for j in 0..c {
                out.set(i, j, (row[j] - mean) * inv);
            }
        }
        let rg = self.needs(&[x]);
        self.push(out, rg, Op::LayerNormRows(x))
    }

    /// Concatenate along the given axis: 0 stacks rows, 1 joins columns.
    pub fn concat(&mut self, parts: &[Tid], axis: usize) -> Result<Tid, NumericError> {
        match axis {
            0 => self.concat_rows(parts),
            1 => self.concat_cols(parts),
            _ => Err(NumericError::InvalidArgument {
                op: "concat",
                detail: format!("axis {axis} not in {{0, 1}}"),
            }),
        }
    }

    pub fn concat_cols(&mut self, parts: &[Tid]) -> Result<Tid, NumericError> {
        if parts.is_empty() {
            return Err(NumericError::InvalidArgument {
                op: "concat_cols",
                detail: "no inputs".into(),
            });
        }
        let r = self.value(parts[0]).rows();
        let mut total = 0;
        for p in parts {
            let s = self.value(*p).shape();
            if s.0 != r {
                return Err(Self::shape_err("concat_cols", (r, 0), s));
            }
            total += s.1;
        }
        let mut out = Tensor::zeros(r, total);
        let mut off = 0;
        for p in parts {
            let (pr, pc) = self.value(*p).shape();
            for i in 0..pr {
                let src = self.nodes[p.0].value.row(i).to_vec();
                out.data_mut()[i * total + off..i * total + off + pc].copy_from_slice(&src);
            }
            off += pc;
        }
        let rg = self.needs(parts);
        Ok(self.push(out, rg, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Tid]) -> Result<Tid, NumericError> {
        if parts.is_empty() {
            return Err(NumericError::InvalidArgument {
                op: "concat_rows",
                detail: "no inputs".into(),
            });
        }
        let c = self.value(parts[0]).cols();
        let mut total = 0;
        for p in parts {
            let s = self.value(*p).shape();
            if s.1 != c {
                return Err(Self::shape_err("concat_rows", (0, c), s));
            }
            total += s.0;
        }
        let mut data = Vec::with_capacity(total * c);
        for p in parts {
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        let rg = self.needs(parts);
        Ok(self.push(Tensor::from_flat(total, c, data), rg, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Tid, start: usize, len: usize) -> Result<Tid, NumericError> {
        let (r, c) = self.value(x).shape();
        if start + len > c {
            return Err(NumericError::InvalidArgument {
                op: "slice_cols",
                detail: format!("range {start}..{} out of {c} cols", start + len),
            });
        }
        let mut out = Tensor::zeros(r, len);
        for i in 0..r {
            let src = &self.nodes[x.0].value.row(i)[start..start + len];
            out.data_mut()[i * len..(i + 1) * len].copy_from_slice(src);
        }
        let rg = self.needs(&[x]);
        Ok(self.push(out, rg, Op::SliceCols(x, start, len)))
    }

    pub fn slice_rows(&mut self, x: Tid, start: usize, len: usize) -> Result<Tid, NumericError> {
        let (r, c) = self.value(x).shape();
        if start + len > r {
            return Err(NumericError::InvalidArgument {
                op: "slice_rows",
                detail: format!("range {start}..{} out of {r} rows", start + len),
            });
        }
        let data = self.nodes[x.0].value.data()[start * c..(start + len) * c].to_vec();
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::from_flat(len, c, data), rg, Op::SliceRows(x, start, len)))
    }

    /// Row permutation/selection: output row i is `x` row `indices[i]`.
    pub fn gather_rows(&mut self, x: Tid, indices: &[usize]) -> Result<Tid, NumericError> {
        let (r, c) = self.value(x).shape();
        if let Some(bad) = indices.iter().find(|&&i| i >= r) {
            return Err(NumericError::InvalidArgument {
                op: "gather_rows",
                detail: format!("index {bad} out of {r} rows"),
            });
        }
        let mut out = Tensor::zeros(indices.len(), c);
        for (i, &src) in indices.iter().enumerate() {
            let row = self.nodes[x.0].value.row(src).to_vec();
            out.data_mut()[i * c..(i + 1) * c].copy_from_slice(&row);
        }
        let rg = self.needs(&[x]);
        Ok(self.push(out, rg, Op::GatherRows(x, indices.to_vec())))
    }

    pub fn reshape(&mut self, x: Tid, rows: usize, cols: usize) -> Result<Tid, NumericError> {
        if rows * cols != self.value(x).len() {
            return Err(NumericError::InvalidArgument {
                op: "reshape",
                detail: format!("({rows}, {cols}) incompatible with {} values", self.value(x).len()),
            });
        }
        let out = self.value(x).reshaped(rows, cols);
        let rg = self.needs(&[x]);
        Ok(self.push(out, rg, Op::Reshape(x)))
    }

    /// Mean over all elements, as a 1x1 tensor.
    pub fn mean_all(&mut self, x: Tid) -> Tid {
        let mut sum = T::zero();
        for v in self.nodes[x.0].value.data() {
            sum += *v;
        }
        let mean = sum / T::from_f64(self.value(x).len() as f64);
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(mean), rg, Op::MeanAll(x))
    }

    /// Mean element-wise binary cross-entropy of probabilities against
    /// one-hot targets; probabilities clamped to [1e-7, 1 - 1e-7].
    pub fn bce_mean(&mut self, probs: Tid, targets: &Tensor<T>) -> Result<Tid, NumericError> {
        let sp = self.value(probs).shape();
        if sp != targets.shape() {
            return Err(Self::shape_err("bce_mean", sp, targets.shape()));
        }
        let lo = T::from_f64(BCE_CLAMP);
        let hi = T::one() - lo;
        let mut acc = 0.0f64;
        for (p, y) in self.nodes[probs.0].value.data().iter().zip(targets.data()) {
            let pc = (*p).max(lo).min(hi).as_f64();
            let yv = y.as_f64();
            acc -= yv * pc.ln() + (1.0 - yv) * (1.0 - pc).ln();
        }
        let loss = T::from_f64(acc / targets.len() as f64);
        let rg = self.needs(&[probs]);
        Ok(self.push(Tensor::scalar(loss), rg, Op::BceMean(probs, targets.clone())))
    }

    // ---- backward ----

    fn add_grad(&mut self, id: Tid, delta: &Tensor<T>) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let (r, c) = self.nodes[id.0].value.shape();
        let grad = self.nodes[id.0]
            .grad
            .get_or_insert_with(|| Tensor::zeros(r, c));
        debug_assert_eq!(grad.shape(), delta.shape());
        for (g, d) in grad.data_mut().iter_mut().zip(delta.data()) {
            *g += *d;
        }
    }

    /// Backpropagate from a scalar output node.
    pub fn backward(&mut self, loss: Tid) -> Result<(), NumericError> {
        if self.value(loss).shape() != (1, 1) {
            return Err(NumericError::InvalidArgument {
                op: "backward",
                detail: format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.take() else {
                continue;
            };
            self.propagate(idx, &g);
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, idx: usize, g: &Tensor<T>) {
        // The op is moved out for the duration so gradient writes do not
        // alias the match scrutinee; inputs always precede idx.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let (m, k) = self.value(a).shape();
                let n = self.value(b).cols();
                if self.nodes[a.0].requires_grad {
                    let mut da = Tensor::zeros(m, k);
                    mm_nt_acc(da.data_mut(), g.data(), self.nodes[b.0].value.data(), m, n, k);
                    self.add_grad(a, &da);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = Tensor::zeros(k, n);
                    mm_tn_acc(db.data_mut(), self.nodes[a.0].value.data(), g.data(), m, k, n);
                    self.add_grad(b, &db);
                }
            }
            Op::MatmulNT(a, b) => {
                let (a, b) = (*a, *b);
                let (m, k) = self.value(a).shape();
                let n = self.value(b).rows();
                if self.nodes[a.0].requires_grad {
                    let mut da = Tensor::zeros(m, k);
                    mm_acc(da.data_mut(), g.data(), self.nodes[b.0].value.data(), m, n, k);
                    self.add_grad(a, &da);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = Tensor::zeros(n, k);
                    mm_tn_acc(db.data_mut(), g.data(), self.nodes[a.0].value.data(), m, n, k);
                    self.add_grad(b, &db);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.add_grad(a, g);
                self.add_grad(b, g);
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                self.add_grad(a, g);
                if self.nodes[b.0].requires_grad {
                    let mut neg = g.clone();
                    for v in neg.data_mut() {
                        *v = -*v;
                    }
                    self.add_grad(b, &neg);
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.nodes[a.0].requires_grad {
                    let mut da = g.clone();
                    for (v, y) in da.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
                        *v = *v * *y;
                    }
                    self.add_grad(a, &da);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = g.clone();
                    for (v, x) in db.data_mut().iter_mut().zip(self.nodes[a.0].value.data()) {
                        *v = *v * *x;
                    }
                    self.add_grad(b, &db);
                }
            }
            Op::AddRow(m, row) => {
                let (m, row) = (*m, *row);
                self.add_grad(m, g);
                if self.nodes[row.0].requires_grad {
                    let (r, c) = g.shape();
                    let mut dr = Tensor::zeros(1, c);
                    for i in 0..r {
                        for j in 0..c {
                            dr.data_mut()[j] += g.get(i, j);
                        }
                    }
                    self.add_grad(row, &dr);
                }
            }
            Op::MulRow(m, row) => {
                let (m, row) = (*m, *row);
                let (r, c) = g.shape();
                if self.nodes[m.0].requires_grad {
                    let mut dm = g.clone();
                    for i in 0..r {
                        for j in 0..c {
                            let v = dm.get(i, j) * self.nodes[row.0].value.data()[j];
                            dm.set(i, j, v);
                        }
                    }
                    self.add_grad(m, &dm);
                }
                if self.nodes[row.0].requires_grad {
                    let mut dr = Tensor::zeros(1, c);
                    for i in 0..r {
                        for j in 0..c {
                            dr.data_mut()[j] += g.get(i, j) * self.nodes[m.0].value.get(i, j);
                        }
                    }
                    self.add_grad(row, &dr);
                }
            }
            Op::Scale(x, s) => {
                let (x, s) = (*x, *s);
                let mut dx = g.clone();
                for v in dx.data_mut() {
                    *v = *v * s;
                }
                self.add_grad(x, &dx);
            }
            Op::RsubScalar(x, _) => {
                let x = *x;
                let mut dx = g.clone();
                for v in dx.data_mut() {
                    *v = -*v;
                }
                self.add_grad(x, &dx);
            }
            Op::Sigmoid(x) => {
                let x = *x;
                let mut dx = g.clone();
                for (v, y) in dx.data_mut().iter_mut().zip(self.nodes[idx].value.data()) {
                    *v = *v * *y * (T::one() - *y);
                }
                self.add_grad(x, &dx);
            }
            Op::Tanh(x) => {
                let x = *x;
                let mut dx = g.clone();
                for (v, y) in dx.data_mut().iter_mut().zip(self.nodes[idx].value.data()) {
                    *v = *v * (T::one() - *y * *y);
                }
                self.add_grad(x, &dx);
            }
            Op::Relu(x) => {
                let x = *x;
                let mut dx = g.clone();
                for (v, xin) in dx.data_mut().iter_mut().zip(self.nodes[x.0].value.data()) {
                    if *xin <= T::zero() {
                        *v = T::zero();
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::SoftmaxRows(x) => {
                let x = *x;
                let (r, c) = g.shape();
                let mut dx = Tensor::zeros(r, c);
                for i in 0..r {
                    let y = self.nodes[idx].value.row(i);
                    let gr = g.row(i);
                    let mut dot = T::zero();
                    for j in 0..c {
                        dot += gr[j] * y[j];
                    }
                    for j in 0..c {
                        dx.set(i, j, y[j] * (gr[j] - dot));
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::LayerNormRows(x) => {
                let x = *x;
                let (r, c) = g.shape();
                let nc = T::from_f64(c as f64);
                let eps = T::from_f64(LAYER_NORM_EPS);
                let mut dx = Tensor::zeros(r, c);
                for i in 0..r {
                    let xin = self.nodes[x.0].value.row(i);
                    let y = self.nodes[idx].value.row(i);
                    let gr = g.row(i);
                    let mut mean = T::zero();
                    for v in xin {
                        mean += *v;
                    }
                    mean = mean / nc;
                    let mut var = T::zero();
                    for v in xin {
                        var += (*v - mean) * (*v - mean);
                    }
                    var = var / nc;
                    let inv = T::one() / (var + eps).sqrt();
                    let mut gmean = T::zero();
                    let mut gydot = T::zero();
                    for j in 0..c {
                        gmean += gr[j];
                        gydot += gr[j] * y[j];
                    }
                    gmean = gmean / nc;
                    gydot = gydot / nc;
                    for j in 0..c {
                        dx.set(i, j, inv * (gr[j] - gmean - y[j] * gydot));
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut off = 0;
                for &p in parts {
                    let (pr, pc) = self.value(p).shape();
                    if self.nodes[p.0].requires_grad {
                        let mut dp = Tensor::zeros(pr, pc);
                        for i in 0..pr {
                            for j in 0..pc {
                                dp.set(i, j, g.data()[i * total + off + j]);
                            }
                        }
                        self.add_grad(p, &dp);
                    }
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut off = 0;
                for &p in parts {
                    let pr = self.value(p).rows();
                    if self.nodes[p.0].requires_grad {
                        let data = g.data()[off * c..(off + pr) * c].to_vec();
                        self.add_grad(p, &Tensor::from_flat(pr, c, data));
                    }
                    off += pr;
                }
            }
            Op::SliceCols(x, start, len) => {
                let (x, start, len) = (*x, *start, *len);
                let (r, c) = self.value(x).shape();
                let mut dx = Tensor::zeros(r, c);
                for i in 0..r {
                    for j in 0..len {
                        dx.set(i, start + j, g.get(i, j));
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::SliceRows(x, start, len) => {
                let (x, start, len) = (*x, *start, *len);
                let (r, c) = self.value(x).shape();
                let mut dx = Tensor::zeros(r, c);
                dx.data_mut()[start * c..(start + len) * c].copy_from_slice(g.data());
                self.add_grad(x, &dx);
            }
            Op::GatherRows(x, indices) => {
                let x = *x;
                let (r, c) = self.value(x).shape();
                let mut dx = Tensor::zeros(r, c);
                for (i, &src) in indices.iter().enumerate() {
                    for j in 0..c {
                        let v = dx.get(src, j) + g.get(i, j);
                        dx.set(src, j, v);
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::Reshape(x) => {
                let x = *x;
                let (r, c) = self.value(x).shape();
                self.add_grad(x, &g.reshaped(r, c));
            }
            Op::MeanAll(x) => {
                let x = *x;
                let (r, c) = self.value(x).shape();
                let scale = g.item() / T::from_f64((r * c) as f64);
                self.add_grad(x, &Tensor::filled(r, c, scale));
            }
            Op::BceMean(p, targets) => {
                let p = *p;
                let lo = T::from_f64(BCE_CLAMP);
                let hi = T::one() - lo;
                let scale = g.item() / T::from_f64(targets.len() as f64);
                let (r, c) = self.value(p).shape();
                let mut dp = Tensor::zeros(r, c);
                for ((d, pv), y) in dp
                    .data_mut()
                    .iter_mut()
                    .zip(self.nodes[p.0].value.data())
                    .zip(targets.data())
                {
                    // clamped values have zero local derivative
                    if *pv > lo && *pv < hi {
                        *d = scale * (*pv - *y) / (*pv * (T::one() - *pv));
                    }
                }
                self.add_grad(p, &dp);
            }
        }
        self.nodes[idx].op = op;
    }
}

// ---- raw accumulate kernels shared by forward and backward ----

/// out (m, n) += a (m, k) * b (k, n)
fn mm_acc<T: Scalar>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += *av * brow[j];
            }
        }
    }
}

/// out (m, n) += a (m, k) * b^T where b is (n, k)
fn mm_nt_acc<T: Scalar>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut dot = T::zero();
            for p in 0..k {
                dot += arow[p] * brow[p];
            }
            orow[j] += dot;
        }
    }
}

/// out (k, n) += a^T * b where a is (m, k), b is (m, n)
fn mm_tn_acc<T: Scalar>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += *av * brow[j];
            }
        }
    }
}
