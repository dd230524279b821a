//! Reverse-mode differentiation over a linear operation tape.
//!
//! Values are computed eagerly as operations are recorded, so forward results
//! are available mid-rollout (the policies sample from them). `backward` then
//! replays the tape in reverse, accumulating one gradient per node. Nodes are
//! appended in dependency order by construction, so a single reverse sweep
//! visits every node exactly once.

use crate::autodiff::mat::{matmul_nn_acc, matmul_nt_acc, matmul_tn_acc};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a tape node.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(usize);

enum Op {
    Leaf,
    /// y = x @ w^T + b, x: [b, n], w: [m, n], b: [m]
    Affine { x: Var, w: Var, b: Var },
    /// y = x @ w^T, x: [b, n], w: [m, n]
    Linear { x: Var, w: Var },
    /// y[r] = table[idx[r]], table: [v, e]
    GatherRows { table: Var, idx: Vec<usize> },
    /// y = [a | b] along the last axis
    ConcatCols { a: Var, b: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    /// y = x[:, start..start+len]
    SliceCols { x: Var, start: usize, len: usize },
    /// log-softmax over each row
    LogSoftmaxRows { x: Var },
    /// y[r] = x[r, idx[r]]
    PickPerRow { x: Var, idx: Vec<usize> },
    /// scalar = scale * sum_r weights[r] * x[r]
    WeightedSum { x: Var, weights: Vec<f64>, scale: f64 },
    /// scalar = sum of all elements
    SumAll { x: Var },
    /// y[r] = -sum_j exp(x[r,j]) * x[r,j], for x holding row-wise log-probs
    EntropyRows { x: Var },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by one backward sweep, indexed by `Var`.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Moves the gradient out, leaving `None`. Nodes the loss never reached
    /// yield a zero tensor of the given shape.
    pub fn take_or_zeros(&mut self, v: Var, shape: &[usize]) -> Tensor {
        self.grads[v.0].take().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers a parameter snapshot. Identical to `leaf` except the data is
    /// copied, so later mutation of the source cannot alias the tape.
    pub fn param(&mut self, value: &Tensor) -> Var {
        self.push(value.clone(), Op::Leaf)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x), self.value(w), self.value(b));
        let n = xs.cols();
        let (rows, cols) = (xs.rows(), ws.shape()[0]);
        if ws.shape().len() != 2 || ws.shape()[1] != n || bs.numel() != cols {
            return Err(Error::shape(
                "affine",
                format!("x {:?}, w {:?}, b {:?}", xs.shape(), ws.shape(), bs.shape()),
            ));
        }
        let mut out = vec![0.0; rows * cols];
        for orow in out.chunks_exact_mut(cols) {
            orow.copy_from_slice(bs.data());
        }
        matmul_nt_acc(xs.data(), ws.data(), &mut out, rows, n, cols);
        let shape = out_shape(xs.shape(), cols);
        let value = Tensor::from_vec(&shape, out)?;
        Ok(self.push(value, Op::Affine { x, w, b }))
    }

    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xs, ws) = (self.value(x), self.value(w));
        let n = xs.cols();
        let (rows, cols) = (xs.rows(), ws.shape()[0]);
        if ws.shape().len() != 2 || ws.shape()[1] != n {
            return Err(Error::shape(
                "linear",
                format!("x {:?}, w {:?}", xs.shape(), ws.shape()),
            ));
        }
        let mut out = vec![0.0; rows * cols];
        matmul_nt_acc(xs.data(), ws.data(), &mut out, rows, n, cols);
        let shape = out_shape(xs.shape(), cols);
        let value = Tensor::from_vec(&shape, out)?;
        Ok(self.push(value, Op::Linear { x, w }))
    }

    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.shape().len() != 2 {
            return Err(Error::shape("gather_rows", format!("table {:?}", t.shape())));
        }
        let (v, e) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(idx.len() * e);
        for &r in idx {
            if r >= v {
                return Err(Error::usage(format!("gather_rows: index {r} out of range {v}")));
            }
            out.extend_from_slice(&t.data()[r * e..(r + 1) * e]);
        }
        let value = Tensor::from_vec(&[idx.len(), e], out)?;
        Ok(self.push(value, Op::GatherRows { table, idx: idx.to_vec() }))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.shape().len() != tb.shape().len() {
            return Err(Error::shape(
                "concat_cols",
                format!("a {:?}, b {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (rows, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for (ra, rb) in ta.data().chunks_exact(ca).zip(tb.data().chunks_exact(cb)) {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        let shape = out_shape(ta.shape(), ca + cb);
        let value = Tensor::from_vec(&shape, out)?;
        Ok(self.push(value, Op::ConcatCols { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("add", format!("a {:?}, b {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::from_vec(ta.shape().to_vec().as_slice(), data)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("mul", format!("a {:?}, b {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::from_vec(ta.shape().to_vec().as_slice(), data)?;
        Ok(self.push(value, Op::Mul { a, b }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
        let value = Tensor::from_vec(t.shape().to_vec().as_slice(), data).unwrap();
        self.push(value, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| v.tanh()).collect();
        let value = Tensor::from_vec(t.shape().to_vec().as_slice(), data).unwrap();
        self.push(value, Op::Tanh { x })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let cols = t.cols();
        if start + len > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("range {start}..{} of {cols} cols", start + len),
            ));
        }
        let mut out = Vec::with_capacity(t.rows() * len);
        for row in t.data().chunks_exact(cols) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let shape = out_shape(t.shape(), len);
        let value = Tensor::from_vec(&shape, out)?;
        Ok(self.push(value, Op::SliceCols { x, start, len }))
    }

    /// Row-wise log-softmax via max-subtracted log-sum-exp.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let cols = t.cols();
        if cols == 0 {
            return Err(Error::shape("log_softmax", "empty rows".to_string()));
        }
        let mut out = Vec::with_capacity(t.numel());
        for row in t.data().chunks_exact(cols) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|&v| v - lse));
        }
        let value = Tensor::from_vec(t.shape().to_vec().as_slice(), out)?;
        Ok(self.push(value, Op::LogSoftmaxRows { x }))
    }

    pub fn pick_per_row(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if idx.len() != rows {
            return Err(Error::shape(
                "pick_per_row",
                format!("{} indices for {} rows", idx.len(), rows),
            ));
        }
        let mut out = Vec::with_capacity(rows);
        for (row, &j) in t.data().chunks_exact(cols).zip(idx) {
            if j >= cols {
                return Err(Error::usage(format!("pick_per_row: index {j} out of range {cols}")));
            }
            out.push(row[j]);
        }
        let value = Tensor::from_vec(&[rows], out)?;
        Ok(self.push(value, Op::PickPerRow { x, idx: idx.to_vec() }))
    }

    pub fn weighted_sum(&mut self, x: Var, weights: &[f64], scale: f64) -> Result<Var> {
        let t = self.value(x);
        if t.numel() != weights.len() {
            return Err(Error::shape(
                "weighted_sum",
                format!("{} weights for {} values", weights.len(), t.numel()),
            ));
        }
        let s: f64 = t.data().iter().zip(weights).map(|(v, w)| v * w).sum();
        let value = Tensor::scalar(scale * s);
        Ok(self.push(value, Op::WeightedSum { x, weights: weights.to_vec(), scale }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll { x })
    }

    /// Shannon entropy of each row of a log-probability matrix.
    pub fn entropy_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let cols = t.cols();
        if cols == 0 {
            return Err(Error::shape("entropy_rows", "empty rows".to_string()));
        }
        let out: Vec<f64> = t
            .data()
            .chunks_exact(cols)
            .map(|row| -row.iter().map(|&lp| lp.exp() * lp).sum::<f64>())
            .collect();
        let rows = out.len();
        let value = Tensor::from_vec(&[rows], out)?;
        Ok(self.push(value, Op::EntropyRows { x }))
    }

    /// Reverse sweep from a scalar loss. The tape is consumed: a second call
    /// is a usage error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::usage("backward called twice on a consumed tape"));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let seed_shape = self.value(loss).shape().to_vec();
        grads[loss.0] = Some(Tensor::from_vec(&seed_shape, vec![1.0]).unwrap());

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backward_op(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backward_op(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (xs, ws) = (self.value(*x), self.value(*w));
                let (rows, n, m) = (xs.rows(), xs.cols(), ws.shape()[0]);
                let dx = acc_slot(grads, *x, xs.shape());
                matmul_nn_acc(g.data(), ws.data(), dx.data_mut(), rows, m, n);
                let dw = acc_slot(grads, *w, ws.shape());
                matmul_tn_acc(g.data(), xs.data(), dw.data_mut(), rows, m, n);
                let db = acc_slot(grads, *b, &[m]);
                for grow in g.data().chunks_exact(m) {
                    for (d, &gi) in db.data_mut().iter_mut().zip(grow) {
                        *d += gi;
                    }
                }
            }
            Op::Linear { x, w } => {
                let (xs, ws) = (self.value(*x), self.value(*w));
                let (rows, n, m) = (xs.rows(), xs.cols(), ws.shape()[0]);
                let dx = acc_slot(grads, *x, xs.shape());
                matmul_nn_acc(g.data(), ws.data(), dx.data_mut(), rows, m, n);
                let dw = acc_slot(grads, *w, ws.shape());
                matmul_tn_acc(g.data(), xs.data(), dw.data_mut(), rows, m, n);
            }
            Op::GatherRows { table, idx } => {
                let shape = self.value(*table).shape().to_vec();
                let e = shape[1];
                let dt = acc_slot(grads, *table, &shape);
                for (&r, grow) in idx.iter().zip(g.data().chunks_exact(e)) {
                    for (d, &gi) in dt.data_mut()[r * e..(r + 1) * e].iter_mut().zip(grow) {
                        *d += gi;
                    }
                }
            }
            Op::ConcatCols { a, b } => {
                let (ca, cb) = (self.value(*a).cols(), self.value(*b).cols());
                let ashape = self.value(*a).shape().to_vec();
                let bshape = self.value(*b).shape().to_vec();
                {
                    let da = acc_slot(grads, *a, &ashape);
                    for (drow, grow) in
                        da.data_mut().chunks_exact_mut(ca).zip(g.data().chunks_exact(ca + cb))
                    {
                        for (d, &gi) in drow.iter_mut().zip(&grow[..ca]) {
                            *d += gi;
                        }
                    }
                }
                let db = acc_slot(grads, *b, &bshape);
                for (drow, grow) in
                    db.data_mut().chunks_exact_mut(cb).zip(g.data().chunks_exact(ca + cb))
                {
                    for (d, &gi) in drow.iter_mut().zip(&grow[ca..]) {
                        *d += gi;
                    }
                }
            }
            Op::Add { a, b } => {
                let shape = g.shape().to_vec();
                for v in [*a, *b] {
                    let d = acc_slot(grads, v, &shape);
                    for (di, &gi) in d.data_mut().iter_mut().zip(g.data()) {
                        *di += gi;
                    }
                }
            }
            Op::Mul { a, b } => {
                let shape = g.shape().to_vec();
                let (av, bv) = (self.value(*a).data().to_vec(), self.value(*b).data().to_vec());
                {
                    let da = acc_slot(grads, *a, &shape);
                    for ((di, &gi), &bi) in da.data_mut().iter_mut().zip(g.data()).zip(&bv) {
                        *di += gi * bi;
                    }
                }
                let db = acc_slot(grads, *b, &shape);
                for ((di, &gi), &ai) in db.data_mut().iter_mut().zip(g.data()).zip(&av) {
                    *di += gi * ai;
                }
            }
            Op::Sigmoid { x } => {
                let y = &self.nodes[id].value;
                let shape = y.shape().to_vec();
                let dx = acc_slot(grads, *x, &shape);
                for ((d, &gi), &yi) in dx.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *d += gi * yi * (1.0 - yi);
                }
            }
            Op::Tanh { x } => {
                let y = &self.nodes[id].value;
                let shape = y.shape().to_vec();
                let dx = acc_slot(grads, *x, &shape);
                for ((d, &gi), &yi) in dx.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *d += gi * (1.0 - yi * yi);
                }
            }
            Op::SliceCols { x, start, len } => {
                let shape = self.value(*x).shape().to_vec();
                let cols = shape.last().copied().unwrap_or(1);
                let dx = acc_slot(grads, *x, &shape);
                for (drow, grow) in
                    dx.data_mut().chunks_exact_mut(cols).zip(g.data().chunks_exact(*len))
                {
                    for (d, &gi) in drow[*start..*start + *len].iter_mut().zip(grow) {
                        *d += gi;
                    }
                }
            }
            Op::LogSoftmaxRows { x } => {
                // d/dx_j = g_j - softmax(x)_j * sum_k g_k, per row.
                let y = &self.nodes[id].value;
                let cols = y.cols();
                let shape = y.shape().to_vec();
                let dx = acc_slot(grads, *x, &shape);
                for ((drow, grow), yrow) in dx
                    .data_mut()
                    .chunks_exact_mut(cols)
                    .zip(g.data().chunks_exact(cols))
                    .zip(y.data().chunks_exact(cols))
                {
                    let gsum: f64 = grow.iter().sum();
                    for ((d, &gi), &lyi) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += gi - lyi.exp() * gsum;
                    }
                }
            }
            Op::PickPerRow { x, idx } => {
                let shape = self.value(*x).shape().to_vec();
                let cols = shape.last().copied().unwrap_or(1);
                let dx = acc_slot(grads, *x, &shape);
                for ((drow, &j), &gi) in
                    dx.data_mut().chunks_exact_mut(cols).zip(idx.iter()).zip(g.data())
                {
                    drow[j] += gi;
                }
            }
            Op::WeightedSum { x, weights, scale } => {
                let shape = self.value(*x).shape().to_vec();
                let g0 = g.data()[0];
                let dx = acc_slot(grads, *x, &shape);
                for (d, &wi) in dx.data_mut().iter_mut().zip(weights) {
                    *d += g0 * scale * wi;
                }
            }
            Op::SumAll { x } => {
                let shape = self.value(*x).shape().to_vec();
                let g0 = g.data()[0];
                let dx = acc_slot(grads, *x, &shape);
                for d in dx.data_mut() {
                    *d += g0;
                }
            }
            Op::EntropyRows { x } => {
                // dH/dlp_j = -exp(lp_j) * (lp_j + 1)
                let xv = self.value(*x);
                let cols = xv.cols();
                let shape = xv.shape().to_vec();
                let xdata = xv.data().to_vec();
                let dx = acc_slot(grads, *x, &shape);
                for ((drow, xrow), &gi) in
                    dx.data_mut().chunks_exact_mut(cols).zip(xdata.chunks_exact(cols)).zip(g.data())
                {
                    for (d, &lp) in drow.iter_mut().zip(xrow) {
                        *d += gi * (-lp.exp() * (lp + 1.0));
                    }
                }
            }
        }
    }
}

fn out_shape(in_shape: &[usize], cols: usize) -> Vec<usize> {
    match in_shape.len() {
        0 | 1 => vec![cols],
        _ => vec![in_shape[0], cols],
    }
}

fn acc_slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}
