//! Tape-based reverse-mode differentiation over row-major matrices.
//!
//! Every node holds a `rows x cols` value. Parameters enter the tape by name;
//! [`Graph::backward`] returns their gradients keyed by that name so that
//! several models can share one tape.

use std::collections::HashMap;

use super::{NnError, Parameter, Scalar, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(String),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Windows { x: Var, starts: Vec<usize>, window: usize },
    /// `gap`: smallest margin between a segment's maximum and its runner-up.
    SegmentMax { x: Var, argmax: Vec<usize>, gap: f64 },
    Reshape(Var),
    RowMean(Var),
    Mean(Var),
    SelectRows { new: Var, old: Var, keep: Vec<bool> },
    Bce { p: Var, targets: Vec<T> },
    WeightedNll { p: Var, targets: Vec<usize>, weights: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Vec<T>,
    rows: usize,
    cols: usize,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients of the loss with respect to every trainable parameter on the
/// tape, summed over repeated uses.
#[derive(Debug, Clone, Default)]
pub struct Gradients<T> {
    by_name: HashMap<String, Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.by_name.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }
}

/// Lower clamp applied to probabilities inside logarithms.
pub const LOG_CLAMP: f64 = 1e-7;

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Distance of the recorded computation to its nearest non-differentiable
    /// point: the smallest `|input|` of any ReLU and the smallest gap between
    /// a pooled maximum and its runner-up. Infinite when there is none.
    pub fn kink_margin(&self) -> f64 {
        let mut m = f64::INFINITY;
        for n in &self.nodes {
            match &n.op {
                Op::Relu(x) => {
                    for v in self.value(*x) {
                        m = m.min(v.as_f64().abs());
                    }
                }
                Op::SegmentMax { gap, .. } => m = m.min(*gap),
                _ => {}
            }
        }
        m
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    /// Copies a row of a node's value.
    pub fn row(&self, v: Var, r: usize) -> Vec<T> {
        let n = &self.nodes[v.0];
        n.value[r * n.cols..(r + 1) * n.cols].to_vec()
    }

    fn push(&mut self, value: Vec<T>, rows: usize, cols: usize, op: Op<T>) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let requires_grad = match &op {
            Op::Input => false,
            Op::Param(_) => true,
            _ => self.parents(&op).iter().any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn parents(&self, op: &Op<T>) -> Vec<Var> {
        match op {
            Op::Input | Op::Param(_) => vec![],
            Op::MatMul(a, b)
            | Op::AddRow(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b) => vec![*a, *b],
            Op::SelectRows { new, old, .. } => vec![*new, *old],
            Op::Scale(x, _)
            | Op::AddScalar(x)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::Softmax(x)
            | Op::SliceCols(x, _)
            | Op::GatherRows(x, _)
            | Op::Windows { x, .. }
            | Op::SegmentMax { x, .. }
            | Op::Reshape(x)
            | Op::RowMean(x)
            | Op::Mean(x)
            | Op::Bce { p: x, .. }
            | Op::WeightedNll { p: x, .. } => vec![*x],
            Op::ConcatCols(xs) | Op::ConcatRows(xs) => xs.clone(),
        }
    }

    // ---- leaves ----------------------------------------------------------

    /// Constant input, no gradient.
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::shape(
                "input",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(self.push(data, rows, cols, Op::Input))
    }

    pub fn input_tensor(&mut self, t: &Tensor<T>) -> Var {
        let (r, c) = t.matrix_dims();
        self.push(t.data().to_vec(), r, c, Op::Input)
    }

    /// Places a parameter on the tape. Frozen parameters enter as constants.
    pub fn param(&mut self, p: &Parameter<T>) -> Var {
        let (r, c) = p.tensor.matrix_dims();
        let op = if p.trainable {
            Op::Param(p.name.clone())
        } else {
            Op::Input
        };
        self.push(p.tensor.data().to_vec(), r, c, op)
    }

    // ---- linear algebra --------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(NnError::shape("matmul", format!("{m}x{k} @ {k2}x{n}")));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a),
            (k as isize, 1),
            self.value(b),
            (n as isize, 1),
            T::zero(),
            &mut out,
        );
        Ok(self.push(out, m, n, Op::MatMul(a, b)))
    }

    /// `x + bias` with `bias` (`1 x cols`) broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        if self.dims(bias) != (1, c) {
            return Err(NnError::shape(
                "add_row",
                format!("{r}x{c} + {:?}", self.dims(bias)),
            ));
        }
        let b = self.value(bias);
        let out: Vec<T> = self
            .value(x)
            .chunks(c.max(1))
            .flat_map(|row| row.iter().zip(b).map(|(&x, &y)| x + y))
            .collect();
        Ok(self.push(out, r, c, Op::AddRow(x, bias)))
    }

    /// Fully connected layer `x W + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    // ---- elementwise -----------------------------------------------------

    fn zip_op(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, NnError> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(NnError::shape(name, format!("{da:?} vs {db:?}")));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(out, da.0, da.1, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_op("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NnError> {
        self.mul(a, a)
    }

    fn map_op(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let (r, c) = self.dims(x);
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        self.push(out, r, c, op)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        self.map_op(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: T) -> Var {
        self.map_op(x, |v| v + s, Op::AddScalar(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map_op(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map_op(x, T::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map_op(x, |v| v.max(T::zero()), Op::Relu(x))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(c.max(1)) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v = *v / sum);
        }
        self.push(out, r, c, Op::Softmax(x))
    }

    // ---- structure -------------------------------------------------------

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = self.dims(parts[0]).0;
        if parts.iter().any(|&p| self.dims(p).0 != rows) {
            return Err(NnError::shape("concat_cols", "row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.dims(p).1;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(out, rows, cols, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let cols = self.dims(parts[0]).1;
        if parts.iter().any(|&p| self.dims(p).1 != cols) {
            return Err(NnError::shape("concat_rows", "column counts differ".into()));
        }
        let rows = parts.iter().map(|&p| self.dims(p).0).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(out, rows, cols, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        if start + width > c {
            return Err(NnError::shape(
                "slice_cols",
                format!("[{start}, {}) of {c} columns", start + width),
            ));
        }
        let v = self.value(x);
        let out = (0..r)
            .flat_map(|i| v[i * c + start..i * c + start + width].iter().copied())
            .collect();
        Ok(self.push(out, r, width, Op::SliceCols(x, start)))
    }

    /// Row `i` of the result is row `indices[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(NnError::shape("gather_rows", format!("row {bad} of {r}")));
        }
        let v = self.value(x);
        let out = indices
            .iter()
            .flat_map(|&i| v[i * c..(i + 1) * c].iter().copied())
            .collect();
        Ok(self.push(out, indices.len(), c, Op::GatherRows(x, indices.to_vec())))
    }

    /// Sliding windows over row segments: within each `(start, len)` segment
    /// every run of `window` consecutive rows, advancing by `stride` rows,
    /// becomes one output row of `window * cols` values.
    pub fn windows(
        &mut self,
        x: Var,
        segments: &[(usize, usize)],
        window: usize,
        stride: usize,
    ) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        let mut starts = Vec::new();
        for &(s, len) in segments {
            if len < window || s + len > r {
                return Err(NnError::shape(
                    "windows",
                    format!("segment ({s}, {len}) with window {window} over {r} rows"),
                ));
            }
            let mut t = 0;
            while t + window <= len {
                starts.push(s + t);
                t += stride;
            }
        }
        let v = self.value(x);
        let width = window * c;
        let mut out = Vec::with_capacity(starts.len() * width);
        for &s in &starts {
            out.extend_from_slice(&v[s * c..s * c + width]);
        }
        let n = starts.len();
        Ok(self.push(out, n, width, Op::Windows { x, starts, window }))
    }

    /// Column-wise maximum over each `(start, len)` row segment. Ties go to
    /// the first row.
    pub fn segment_max(&mut self, x: Var, segments: &[(usize, usize)]) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        let v = self.value(x);
        let mut out = Vec::with_capacity(segments.len() * c);
        let mut argmax = Vec::with_capacity(segments.len() * c);
        let mut gap = f64::INFINITY;
        for &(s, len) in segments {
            if len == 0 || s + len > r {
                return Err(NnError::Empty("segment_max"));
            }
            for j in 0..c {
                let mut best = s;
                for i in s + 1..s + len {
                    if v[i * c + j] > v[best * c + j] {
                        best = i;
                    }
                }
                for i in (s..s + len).filter(|&i| i != best) {
                    gap = gap.min((v[best * c + j] - v[i * c + j]).as_f64());
                }
                out.push(v[best * c + j]);
                argmax.push(best);
            }
        }
        Ok(self.push(out, segments.len(), c, Op::SegmentMax { x, argmax, gap }))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        if r * c != rows * cols {
            return Err(NnError::shape("reshape", format!("{r}x{c} -> {rows}x{cols}")));
        }
        let out = self.value(x).to_vec();
        Ok(self.push(out, rows, cols, Op::Reshape(x)))
    }

    /// `rows x 1` means of each row.
    pub fn row_mean(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let n = T::from_f64(c as f64);
        let out = self
            .value(x)
            .chunks(c.max(1))
            .map(|row| row.iter().copied().sum::<T>() / n)
            .collect();
        self.push(out, r, 1, Op::RowMean(x))
    }

    /// Mean of all elements, `1 x 1`.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.iter().copied().sum::<T>() / T::from_f64(v.len() as f64);
        self.push(vec![m], 1, 1, Op::Mean(x))
    }

    /// Row `i` comes from `new` where `keep[i]`, from `old` otherwise.
    pub fn select_rows(&mut self, new: Var, old: Var, keep: &[bool]) -> Result<Var, NnError> {
        let (r, c) = self.dims(new);
        if self.dims(old) != (r, c) || keep.len() != r {
            return Err(NnError::shape("select_rows", format!("{r}x{c}")));
        }
        let (a, b) = (self.value(new), self.value(old));
        let out = (0..r)
            .flat_map(|i| {
                let src = if keep[i] { a } else { b };
                src[i * c..(i + 1) * c].iter().copied()
            })
            .collect();
        Ok(self.push(out, r, c, Op::SelectRows { new, old, keep: keep.to_vec() }))
    }

    // ---- losses ----------------------------------------------------------

    /// Mean binary cross-entropy of probabilities against 0/1 targets, with
    /// probabilities clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce(&mut self, p: Var, targets: &[T]) -> Result<Var, NnError> {
        let v = self.value(p);
        if v.len() != targets.len() {
            return Err(NnError::shape(
                "bce",
                format!("{} predictions, {} targets", v.len(), targets.len()),
            ));
        }
        let eps = T::from_f64(LOG_CLAMP);
        let one = T::one();
        let total: T = v
            .iter()
            .zip(targets)
            .map(|(&p, &y)| {
                let p = p.max(eps).min(one - eps);
                -(y * p.ln() + (one - y) * (one - p).ln())
            })
            .sum();
        let loss = total / T::from_f64(v.len() as f64);
        Ok(self.push(vec![loss], 1, 1, Op::Bce { p, targets: targets.to_vec() }))
    }

    /// `-sum_r weights[r] * ln p[r, targets[r]]` over rows of a probability
    /// matrix, probabilities clamped below at `1e-7`.
    pub fn weighted_nll(
        &mut self,
        p: Var,
        targets: &[usize],
        weights: &[T],
    ) -> Result<Var, NnError> {
        let (r, c) = self.dims(p);
        if targets.len() != r || weights.len() != r || targets.iter().any(|&t| t >= c) {
            return Err(NnError::shape(
                "weighted_nll",
                format!("{r}x{c} with {} targets", targets.len()),
            ));
        }
        let eps = T::from_f64(LOG_CLAMP);
        let v = self.value(p);
        let loss: T = (0..r)
            .map(|i| -weights[i] * v[i * c + targets[i]].max(eps).ln())
            .sum();
        Ok(self.push(
            vec![loss],
            1,
            1,
            Op::WeightedNll { p, targets: targets.to_vec(), weights: weights.to_vec() },
        ))
    }

    // ---- backward --------------------------------------------------------

    /// Back-propagates from a `1 x 1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NnError> {
        if self.dims(loss) != (1, 1) {
            return Err(NnError::shape("backward", format!("loss is {:?}", self.dims(loss))));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if let Op::Param(name) = &node.op {
                match out.by_name.get_mut(name) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &x)| *a += x),
                    None => {
                        out.by_name.insert(name.clone(), g);
                    }
                }
                continue;
            }
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(out)
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let (rows, cols) = (node.rows, node.cols);
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = cols;
                if self.needs(*a) {
                    let bv = self.value(*b);
                    let ga = self.grad_buf(grads, *a);
                    T::gemm(m, n, k, g, (n as isize, 1), bv, (1, n as isize), T::one(), ga);
                }
                if self.needs(*b) {
                    let av = self.value(*a);
                    let gb = self.grad_buf(grads, *b);
                    T::gemm(k, m, n, av, (1, k as isize), g, (n as isize, 1), T::one(), gb);
                }
            }
            Op::AddRow(x, b) => {
                if self.needs(*x) {
                    add_into(self.grad_buf(grads, *x), g);
                }
                if self.needs(*b) {
                    let gb = self.grad_buf(grads, *b);
                    for row in g.chunks(cols) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Add(a, b) => {
                for p in [*a, *b] {
                    if self.needs(p) {
                        add_into(self.grad_buf(grads, p), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    add_into(self.grad_buf(grads, *a), g);
                }
                if self.needs(*b) {
                    let gb = self.grad_buf(grads, *b);
                    gb.iter_mut().zip(g).for_each(|(acc, &x)| *acc -= x);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let ga = self.grad_buf(grads, *a);
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                }
                if self.needs(*b) {
                    let gb = self.grad_buf(grads, *b);
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let ga = self.grad_buf(grads, *a);
                    for i in 0..g.len() {
                        ga[i] += g[i] / bv[i];
                    }
                }
                if self.needs(*b) {
                    let gb = self.grad_buf(grads, *b);
                    for i in 0..g.len() {
                        gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                }
            }
            Op::Scale(x, s) => {
                let gx = self.grad_buf(grads, *x);
                gx.iter_mut().zip(g).for_each(|(acc, &v)| *acc += v * *s);
            }
            Op::AddScalar(x) | Op::Reshape(x) => add_into(self.grad_buf(grads, *x), g),
            Op::Sigmoid(x) => {
                let y = &node.value;
                let gx = self.grad_buf(grads, *x);
                for i in 0..g.len() {
                    gx[i] += g[i] * y[i] * (T::one() - y[i]);
                }
            }
            Op::Tanh(x) => {
                let y = &node.value;
                let gx = self.grad_buf(grads, *x);
                for i in 0..g.len() {
                    gx[i] += g[i] * (T::one() - y[i] * y[i]);
                }
            }
            Op::Relu(x) => {
                let y = &node.value;
                let gx = self.grad_buf(grads, *x);
                for i in 0..g.len() {
                    if y[i] > T::zero() {
                        gx[i] += g[i];
                    }
                }
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let gx = self.grad_buf(grads, *x);
                for r in 0..rows {
                    let (yr, gr) = (&y[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for j in 0..cols {
                        gx[r * cols + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.dims(p).1;
                    if self.needs(p) {
                        let gp = self.grad_buf(grads, p);
                        for r in 0..rows {
                            add_into(
                                &mut gp[r * c..(r + 1) * c],
                                &g[r * cols + offset..r * cols + offset + c],
                            );
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.needs(p) {
                        add_into(self.grad_buf(grads, p), &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::SliceCols(x, start) => {
                let c = self.dims(*x).1;
                let gx = self.grad_buf(grads, *x);
                for r in 0..rows {
                    add_into(
                        &mut gx[r * c + start..r * c + start + cols],
                        &g[r * cols..(r + 1) * cols],
                    );
                }
            }
            Op::GatherRows(x, indices) => {
                let gx = self.grad_buf(grads, *x);
                for (i, &src) in indices.iter().enumerate() {
                    add_into(&mut gx[src * cols..(src + 1) * cols], &g[i * cols..(i + 1) * cols]);
                }
            }
            Op::Windows { x, starts, window } => {
                let c = self.dims(*x).1;
                let width = window * c;
                let gx = self.grad_buf(grads, *x);
                for (k, &s) in starts.iter().enumerate() {
                    add_into(&mut gx[s * c..s * c + width], &g[k * width..(k + 1) * width]);
                }
            }
            Op::SegmentMax { x, argmax, .. } => {
                let gx = self.grad_buf(grads, *x);
                for (k, &src) in argmax.iter().enumerate() {
                    let j = k % cols;
                    gx[src * cols + j] += g[k];
                }
            }
            Op::RowMean(x) => {
                let c = self.dims(*x).1;
                let n = T::from_f64(c as f64);
                let gx = self.grad_buf(grads, *x);
                for r in 0..rows {
                    let share = g[r] / n;
                    gx[r * c..(r + 1) * c].iter_mut().for_each(|v| *v += share);
                }
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                let share = g[0] / T::from_f64(n as f64);
                self.grad_buf(grads, *x).iter_mut().for_each(|v| *v += share);
            }
            Op::SelectRows { new, old, keep } => {
                for (src, take) in [(*new, true), (*old, false)] {
                    if !self.needs(src) {
                        continue;
                    }
                    let gs = self.grad_buf(grads, src);
                    for (r, &k) in keep.iter().enumerate() {
                        if k == take {
                            add_into(&mut gs[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                        }
                    }
                }
            }
            Op::Bce { p, targets } => {
                let eps = T::from_f64(LOG_CLAMP);
                let one = T::one();
                let pv = self.value(*p);
                let n = T::from_f64(pv.len() as f64);
                let gp = self.grad_buf(grads, *p);
                for i in 0..pv.len() {
                    let x = pv[i];
                    if x <= eps || x >= one - eps {
                        continue;
                    }
                    let y = targets[i];
                    gp[i] += g[0] * (-y / x + (one - y) / (one - x)) / n;
                }
            }
            Op::WeightedNll { p, targets, weights } => {
                let eps = T::from_f64(LOG_CLAMP);
                let c = self.dims(*p).1;
                let pv = self.value(*p);
                let gp = self.grad_buf(grads, *p);
                for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    let x = pv[r * c + t];
                    if x > eps {
                        gp[r * c + t] -= g[0] * w / x;
                    }
                }
            }
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    #[allow(clippy::mut_from_ref)]
    fn grad_buf<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> &'g mut [T] {
        let len = self.nodes[v.0].value.len();
        grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
    }
}

fn add_into<T: Scalar>(acc: &mut [T], x: &[T]) {
    acc.iter_mut().zip(x).for_each(|(a, &b)| *a += b);
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(name: &str, shape: &[usize], data: &[f64]) -> Parameter<f64> {
        Parameter {
            name: name.into(),
            tensor: Tensor::from_f64(shape, data).unwrap(),
            trainable: true,
        }
    }

    #[test]
    fn affine_basis_vector() {
        let mut g = Graph::<f64>::new();
        let x = g.input(1, 2, vec![1.0, 0.0]).unwrap();
        let w = g.param(&param("w", &[2, 2], &[2.0, 3.0, 5.0, 7.0]));
        let b = g.param(&param("b", &[2], &[0.0, 0.0]));
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y), &[2.0, 3.0]);
    }

    #[test]
    fn affine_zero_weights_gives_bias() {
        let mut g = Graph::<f64>::new();
        let x = g.input(3, 2, vec![1.0, -4.0, 2.0, 0.5, 9.0, 9.0]).unwrap();
        let w = g.param(&param("w", &[2, 2], &[0.0; 4]));
        let b = g.param(&param("b", &[2], &[1.0, 1.0]));
        let y = g.affine(x, w, b).unwrap();
        assert_eq!(g.value(y), &[1.0; 6]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut g = Graph::<f64>::new();
        let a = g.input(2, 3, vec![0.0; 6]).unwrap();
        let b = g.input(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(g.matmul(a, b), Err(NnError::Shape { .. })));
    }

    #[test]
    fn activations() {
        let mut g = Graph::<f64>::new();
        let x = g.input(1, 2, vec![-1.0, 2.0]).unwrap();
        let r = g.relu(x);
        assert_eq!(g.value(r), &[0.0, 2.0]);
        let z = g.input(1, 1, vec![0.0]).unwrap();
        let s = g.sigmoid(z);
        assert_eq!(g.scalar(s), 0.5);
        let z2 = g.input(1, 2, vec![0.0, 0.0]).unwrap();
        let sm = g.softmax(z2);
        assert_eq!(g.value(sm), &[0.5, 0.5]);
    }

    #[test]
    fn segment_max_forward_and_ties() {
        let mut g = Graph::<f64>::new();
        let x = g.param(&param("x", &[2, 2], &[1.0, 5.0, 3.0, 2.0]));
        let m = g.segment_max(x, &[(0, 2)]).unwrap();
        assert_eq!(g.value(m), &[3.0, 5.0]);

        let mut g = Graph::<f64>::new();
        let x = g.param(&param("x", &[2, 2], &[2.0, 0.0, 2.0, 0.0]));
        let m = g.segment_max(x, &[(0, 2)]).unwrap();
        let loss = g.mean(m);
        let grads = g.backward(loss).unwrap();
        // Both columns tie; the first row takes all gradient.
        assert_eq!(grads.get("x").unwrap(), &[0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn segment_max_rejects_empty() {
        let mut g = Graph::<f64>::new();
        let x = g.input(2, 2, vec![0.0; 4]).unwrap();
        assert!(g.segment_max(x, &[(0, 0)]).is_err());
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let mut p = param("w", &[1, 1], &[3.0]);
        p.trainable = false;
        let mut g = Graph::<f64>::new();
        let w = g.param(&p);
        let y = g.square(w).unwrap();
        let grads = g.backward(y).unwrap();
        assert!(grads.get("w").is_none());
    }

    #[test]
    fn repeated_use_sums_gradients() {
        let p = param("w", &[1, 1], &[3.0]);
        let mut g = Graph::<f64>::new();
        let a = g.param(&p);
        let b = g.param(&p);
        let y = g.mul(a, b).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get("w").unwrap(), &[6.0]);
    }

    #[test]
    fn windows_layout() {
        let mut g = Graph::<f64>::new();
        let x = g.input(5, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = g.windows(x, &[(0, 5)], 3, 1).unwrap();
        assert_eq!(g.dims(w), (3, 3));
        assert_eq!(g.value(w), &[0.0, 1.0, 2.0, 1.0, 2.0, 3.0, 2.0, 3.0, 4.0]);
        let w2 = g.windows(x, &[(0, 2), (2, 3)], 2, 1).unwrap();
        assert_eq!(g.value(w2), &[0.0, 1.0, 2.0, 3.0, 3.0, 4.0]);
    }
}
