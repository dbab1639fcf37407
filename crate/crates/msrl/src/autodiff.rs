//! Reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! A [`Graph`] is a Wengert tape: every operation appends a [`Tensor`]
//! node holding its forward value, the operation tag, and parent handles.
//! Values are computed eagerly; [`Graph::backward`] runs one reverse sweep
//! over the tape and accumulates adjoints into every `requires_grad` leaf.
//! Graphs are built per forward pass and dropped afterwards; they are not
//! reused across minibatches.
//!
//! All arithmetic is in f64. The losses exponentiate critic outputs, so
//! [`Graph::exp`] clamps its input at [`EXP_CLAMP`] and counts saturation
//! events for diagnostics; the adjoint is the exact derivative of the
//! clamped composition (zero above the clamp).

use ndarray::Array2;

use crate::error::{Error, Result};

/// Input clamp applied inside [`Graph::exp`].
pub const EXP_CLAMP: f64 = 30.0;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Matmul(TensorId, TensorId),
    Add(TensorId, TensorId),
    /// `[m x n] + [1 x n]`, the bias pattern.
    AddBias(TensorId, TensorId),
    AddScalar(TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    Exp(TensorId),
    Log(TensorId),
    LeakyRelu(TensorId, f64),
    Relu(TensorId),
    Sigmoid(TensorId),
    Sum(TensorId),
    Mean(TensorId),
    SumAxis(TensorId, usize),
    MeanAxis(TensorId, usize),
    ConcatCols(TensorId, TensorId),
    GatherRows(TensorId, Vec<usize>),
}

/// One node of the computation graph: a dense value plus, when the node
/// was produced by an operation, the tag and parents needed for the
/// reverse sweep.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: (usize, usize),
    values: Vec<f64>,
    requires_grad: bool,
    /// True when a `requires_grad` leaf is reachable below this node.
    needs_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Tensor>,
    exp_saturations: usize,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Number of `exp` inputs that hit the clamp since construction.
    pub fn exp_saturations(&self) -> usize {
        self.exp_saturations
    }

    pub fn node(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        self.nodes[id.0].shape
    }

    pub fn values(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn to_array(&self, id: TensorId) -> Array2<f64> {
        let (r, c) = self.shape(id);
        Array2::from_shape_vec((r, c), self.values(id).to_vec()).expect("node shape invariant")
    }

    /// Value of a scalar node.
    pub fn scalar_value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.shape(id), (1, 1));
        self.nodes[id.0].values[0]
    }

    fn push(&mut self, shape: (usize, usize), values: Vec<f64>, op: Op, needs_grad: bool) -> TensorId {
        debug_assert_eq!(shape.0 * shape.1, values.len());
        self.nodes.push(Tensor {
            shape,
            values,
            requires_grad: false,
            needs_grad,
            grad: None,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ---- inputs -----------------------------------------------------

    pub fn input(&mut self, value: &Array2<f64>, requires_grad: bool) -> TensorId {
        let shape = (value.nrows(), value.ncols());
        let values = value.iter().copied().collect();
        let id = self.push(shape, values, Op::Input, requires_grad);
        self.nodes[id.0].requires_grad = requires_grad;
        id
    }

    pub fn input_slice(
        &mut self,
        shape: (usize, usize),
        values: &[f64],
        requires_grad: bool,
    ) -> TensorId {
        assert_eq!(shape.0 * shape.1, values.len(), "input shape/value mismatch");
        let id = self.push(shape, values.to_vec(), Op::Input, requires_grad);
        self.nodes[id.0].requires_grad = requires_grad;
        id
    }

    pub fn scalar_input(&mut self, v: f64, requires_grad: bool) -> TensorId {
        self.input_slice((1, 1), &[v], requires_grad)
    }

    // ---- operations -------------------------------------------------

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: (m, k),
                rhs: (k2, n),
            });
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &aval) in arow.iter().enumerate() {
                if aval == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bval) in orow.iter_mut().zip(brow) {
                    *o += aval * bval;
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push((m, n), out, Op::Matmul(a, b), needs))
    }

    /// Elementwise add; also accepts a `[1 x n]` right operand broadcast
    /// over the rows of an `[m x n]` left operand.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let needs = self.needs(a) || self.needs(b);
        if sa == sb {
            let out: Vec<f64> = self.nodes[a.0]
                .values
                .iter()
                .zip(&self.nodes[b.0].values)
                .map(|(x, y)| x + y)
                .collect();
            Ok(self.push(sa, out, Op::Add(a, b), needs))
        } else if sb.0 == 1 && sa.1 == sb.1 {
            let (m, n) = sa;
            let mut out = vec![0.0; m * n];
            let av = &self.nodes[a.0].values;
            let bv = &self.nodes[b.0].values;
            for i in 0..m {
                for j in 0..n {
                    out[i * n + j] = av[i * n + j] + bv[j];
                }
            }
            Ok(self.push(sa, out, Op::AddBias(a, b), needs))
        } else {
            Err(Error::ShapeMismatch {
                op: "add",
                lhs: sa,
                rhs: sb,
            })
        }
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let sa = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x + c).collect();
        let needs = self.needs(a);
        self.push(sa, out, Op::AddScalar(a), needs)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: "sub",
                lhs: sa,
                rhs: sb,
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x - y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(sa, out, Op::Sub(a, b), needs))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: sa,
                rhs: sb,
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(sa, out, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let sa = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x * c).collect();
        let needs = self.needs(a);
        self.push(sa, out, Op::Scale(a, c), needs)
    }

    /// `exp(min(x, EXP_CLAMP))`, counting clamped entries.
    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let sa = self.shape(a);
        let mut saturated = 0usize;
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| {
                if x > EXP_CLAMP {
                    saturated += 1;
                    EXP_CLAMP.exp()
                } else {
                    x.exp()
                }
            })
            .collect();
        self.exp_saturations += saturated;
        let needs = self.needs(a);
        self.push(sa, out, Op::Exp(a), needs)
    }

    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        if let Some(&bad) = self.nodes[a.0].values.iter().find(|v| **v <= 0.0) {
            return Err(Error::domain("log", format!("non-positive input {bad}")));
        }
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x.ln()).collect();
        let needs = self.needs(a);
        Ok(self.push(sa, out, Op::Log(a), needs))
    }

    pub fn leaky_relu(&mut self, a: TensorId, alpha: f64) -> TensorId {
        let sa = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| if x > 0.0 { x } else { alpha * x })
            .collect();
        let needs = self.needs(a);
        self.push(sa, out, Op::LeakyRelu(a, alpha), needs)
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let sa = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|&x| x.max(0.0)).collect();
        let needs = self.needs(a);
        self.push(sa, out, Op::Relu(a), needs)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let sa = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let needs = self.needs(a);
        self.push(sa, out, Op::Sigmoid(a), needs)
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total: f64 = self.nodes[a.0].values.iter().sum();
        let needs = self.needs(a);
        self.push((1, 1), vec![total], Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: TensorId) -> TensorId {
        let n = self.nodes[a.0].values.len();
        let total: f64 = self.nodes[a.0].values.iter().sum();
        let needs = self.needs(a);
        self.push((1, 1), vec![total / n as f64], Op::Mean(a), needs)
    }

    pub fn sum_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.reduce_axis(a, axis, false)
    }

    pub fn mean_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.reduce_axis(a, axis, true)
    }

    fn reduce_axis(&mut self, a: TensorId, axis: usize, mean: bool) -> Result<TensorId> {
        let (m, n) = self.shape(a);
        if axis > 1 {
            return Err(Error::contract("reduce", format!("axis {axis} out of bounds")));
        }
        let av = &self.nodes[a.0].values;
        let needs = self.needs(a);
        if axis == 0 {
            let mut out = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    out[j] += av[i * n + j];
                }
            }
            if mean {
                out.iter_mut().for_each(|v| *v /= m as f64);
                Ok(self.push((1, n), out, Op::MeanAxis(a, 0), needs))
            } else {
                Ok(self.push((1, n), out, Op::SumAxis(a, 0), needs))
            }
        } else {
            let mut out = vec![0.0; m];
            for i in 0..m {
                out[i] = av[i * n..(i + 1) * n].iter().sum();
            }
            if mean {
                out.iter_mut().for_each(|v| *v /= n as f64);
                Ok(self.push((m, 1), out, Op::MeanAxis(a, 1), needs))
            } else {
                Ok(self.push((m, 1), out, Op::SumAxis(a, 1), needs))
            }
        }
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, p) = self.shape(a);
        let (m2, q) = self.shape(b);
        if m != m2 {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: (m, p),
                rhs: (m2, q),
            });
        }
        let mut out = Vec::with_capacity(m * (p + q));
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        for i in 0..m {
            out.extend_from_slice(&av[i * p..(i + 1) * p]);
            out.extend_from_slice(&bv[i * q..(i + 1) * q]);
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push((m, p + q), out, Op::ConcatCols(a, b), needs))
    }

    /// Row selection with repetition allowed; the adjoint scatter-adds.
    pub fn gather_rows(&mut self, a: TensorId, indices: &[usize]) -> Result<TensorId> {
        let (m, n) = self.shape(a);
        if let Some(&bad) = indices.iter().find(|i| **i >= m) {
            return Err(Error::contract(
                "gather_rows",
                format!("row index {bad} out of bounds for {m} rows"),
            ));
        }
        let av = &self.nodes[a.0].values;
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            out.extend_from_slice(&av[i * n..(i + 1) * n]);
        }
        let needs = self.needs(a);
        Ok(self.push(
            (indices.len(), n),
            out,
            Op::GatherRows(a, indices.to_vec()),
            needs,
        ))
    }

    // ---- backward ---------------------------------------------------

    /// Reverse sweep from a scalar loss. Populates the `grad` field of
    /// every `requires_grad` leaf reachable from `loss`; adjoints
    /// accumulate additively when a node is used more than once.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::contract(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        let n_nodes = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n_nodes];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if grads[idx].is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            let g = grads[idx].take().unwrap();
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Input => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Matmul(a, b) => {
                    let (m, k) = self.shape(a);
                    let (_, n) = self.shape(b);
                    if self.needs(a) {
                        // dA = G . B^T
                        let bv = &self.nodes[b.0].values;
                        let ga = Self::entry(&mut grads, a, m * k);
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                let grow = &g[i * n..(i + 1) * n];
                                let brow = &bv[p * n..(p + 1) * n];
                                for (gv, bvv) in grow.iter().zip(brow) {
                                    acc += gv * bvv;
                                }
                                ga[i * k + p] += acc;
                            }
                        }
                    }
                    if self.needs(b) {
                        // dB = A^T . G
                        let av = &self.nodes[a.0].values;
                        let gb = Self::entry(&mut grads, b, k * n);
                        for i in 0..m {
                            let arow = &av[i * k..(i + 1) * k];
                            let grow = &g[i * n..(i + 1) * n];
                            for (p, &aval) in arow.iter().enumerate() {
                                if aval == 0.0 {
                                    continue;
                                }
                                let gbrow = &mut gb[p * n..(p + 1) * n];
                                for (o, &gv) in gbrow.iter_mut().zip(grow) {
                                    *o += aval * gv;
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for t in [a, b] {
                        if self.needs(t) {
                            let gt = Self::entry(&mut grads, t, g.len());
                            for (o, &gv) in gt.iter_mut().zip(&g) {
                                *o += gv;
                            }
                        }
                    }
                }
                Op::AddBias(a, b) => {
                    let (m, n) = self.shape(a);
                    if self.needs(a) {
                        let ga = Self::entry(&mut grads, a, m * n);
                        for (o, &gv) in ga.iter_mut().zip(&g) {
                            *o += gv;
                        }
                    }
                    if self.needs(b) {
                        let gb = Self::entry(&mut grads, b, n);
                        for i in 0..m {
                            for j in 0..n {
                                gb[j] += g[i * n + j];
                            }
                        }
                    }
                }
                Op::AddScalar(a) => {
                    if self.needs(a) {
                        let ga = Self::entry(&mut grads, a, g.len());
                        for (o, &gv) in ga.iter_mut().zip(&g) {
                            *o += gv;
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(a) {
                        let ga = Self::entry(&mut grads, a, g.len());
                        for (o, &gv) in ga.iter_mut().zip(&g) {
                            *o += gv;
                        }
                    }
                    if self.needs(b) {
                        let gb = Self::entry(&mut grads, b, g.len());
                        for (o, &gv) in gb.iter_mut().zip(&g) {
                            *o -= gv;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(a) {
                        let bv = self.nodes[b.0].values.clone();
                        let ga = Self::entry(&mut grads, a, g.len());
                        for ((o, &gv), bvv) in ga.iter_mut().zip(&g).zip(bv) {
                            *o += gv * bvv;
                        }
                    }
                    if self.needs(b) {
                        let av = self.nodes[a.0].values.clone();
                        let gb = Self::entry(&mut grads, b, g.len());
                        for ((o, &gv), avv) in gb.iter_mut().zip(&g).zip(av) {
                            *o += gv * avv;
                        }
                    }
                }
                Op::Scale(a, c) => {
                    if self.needs(a) {
                        let ga = Self::entry(&mut grads, a, g.len());
                        for (o, &gv) in ga.iter_mut().zip(&g) {
                            *o += c * gv;
                        }
                    }
                }
                Op::Exp(a) => {
                    if self.needs(a) {
                        let outv = self.nodes[idx].values.clone();
                        let inv = self.nodes[a.0].values.clone();
                        let ga = Self::entry(&mut grads, a, g.len());
                        for i in 0..g.len() {
                            if inv[i] <= EXP_CLAMP {
                                ga[i] += g[i] * outv[i];
                            }
                        }
                    }
                }
                Op::Log(a) => {
                    if self.needs(a) {
                        let inv = self.nodes[a.0].values.clone();
                        let ga = Self::entry(&mut grads, a, g.len());
                        for i in 0..g.len() {
                            ga[i] += g[i] / inv[i];
                        }
                    }
                }
                Op::LeakyRelu(a, alpha) => {
                    if self.needs(a) {
                        let inv = self.nodes[a.0].values.clone();
                        let ga = Self::entry(&mut grads, a, g.len());
                        for i in 0..g.len() {
                            ga[i] += g[i] * if inv[i] > 0.0 { 1.0 } else { alpha };
                        }
                    }
                }
                Op::Relu(a) => {
                    if self.needs(a) {
                        let inv = self.nodes[a.0].values.clone();
                        let ga = Self::entry(&mut grads, a, g.len());
                        for i in 0..g.len() {
                            if inv[i] > 0.0 {
                                ga[i] += g[i];
                            }
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    if self.needs(a) {
                        let outv = self.nodes[idx].values.clone();
                        let ga = Self::entry(&mut grads, a, g.len());
                        for i in 0..g.len() {
                            ga[i] += g[i] * outv[i] * (1.0 - outv[i]);
                        }
                    }
                }
                Op::Sum(a) => {
                    if self.needs(a) {
                        let len = self.nodes[a.0].values.len();
                        let ga = Self::entry(&mut grads, a, len);
                        for o in ga.iter_mut() {
                            *o += g[0];
                        }
                    }
                }
                Op::Mean(a) => {
                    if self.needs(a) {
                        let len = self.nodes[a.0].values.len();
                        let ga = Self::entry(&mut grads, a, len);
                        let gv = g[0] / len as f64;
                        for o in ga.iter_mut() {
                            *o += gv;
                        }
                    }
                }
                Op::SumAxis(a, axis) | Op::MeanAxis(a, axis) => {
                    if self.needs(a) {
                        let (m, n) = self.shape(a);
                        let is_mean = matches!(self.nodes[idx].op, Op::MeanAxis(..));
                        let count = if axis == 0 { m } else { n };
                        let scale = if is_mean { 1.0 / count as f64 } else { 1.0 };
                        let ga = Self::entry(&mut grads, a, m * n);
                        for i in 0..m {
                            for j in 0..n {
                                let gv = if axis == 0 { g[j] } else { g[i] };
                                ga[i * n + j] += gv * scale;
                            }
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (m, p) = self.shape(a);
                    let (_, q) = self.shape(b);
                    if self.needs(a) {
                        let ga = Self::entry(&mut grads, a, m * p);
                        for i in 0..m {
                            for j in 0..p {
                                ga[i * p + j] += g[i * (p + q) + j];
                            }
                        }
                    }
                    if self.needs(b) {
                        let gb = Self::entry(&mut grads, b, m * q);
                        for i in 0..m {
                            for j in 0..q {
                                gb[i * q + j] += g[i * (p + q) + p + j];
                            }
                        }
                    }
                }
                Op::GatherRows(a, ref indices) => {
                    if self.needs(a) {
                        let (m, n) = self.shape(a);
                        let ga = Self::entry(&mut grads, a, m * n);
                        for (r, &src) in indices.iter().enumerate() {
                            let grow = &g[r * n..(r + 1) * n];
                            let garow = &mut ga[src * n..(src + 1) * n];
                            for (o, &gv) in garow.iter_mut().zip(grow) {
                                *o += gv;
                            }
                        }
                    }
                }
            }
        }

        for (idx, grad) in grads.into_iter().enumerate() {
            if self.nodes[idx].requires_grad {
                self.nodes[idx].grad = grad.or(Some(vec![0.0; self.nodes[idx].values.len()]));
            }
        }
        Ok(())
    }

    fn entry<'a>(grads: &'a mut [Option<Vec<f64>>], id: TensorId, len: usize) -> &'a mut Vec<f64> {
        grads[id.0].get_or_insert_with(|| vec![0.0; len])
    }
}

/// Compare backward gradients of `f` against central finite differences.
/// Returns the max over coordinates of `|ad - fd| / max(1, |ad|, |fd|)`.
pub fn grad_check<F>(f: F, x: &Array2<f64>, eps: f64) -> f64
where
    F: Fn(&mut Graph, TensorId) -> TensorId,
{
    let mut g = Graph::new();
    let xid = g.input(x, true);
    let loss = f(&mut g, xid);
    g.backward(loss).expect("grad_check loss must be scalar");
    let analytic = g.grad(xid).expect("input requires grad").to_vec();

    let eval = |pt: &Array2<f64>| -> f64 {
        let mut g = Graph::new();
        let id = g.input(pt, false);
        let loss = f(&mut g, id);
        g.scalar_value(loss)
    };

    let mut worst: f64 = 0.0;
    let mut xs = x.clone();
    for idx in 0..analytic.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = xs[(r, c)];
        xs[(r, c)] = orig + eps;
        let up = eval(&xs);
        xs[(r, c)] = orig - eps;
        let down = eval(&xs);
        xs[(r, c)] = orig;
        let fd = (up - down) / (2.0 * eps);
        let ad = analytic[idx];
        let err = (ad - fd).abs() / 1.0_f64.max(ad.abs()).max(fd.abs());
        worst = worst.max(err);
    }
    worst
}
