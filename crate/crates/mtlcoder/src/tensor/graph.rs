use std::collections::BTreeMap;

use super::{Result, Tensor, TensorError};

/// Handle to a node in a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Concat(Var, Var),
    MeanRows(Var),
    SumAll(Var),
    Sigmoid(Var),
    Tanh(Var),
    Transpose(Var),
    SqFrobNorm(Var),
    Log(Var),
    Clip(Var, f64, f64),
    Scale(Var, f64),
    AddConst(Var),
    GradReverse(Var),
    RowSelect(Var, usize),
    StackRows(Vec<Var>),
}

struct Node {
    op: Op,
    value: Tensor,
    name: Option<String>,
    requires_grad: bool,
}

/// Dynamic computation tape. Rebuilt per batch; nodes are appended in
/// topological order, so the backward pass is a single reverse sweep.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
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

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Node {
            op: Op::Leaf,
            value: Tensor {
                requires_grad: false,
                ..t
            },
            name: None,
            requires_grad: false,
        })
    }

    /// Named trainable leaf. Names must be unique within a graph.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Result<Var> {
        if self.nodes.iter().any(|n| n.name.as_deref() == Some(name)) {
            return Err(TensorError::Usage(format!(
                "duplicate parameter name '{name}' in graph"
            )));
        }
        Ok(self.push(Node {
            op: Op::Leaf,
            value: t.clone(),
            name: Some(name.to_string()),
            requires_grad: true,
        }))
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, op: Op, value: Tensor, finite_check: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(finite_check));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::Concat(a, b) => self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad,
            Op::StackRows(vs) => vs.iter().any(|v| self.nodes[v.0].requires_grad),
            Op::MeanRows(a)
            | Op::SumAll(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Transpose(a)
            | Op::SqFrobNorm(a)
            | Op::Log(a)
            | Op::Clip(a, _, _)
            | Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::GradReverse(a)
            | Op::RowSelect(a, _) => self.nodes[a.0].requires_grad,
        };
        Ok(self.push(Node {
            op,
            value,
            name: None,
            requires_grad,
        }))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape != self.value(b).shape {
            return Err(TensorError::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape,
                self.value(b).shape
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data: Vec<f64> = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape.clone();
        self.push_op(Op::Add(a, b), Tensor::new(shape, data)?, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data: Vec<f64> = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.value(a).shape.clone();
        self.push_op(Op::Sub(a, b), Tensor::new(shape, data)?, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data: Vec<f64> = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape.clone();
        self.push_op(Op::Mul(a, b), Tensor::new(shape, data)?, "mul")
    }

    /// Matrix product. Accepts [m,k]x[k,n] -> [m,n] and [m,k]x[k] -> [m].
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 2 {
            return Err(TensorError::Shape(format!(
                "matmul lhs must be 2-d, got {:?}",
                ta.shape
            )));
        }
        let (m, k) = (ta.shape[0], ta.shape[1]);
        let value = match tb.shape.len() {
            1 => {
                if tb.shape[0] != k {
                    return Err(TensorError::Shape(format!(
                        "matmul: [{m},{k}] x {:?}",
                        tb.shape
                    )));
                }
                let mut out = vec![0.0; m];
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..k {
                        acc += ta.data[i * k + j] * tb.data[j];
                    }
                    out[i] = acc;
                }
                Tensor::vector(out)
            }
            2 => {
                if tb.shape[0] != k {
                    return Err(TensorError::Shape(format!(
                        "matmul: [{m},{k}] x {:?}",
                        tb.shape
                    )));
                }
                let n = tb.shape[1];
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..k {
                        let aij = ta.data[i * k + j];
                        for c in 0..n {
                            out[i * n + c] += aij * tb.data[j * n + c];
                        }
                    }
                }
                Tensor::new(vec![m, n], out)?
            }
            _ => {
                return Err(TensorError::Shape(format!(
                    "matmul rhs rank {} unsupported",
                    tb.shape.len()
                )))
            }
        };
        self.push_op(Op::MatMul(a, b), value, "matmul")
    }

    /// Concatenate two vectors.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 1 || tb.shape.len() != 1 {
            return Err(TensorError::Shape(
                "concat expects rank-1 operands".to_string(),
            ));
        }
        let mut data = ta.data.clone();
        data.extend_from_slice(&tb.data);
        self.push_op(Op::Concat(a, b), Tensor::vector(data), "concat")
    }

    /// Column means of a 2-d tensor: [r,c] -> [c].
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.shape.len() != 2 {
            return Err(TensorError::Shape(format!(
                "mean_rows expects rank-2, got {:?}",
                t.shape
            )));
        }
        let (r, c) = (t.shape[0], t.shape[1]);
        let mut out = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                out[j] += t.data[i * c + j];
            }
        }
        for v in out.iter_mut() {
            *v /= r as f64;
        }
        self.push_op(Op::MeanRows(a), Tensor::vector(out), "mean_rows")
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data.iter().sum();
        self.push_op(Op::SumAll(a), Tensor::scalar(s), "sum_all")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let data: Vec<f64> = self
            .value(a)
            .data
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let shape = self.value(a).shape.clone();
        self.push_op(Op::Sigmoid(a), Tensor::new(shape, data)?, "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let data: Vec<f64> = self.value(a).data.iter().map(|x| x.tanh()).collect();
        let shape = self.value(a).shape.clone();
        self.push_op(Op::Tanh(a), Tensor::new(shape, data)?, "tanh")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.shape.len() != 2 {
            return Err(TensorError::Shape(format!(
                "transpose expects rank-2, got {:?}",
                t.shape
            )));
        }
        let (r, c) = (t.shape[0], t.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.data[i * c + j];
            }
        }
        self.push_op(Op::Transpose(a), Tensor::new(vec![c, r], out)?, "transpose")
    }

    /// Squared Frobenius norm, returned as a scalar.
    pub fn sq_frob_norm(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data.iter().map(|x| x * x).sum();
        self.push_op(Op::SqFrobNorm(a), Tensor::scalar(s), "sq_frob_norm")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let data: Vec<f64> = self.value(a).data.iter().map(|x| x.ln()).collect();
        let shape = self.value(a).shape.clone();
        self.push_op(Op::Log(a), Tensor::new(shape, data)?, "log")
    }

    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let data: Vec<f64> = self
            .value(a)
            .data
            .iter()
            .map(|x| x.clamp(lo, hi))
            .collect();
        let shape = self.value(a).shape.clone();
        self.push_op(Op::Clip(a, lo, hi), Tensor::new(shape, data)?, "clip")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let data: Vec<f64> = self.value(a).data.iter().map(|x| x * c).collect();
        let shape = self.value(a).shape.clone();
        self.push_op(Op::Scale(a, c), Tensor::new(shape, data)?, "scale")
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let data: Vec<f64> = self.value(a).data.iter().map(|x| x + c).collect();
        let shape = self.value(a).shape.clone();
        self.push_op(Op::AddConst(a), Tensor::new(shape, data)?, "add_const")
    }

    /// Identity in the forward pass; multiplies the upstream gradient by -1.
    pub fn gradient_reversal(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).clone();
        self.push_op(Op::GradReverse(a), value, "gradient_reversal")
    }

    /// Select one row of a 2-d tensor (embedding lookup).
    pub fn row_select(&mut self, a: Var, row: usize) -> Result<Var> {
        let t = self.value(a);
        if t.shape.len() != 2 {
            return Err(TensorError::Shape(format!(
                "row_select expects rank-2, got {:?}",
                t.shape
            )));
        }
        let (r, c) = (t.shape[0], t.shape[1]);
        if row >= r {
            return Err(TensorError::Shape(format!(
                "row {row} out of range for {r} rows"
            )));
        }
        let data = t.data[row * c..(row + 1) * c].to_vec();
        self.push_op(Op::RowSelect(a, row), Tensor::vector(data), "row_select")
    }

    /// Stack equal-length vectors into a matrix, one per row.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(TensorError::Usage("stack_rows of no rows".to_string()));
        }
        let c = self.value(rows[0]).shape.clone();
        if c.len() != 1 {
            return Err(TensorError::Shape(
                "stack_rows expects rank-1 operands".to_string(),
            ));
        }
        let cols = c[0];
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &v in rows {
            let t = self.value(v);
            if t.shape != c {
                return Err(TensorError::Shape(format!(
                    "stack_rows: {:?} vs {:?}",
                    t.shape, c
                )));
            }
            data.extend_from_slice(&t.data);
        }
        self.push_op(
            Op::StackRows(rows.to_vec()),
            Tensor::new(vec![rows.len(), cols], data)?,
            "stack_rows",
        )
    }

    /// Reverse-mode sweep from a scalar loss. Returns gradients for every
    /// named parameter leaf, keyed by name.
    pub fn backward(&self, loss: Var) -> Result<BTreeMap<String, Tensor>> {
        if self.nodes.is_empty() {
            return Err(TensorError::Usage("backward on empty graph".to_string()));
        }
        if !self.value(loss).is_scalar() {
            return Err(TensorError::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad && !matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::Add(a, b) => {
                    self.accum(&mut grads, *a, &g);
                    self.accum(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    self.accum(&mut grads, *a, &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    self.accum(&mut grads, *b, &neg);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(&self.value(*b).data)
                        .map(|(x, y)| x * y)
                        .collect();
                    let gb: Vec<f64> = g
                        .iter()
                        .zip(&self.value(*a).data)
                        .map(|(x, y)| x * y)
                        .collect();
                    self.accum(&mut grads, *a, &ga);
                    self.accum(&mut grads, *b, &gb);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k) = (ta.shape[0], ta.shape[1]);
                    match tb.shape.len() {
                        1 => {
                            // c = A x; dA = g xT, dx = AT g
                            let mut ga = vec![0.0; m * k];
                            let mut gb = vec![0.0; k];
                            for i in 0..m {
                                for j in 0..k {
                                    ga[i * k + j] = g[i] * tb.data[j];
                                    gb[j] += ta.data[i * k + j] * g[i];
                                }
                            }
                            self.accum(&mut grads, *a, &ga);
                            self.accum(&mut grads, *b, &gb);
                        }
                        _ => {
                            let n = tb.shape[1];
                            let mut ga = vec![0.0; m * k];
                            let mut gb = vec![0.0; k * n];
                            for i in 0..m {
                                for j in 0..k {
                                    let mut acc = 0.0;
                                    for c in 0..n {
                                        acc += g[i * n + c] * tb.data[j * n + c];
                                        gb[j * n + c] += ta.data[i * k + j] * g[i * n + c];
                                    }
                                    ga[i * k + j] = acc;
                                }
                            }
                            self.accum(&mut grads, *a, &ga);
                            self.accum(&mut grads, *b, &gb);
                        }
                    }
                }
                Op::Concat(a, b) => {
                    let na = self.value(*a).len();
                    self.accum(&mut grads, *a, &g[..na]);
                    self.accum(&mut grads, *b, &g[na..]);
                }
                Op::MeanRows(a) => {
                    let t = self.value(*a);
                    let (r, c) = (t.shape[0], t.shape[1]);
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] = g[j] / r as f64;
                        }
                    }
                    self.accum(&mut grads, *a, &ga);
                }
                Op::SumAll(a) => {
                    let ga = vec![g[0]; self.value(*a).len()];
                    self.accum(&mut grads, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[idx].value.data;
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(gi, yi)| gi * yi * (1.0 - yi))
                        .collect();
                    self.accum(&mut grads, *a, &ga);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value.data;
                    let ga: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect();
                    self.accum(&mut grads, *a, &ga);
                }
                Op::Transpose(a) => {
                    let t = self.value(*a);
                    let (r, c) = (t.shape[0], t.shape[1]);
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] = g[j * r + i];
                        }
                    }
                    self.accum(&mut grads, *a, &ga);
                }
                Op::SqFrobNorm(a) => {
                    let ga: Vec<f64> = self.value(*a).data.iter().map(|x| 2.0 * g[0] * x).collect();
                    self.accum(&mut grads, *a, &ga);
                }
                Op::Log(a) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(&self.value(*a).data)
                        .map(|(gi, xi)| gi / xi)
                        .collect();
                    self.accum(&mut grads, *a, &ga);
                }
                Op::Clip(a, lo, hi) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(&self.value(*a).data)
                        .map(|(gi, xi)| if *xi >= *lo && *xi <= *hi { *gi } else { 0.0 })
                        .collect();
                    self.accum(&mut grads, *a, &ga);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|gi| gi * c).collect();
                    self.accum(&mut grads, *a, &ga);
                }
                Op::AddConst(a) => {
                    self.accum(&mut grads, *a, &g);
                }
                Op::GradReverse(a) => {
                    let ga: Vec<f64> = g.iter().map(|gi| -gi).collect();
                    self.accum(&mut grads, *a, &ga);
                }
                Op::RowSelect(a, row) => {
                    let t = self.value(*a);
                    let c = t.shape[1];
                    let mut ga = vec![0.0; t.len()];
                    ga[row * c..(row + 1) * c].copy_from_slice(&g);
                    self.accum(&mut grads, *a, &ga);
                }
                Op::StackRows(vs) => {
                    let cols = g.len() / vs.len();
                    for (i, v) in vs.iter().enumerate() {
                        self.accum(&mut grads, *v, &g[i * cols..(i + 1) * cols]);
                    }
                }
            }
        }

        let mut out = BTreeMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Some(name) = &node.name {
                if node.requires_grad {
                    let data = grads[idx]
                        .take()
                        .unwrap_or_else(|| vec![0.0; node.value.len()]);
                    out.insert(
                        name.clone(),
                        Tensor::new(node.value.shape.clone(), data)?,
                    );
                }
            }
        }
        Ok(out)
    }

    fn accum(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, gi) in existing.iter_mut().zip(g) {
                    *e += gi;
                }
            }
            slot => *slot = Some(g.to_vec()),
        }
    }
}
