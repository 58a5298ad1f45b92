use std::collections::{BTreeMap, HashMap};

use super::{AutodiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds understood by the tape.
#[derive(Clone, Debug)]
pub enum Op {
    Leaf { name: String },
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[r, k] x [k, c] -> [r, c]`
    MatMul(Var, Var),
    /// Matrix `[r, c]` plus a bias of `c` elements broadcast over rows.
    AddBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    Square(Var),
    Sqrt(Var),
    Mean(Var),
    Sum(Var),
    ScalarMul(Var, f64),
    AddScalar(Var, f64),
    /// `max(x, floor)`; the gradient is passed through where `x >= floor`.
    ClampMin(Var, f64),
    Transpose(Var),
    /// `[r, c] -> [r, 1]`
    RowSum(Var),
    /// Indicator `x > 0`. Piecewise constant, so it carries no gradient.
    ReluMask(Var),
    /// Contiguous window of a flat source, reshaped.
    Slice { src: Var, offset: usize, shape: Vec<usize> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Sqrt(_) => "sqrt",
            Op::Mean(_) => "mean",
            Op::Sum(_) => "sum",
            Op::ScalarMul(..) => "scalar_mul",
            Op::AddScalar(..) => "add_scalar",
            Op::ClampMin(..) => "clamp_min",
            Op::Transpose(_) => "transpose",
            Op::RowSum(_) => "row_sum",
            Op::ReluMask(_) => "relu_mask",
            Op::Slice { .. } => "slice",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub value: Tensor,
    requires_grad: bool,
}

/// Define-by-run reverse-mode tape. Values are computed as operations are
/// recorded; [`Tape::forward`] replays the recorded program with new leaf
/// bindings.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adjoints.get(v.0).and_then(|a| a.as_ref())
    }

    /// Gradient with respect to `v`, zero when `v` does not influence the root.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(t) => t.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn mismatch(node: usize, op: &Op, detail: String) -> AutodiffError {
    AutodiffError::ShapeMismatch { node, op: op.name(), detail }
}

fn is_scalar_like(t: &Tensor) -> bool {
    t.len() == 1
}

/// `c = a * b` for row-major operands, with optional transposition expressed
/// through strides.
fn gemm(a: &Tensor, trans_a: bool, b: &Tensor, trans_b: bool) -> Tensor {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k, rsa, csa) = if trans_a { (ac, ar, 1, ac) } else { (ar, ac, ac, 1) };
    let (k2, n, rsb, csb) = if trans_b { (bc, br, 1, bc) } else { (br, bc, bc, 1) };
    debug_assert_eq!(k, k2);
    let mut out = vec![0.0; m * n];
    // SAFETY: pointers and strides describe the full extents of the three
    // buffers, which are distinct allocations.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data().as_ptr(),
            rsa as isize,
            csa as isize,
            b.data().as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor::matrix(m, n, out)
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let src = t.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = src[i * c + j];
        }
    }
    Tensor::matrix(c, r, out)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_into(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
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

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Drops every recorded node.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Differentiable input bound under `name`.
    pub fn leaf(&mut self, name: &str, value: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf { name: name.to_string() }, value, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Constant, value, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var, AutodiffError> {
        let index = self.nodes.len();
        let value = self.eval(index, &op)?;
        let requires_grad = match &op {
            Op::Leaf { .. } => true,
            Op::Constant | Op::ReluMask(_) => false,
            other => inputs(other).iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node { op, value, requires_grad });
        Ok(Var(index))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Mul(a, b))
    }
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::MatMul(a, b))
    }
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, AutodiffError> {
        self.push(Op::AddBias(x, bias))
    }
    pub fn sigmoid(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Sigmoid(x))
    }
    pub fn tanh(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Tanh(x))
    }
    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Relu(x))
    }
    pub fn log(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Log(x))
    }
    pub fn square(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Square(x))
    }
    pub fn sqrt(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Sqrt(x))
    }
    pub fn mean(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Mean(x))
    }
    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Sum(x))
    }
    pub fn scalar_mul(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        self.push(Op::ScalarMul(x, c))
    }
    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        self.push(Op::AddScalar(x, c))
    }
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Result<Var, AutodiffError> {
        self.push(Op::ClampMin(x, floor))
    }
    pub fn transpose(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Transpose(x))
    }
    pub fn row_sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::RowSum(x))
    }
    pub fn relu_mask(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.push(Op::ReluMask(x))
    }
    pub fn slice(&mut self, src: Var, offset: usize, shape: &[usize]) -> Result<Var, AutodiffError> {
        self.push(Op::Slice { src, offset, shape: shape.to_vec() })
    }

    fn eval(&self, index: usize, op: &Op) -> Result<Tensor, AutodiffError> {
        let val = |v: &Var| -> Result<&Tensor, AutodiffError> {
            self.nodes.get(v.0).map(|n| &n.value).filter(|_| v.0 < index).ok_or_else(|| {
                mismatch(index, op, format!("input node {} does not precede node {index}", v.0))
            })
        };
        let same_shape = |a: &Tensor, b: &Tensor| -> Result<(), AutodiffError> {
            if a.shape() == b.shape() {
                Ok(())
            } else {
                Err(mismatch(index, op, format!("{:?} vs {:?}", a.shape(), b.shape())))
            }
        };
        Ok(match op {
            Op::Leaf { .. } | Op::Constant => self.nodes[index].value.clone(),
            Op::Add(a, b) => {
                let (a, b) = (val(a)?, val(b)?);
                same_shape(a, b)?;
                a.zip_map(b, |x, y| x + y)
            }
            Op::Sub(a, b) => {
                let (a, b) = (val(a)?, val(b)?);
                same_shape(a, b)?;
                a.zip_map(b, |x, y| x - y)
            }
            Op::Mul(a, b) => {
                let (a, b) = (val(a)?, val(b)?);
                same_shape(a, b)?;
                a.zip_map(b, |x, y| x * y)
            }
            Op::MatMul(a, b) => {
                let (a, b) = (val(a)?, val(b)?);
                if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
                    return Err(mismatch(index, op, format!("{:?} x {:?}", a.shape(), b.shape())));
                }
                gemm(a, false, b, false)
            }
            Op::AddBias(x, bias) => {
                let (x, bias) = (val(x)?, val(bias)?);
                if x.shape().len() != 2 || bias.len() != x.cols() {
                    return Err(mismatch(
                        index,
                        op,
                        format!("bias {:?} against {:?}", bias.shape(), x.shape()),
                    ));
                }
                let c = x.cols();
                let b = bias.data();
                let mut out = x.clone();
                for row in out.data_mut().chunks_mut(c) {
                    for (o, bv) in row.iter_mut().zip(b) {
                        *o += bv;
                    }
                }
                out
            }
            Op::Sigmoid(x) => val(x)?.map(sigmoid),
            Op::Tanh(x) => val(x)?.map(f64::tanh),
            Op::Relu(x) => val(x)?.map(|v| if v > 0.0 { v } else { 0.0 }),
            Op::Log(x) => {
                let x = val(x)?;
                if let Some(&bad) = x.data().iter().find(|v| !(**v > 0.0)) {
                    return Err(AutodiffError::NonPositiveLog { node: index, value: bad });
                }
                x.map(f64::ln)
            }
            Op::Square(x) => val(x)?.map(|v| v * v),
            Op::Sqrt(x) => {
                let x = val(x)?;
                if let Some(&bad) = x.data().iter().find(|v| !(**v >= 0.0)) {
                    return Err(mismatch(index, op, format!("sqrt of negative value {bad}")));
                }
                x.map(f64::sqrt)
            }
            Op::Mean(x) => {
                let x = val(x)?;
                if x.is_empty() {
                    return Err(mismatch(index, op, "mean of empty tensor".into()));
                }
                Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
            }
            Op::Sum(x) => Tensor::scalar(val(x)?.data().iter().sum()),
            Op::ScalarMul(x, c) => val(x)?.map(|v| v * c),
            Op::AddScalar(x, c) => val(x)?.map(|v| v + c),
            Op::ClampMin(x, floor) => val(x)?.map(|v| if v >= *floor { v } else { *floor }),
            Op::Transpose(x) => {
                let x = val(x)?;
                if x.shape().len() != 2 {
                    return Err(mismatch(index, op, format!("transpose of {:?}", x.shape())));
                }
                transpose(x)
            }
            Op::RowSum(x) => {
                let x = val(x)?;
                if x.shape().len() != 2 {
                    return Err(mismatch(index, op, format!("row_sum of {:?}", x.shape())));
                }
                let c = x.cols();
                Tensor::matrix(x.rows(), 1, x.data().chunks(c).map(|r| r.iter().sum()).collect())
            }
            Op::ReluMask(x) => val(x)?.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            Op::Slice { src, offset, shape } => {
                let src = val(src)?;
                let len: usize = shape.iter().product();
                if offset + len > src.len() {
                    return Err(mismatch(
                        index,
                        op,
                        format!("window {offset}..{} of {} elements", offset + len, src.len()),
                    ));
                }
                Tensor::new(shape.clone(), src.data()[*offset..offset + len].to_vec())
            }
        })
    }

    /// Replays every recorded node, substituting named leaf values from
    /// `bindings`, and returns the value of the last node.
    pub fn forward(&mut self, bindings: &HashMap<String, Tensor>) -> Result<Tensor, AutodiffError> {
        for name in bindings.keys() {
            let known = self.nodes.iter().any(|n| matches!(&n.op, Op::Leaf { name: l } if l == name));
            if !known {
                return Err(AutodiffError::UnknownLeaf(name.clone()));
            }
        }
        for i in 0..self.nodes.len() {
            if let Op::Leaf { name } = &self.nodes[i].op {
                if let Some(t) = bindings.get(name) {
                    self.nodes[i].value = t.clone();
                }
                continue;
            }
            let op = self.nodes[i].op.clone();
            let value = self.eval(i, &op)?;
            self.nodes[i].value = value;
        }
        self.nodes.last().map(|n| n.value.clone()).ok_or(AutodiffError::EmptyTape)
    }

    pub fn backward(&self, root: Var) -> Result<Gradients, AutodiffError> {
        self.backward_seeded(root, 1.0)
    }

    /// Reverse sweep from a scalar `root` whose adjoint is seeded with `seed`.
    pub fn backward_seeded(&self, root: Var, seed: f64) -> Result<Gradients, AutodiffError> {
        let root_value = &self.nodes.get(root.0).ok_or(AutodiffError::EmptyTape)?.value;
        if !is_scalar_like(root_value) {
            return Err(AutodiffError::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Tensor::filled(root_value.shape(), seed));

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            // Leaf adjoints are the result; intermediate ones are consumed.
            if matches!(node.op, Op::Leaf { .. }) {
                adj[i] = Some(g);
                continue;
            }
            let needs = |v: &Var| self.nodes[v.0].requires_grad;
            let value_of = |v: &Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Leaf { .. } | Op::Constant | Op::ReluMask(_) => {}
                Op::Add(a, b) => {
                    if needs(a) {
                        add_into(&mut adj[a.0], g.clone());
                    }
                    if needs(b) {
                        add_into(&mut adj[b.0], g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if needs(a) {
                        add_into(&mut adj[a.0], g.clone());
                    }
                    if needs(b) {
                        add_into(&mut adj[b.0], g.map(|v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    if needs(a) {
                        add_into(&mut adj[a.0], g.zip_map(value_of(b), |x, y| x * y));
                    }
                    if needs(b) {
                        add_into(&mut adj[b.0], g.zip_map(value_of(a), |x, y| x * y));
                    }
                }
                Op::MatMul(a, b) => {
                    if needs(a) {
                        add_into(&mut adj[a.0], gemm(&g, false, value_of(b), true));
                    }
                    if needs(b) {
                        add_into(&mut adj[b.0], gemm(value_of(a), true, &g, false));
                    }
                }
                Op::AddBias(x, bias) => {
                    if needs(bias) {
                        let c = g.cols();
                        let mut col = vec![0.0; c];
                        for row in g.data().chunks(c) {
                            for (acc, v) in col.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                        add_into(&mut adj[bias.0], Tensor::new(value_of(bias).shape().to_vec(), col));
                    }
                    if needs(x) {
                        add_into(&mut adj[x.0], g);
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    add_into(&mut adj[x.0], g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv)));
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    add_into(&mut adj[x.0], g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv)));
                }
                Op::Relu(x) => {
                    let xv = value_of(x);
                    add_into(&mut adj[x.0], g.zip_map(xv, |gv, v| if v > 0.0 { gv } else { 0.0 }));
                }
                Op::Log(x) => {
                    add_into(&mut adj[x.0], g.zip_map(value_of(x), |gv, v| gv / v));
                }
                Op::Square(x) => {
                    add_into(&mut adj[x.0], g.zip_map(value_of(x), |gv, v| 2.0 * gv * v));
                }
                Op::Sqrt(x) => {
                    add_into(&mut adj[x.0], g.zip_map(&node.value, |gv, y| gv / (2.0 * y)));
                }
                Op::Mean(x) => {
                    let xv = value_of(x);
                    let s = g.item() / xv.len() as f64;
                    add_into(&mut adj[x.0], Tensor::filled(xv.shape(), s));
                }
                Op::Sum(x) => {
                    add_into(&mut adj[x.0], Tensor::filled(value_of(x).shape(), g.item()));
                }
                Op::ScalarMul(x, c) => add_into(&mut adj[x.0], g.map(|v| v * c)),
                Op::AddScalar(x, _) => add_into(&mut adj[x.0], g),
                Op::ClampMin(x, floor) => {
                    let f = *floor;
                    add_into(&mut adj[x.0], g.zip_map(value_of(x), |gv, v| if v >= f { gv } else { 0.0 }));
                }
                Op::Transpose(x) => add_into(&mut adj[x.0], transpose(&g)),
                Op::RowSum(x) => {
                    let xv = value_of(x);
                    let c = xv.cols();
                    let mut out = Vec::with_capacity(xv.len());
                    for &gv in g.data() {
                        out.extend(std::iter::repeat_n(gv, c));
                    }
                    add_into(&mut adj[x.0], Tensor::new(xv.shape().to_vec(), out));
                }
                Op::Slice { src, offset, .. } => {
                    let slot = &mut adj[src.0];
                    let acc = slot.get_or_insert_with(|| Tensor::zeros(self.nodes[src.0].value.shape()));
                    for (a, v) in acc.data_mut()[*offset..offset + g.len()].iter_mut().zip(g.data()) {
                        *a += v;
                    }
                }
            }
        }
        adj.resize(self.nodes.len(), None);
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { adjoints: adj, shapes })
    }

    /// Gradient of `root` with respect to every named leaf.
    pub fn leaf_gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match &n.op {
                Op::Leaf { name } => Some((name.clone(), grads.wrt(Var(i)))),
                _ => None,
            })
            .collect()
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf { .. } | Op::Constant => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) | Op::AddBias(a, b) => {
            vec![*a, *b]
        }
        Op::Sigmoid(x)
        | Op::Tanh(x)
        | Op::Relu(x)
        | Op::Log(x)
        | Op::Square(x)
        | Op::Sqrt(x)
        | Op::Mean(x)
        | Op::Sum(x)
        | Op::ScalarMul(x, _)
        | Op::AddScalar(x, _)
        | Op::ClampMin(x, _)
        | Op::Transpose(x)
        | Op::RowSum(x)
        | Op::ReluMask(x) => vec![*x],
        Op::Slice { src, .. } => vec![*src],
    }
}
