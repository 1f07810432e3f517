//! Reverse-mode autodiff over vector/matrix primitives.
//!
//! A [`Tape`] records every operation in execution order, so node inputs always
//! precede the node. Parameters are registered with [`Tape::param`]; the
//! gradient returned by [`Tape::backward`] concatenates their adjoints in
//! registration order.

use super::dense::{matmul_into, DenseVector};
use super::AutodiffError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Silu(NodeId),
    Tanh(NodeId),
    Square(NodeId),
    Sum(NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    /// Total number of scalar parameters registered so far.
    pub fn param_len(&self) -> usize {
        self.params.iter().map(|p| self.nodes[p.0].value.len()).sum()
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> Option<f64> {
        let n = &self.nodes[id.0];
        (n.value.len() == 1).then(|| n.value[0])
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { op, rows, cols, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> NodeId {
        assert_eq!(data.len(), rows * cols, "constant shape mismatch");
        self.push(Op::Constant, rows, cols, data)
    }

    pub fn param(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> NodeId {
        assert_eq!(data.len(), rows * cols, "param shape mismatch");
        let id = self.push(Op::Param, rows, cols, data);
        self.params.push(id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimension mismatch");
        self.record(Op::MatMul(a, b), n, m)
    }

    /// `x (n x m) + b (1 x m)` broadcast over rows.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let (n, m) = self.shape(x);
        assert_eq!(self.shape(b), (1, m), "bias shape mismatch");
        self.record(Op::AddBias(x, b), n, m)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.same_shape(a, b);
        self.record(Op::Add(a, b), s.0, s.1)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.same_shape(a, b);
        self.record(Op::Sub(a, b), s.0, s.1)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.same_shape(a, b);
        self.record(Op::Mul(a, b), s.0, s.1)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let (r, c) = self.shape(a);
        self.record(Op::Scale(a, factor), r, c)
    }

    pub fn silu(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        self.record(Op::Silu(a), r, c)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        self.record(Op::Tanh(a), r, c)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        self.record(Op::Square(a), r, c)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Sum(a), 1, 1)
    }

    fn same_shape(&self, a: NodeId, b: NodeId) -> (usize, usize) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa, sb, "elementwise shape mismatch");
        sa
    }

    fn record(&mut self, op: Op, rows: usize, cols: usize) -> NodeId {
        let value = eval(&op, rows, cols, |id| &self.nodes[id.0]);
        self.push(op, rows, cols, value)
    }

    /// Re-evaluates the recorded graph. When `params` is given it replaces the
    /// parameter values (flattened in registration order). Returns the value
    /// of every node.
    pub fn replay(&self, params: Option<&[f64]>) -> Vec<Vec<f64>> {
        if let Some(p) = params {
            assert_eq!(p.len(), self.param_len(), "replay parameter length mismatch");
        }
        let mut offsets = std::collections::HashMap::new();
        let mut off = 0;
        for id in &self.params {
            offsets.insert(id.0, off);
            off += self.nodes[id.0].value.len();
        }
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        let mut replayed: Vec<Node> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let value = match (&node.op, params) {
                (Op::Param, Some(p)) => {
                    let o = offsets[&i];
                    p[o..o + node.value.len()].to_vec()
                }
                (Op::Constant | Op::Param, _) => node.value.clone(),
                (op, _) => eval(op, node.rows, node.cols, |id| &replayed[id.0]),
            };
            values.push(value.clone());
            replayed.push(Node { op: node.op.clone(), rows: node.rows, cols: node.cols, value });
        }
        values
    }

    /// Gradient of the scalar `output` with respect to every registered
    /// parameter, flattened in registration order.
    pub fn backward(&self, output: NodeId) -> Result<DenseVector, AutodiffError> {
        let out = self.nodes.get(output.0).ok_or(AutodiffError::UnknownNode(output.0))?;
        if out.value.len() != 1 {
            return Err(AutodiffError::NonScalarOutput { rows: out.rows, cols: out.cols });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match node.op {
                Op::Constant => {}
                Op::Param => {
                    adj[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (n, k) = self.shape(a);
                    let m = node.cols;
                    let av = self.value(a);
                    let bv = self.value(b);
                    // dA = G B^T
                    let ga = accum(&mut adj, a, n * k);
                    for r in 0..n {
                        let grow = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let brow = &bv[p * m..(p + 1) * m];
                            ga[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                    // dB = A^T G
                    let gb = accum(&mut adj, b, k * m);
                    for r in 0..n {
                        let grow = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let a_rp = av[r * k + p];
                            if a_rp == 0.0 {
                                continue;
                            }
                            for (o, gv) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *o += a_rp * gv;
                            }
                        }
                    }
                }
                Op::AddBias(x, b) => {
                    let m = node.cols;
                    add_into(accum(&mut adj, x, g.len()), &g);
                    let gb = accum(&mut adj, b, m);
                    for row in g.chunks(m) {
                        add_into(gb, row);
                    }
                }
                Op::Add(a, b) => {
                    add_into(accum(&mut adj, a, g.len()), &g);
                    add_into(accum(&mut adj, b, g.len()), &g);
                }
                Op::Sub(a, b) => {
                    add_into(accum(&mut adj, a, g.len()), &g);
                    let gb = accum(&mut adj, b, g.len());
                    for (o, v) in gb.iter_mut().zip(&g) {
                        *o -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(a).to_vec(), self.value(b).to_vec());
                    let ga = accum(&mut adj, a, g.len());
                    for ((o, gv), y) in ga.iter_mut().zip(&g).zip(&bv) {
                        *o += gv * y;
                    }
                    let gb = accum(&mut adj, b, g.len());
                    for ((o, gv), x) in gb.iter_mut().zip(&g).zip(&av) {
                        *o += gv * x;
                    }
                }
                Op::Scale(a, f) => {
                    let ga = accum(&mut adj, a, g.len());
                    for (o, gv) in ga.iter_mut().zip(&g) {
                        *o += gv * f;
                    }
                }
                Op::Silu(a) => {
                    let xv = self.value(a).to_vec();
                    let ga = accum(&mut adj, a, g.len());
                    for ((o, gv), x) in ga.iter_mut().zip(&g).zip(&xv) {
                        let s = sigmoid(*x);
                        *o += gv * s * (1.0 + x * (1.0 - s));
                    }
                }
                Op::Tanh(a) => {
                    let yv = node.value.clone();
                    let ga = accum(&mut adj, a, g.len());
                    for ((o, gv), y) in ga.iter_mut().zip(&g).zip(&yv) {
                        *o += gv * (1.0 - y * y);
                    }
                }
                Op::Square(a) => {
                    let xv = self.value(a).to_vec();
                    let ga = accum(&mut adj, a, g.len());
                    for ((o, gv), x) in ga.iter_mut().zip(&g).zip(&xv) {
                        *o += 2.0 * gv * x;
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(a).len();
                    let ga = accum(&mut adj, a, n);
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
            }
        }
        let mut flat = Vec::with_capacity(self.param_len());
        for p in &self.params {
            if p.0 > output.0 {
                flat.extend(std::iter::repeat_n(0.0, self.nodes[p.0].value.len()));
                continue;
            }
            match &adj[p.0] {
                Some(g) => flat.extend_from_slice(g),
                None => flat.extend(std::iter::repeat_n(0.0, self.nodes[p.0].value.len())),
            }
        }
        Ok(DenseVector::from_vec(flat))
    }
}

fn accum(adj: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    adj[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn eval<'a, F>(op: &Op, rows: usize, cols: usize, node: F) -> Vec<f64>
where
    F: Fn(NodeId) -> &'a Node,
{
    let unary = |a: NodeId, f: &dyn Fn(f64) -> f64| node(a).value.iter().map(|&x| f(x)).collect();
    let binary = |a: NodeId, b: NodeId, f: &dyn Fn(f64, f64) -> f64| {
        node(a).value.iter().zip(&node(b).value).map(|(&x, &y)| f(x, y)).collect()
    };
    match *op {
        Op::Constant | Op::Param => unreachable!("leaves are not evaluated"),
        Op::MatMul(a, b) => {
            let (na, nb) = (node(a), node(b));
            let mut out = vec![0.0; rows * cols];
            matmul_into(&na.value, &nb.value, na.rows, na.cols, nb.cols, &mut out);
            out
        }
        Op::AddBias(x, b) => {
            let bias = &node(b).value;
            let mut out = node(x).value.clone();
            for row in out.chunks_mut(cols) {
                for (o, bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
            out
        }
        Op::Add(a, b) => binary(a, b, &|x, y| x + y),
        Op::Sub(a, b) => binary(a, b, &|x, y| x - y),
        Op::Mul(a, b) => binary(a, b, &|x, y| x * y),
        Op::Scale(a, f) => unary(a, &|x| x * f),
        Op::Silu(a) => unary(a, &silu),
        Op::Tanh(a) => unary(a, &f64::tanh),
        Op::Square(a) => unary(a, &|x| x * x),
        Op::Sum(a) => vec![node(a).value.iter().sum()],
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Central-difference gradient `(f(θ + h e_i) - f(θ - h e_i)) / 2h` for every
/// coordinate.
pub fn finite_diff_gradient<F>(loss_fn: F, params: &DenseVector, step: f64) -> Result<DenseVector, AutodiffError>
where
    F: Fn(&[f64]) -> f64,
{
    let coords: Vec<usize> = (0..params.len()).collect();
    finite_diff_coords(loss_fn, params, step, &coords)
}

/// Same as [`finite_diff_gradient`] restricted to `coords`; the result has one
/// entry per requested coordinate.
pub fn finite_diff_coords<F>(
    loss_fn: F,
    params: &DenseVector,
    step: f64,
    coords: &[usize],
) -> Result<DenseVector, AutodiffError>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite difference step must be positive");
    let mut probe = params.as_slice().to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + step;
        let fp = loss_fn(&probe);
        probe[i] = orig - step;
        let fm = loss_fn(&probe);
        probe[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(AutodiffError::NonFiniteLoss { coordinate: i });
        }
        out.push((fp - fm) / (2.0 * step));
    }
    Ok(DenseVector::from_vec(out))
}
