//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation eagerly (values are computed at node
//! creation). [`Tape::grad`] walks the recorded graph backwards and emits the
//! adjoints as *new tape nodes*, so a gradient is itself a differentiable
//! quantity. That closure property is what allows the critic's gradient
//! penalty, which differentiates a function of an input gradient with respect
//! to the critic parameters.
//!
//! Shapes are checked at node creation and violations panic: the callers in
//! this crate validate user-facing inputs before building a graph, so a shape
//! mismatch inside a tape is a programming error.

use ndarray::{ArrayD, Axis, Ix2, IxDyn};

/// Index of a node on a [`Tape`].
pub type TensorId = usize;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    Neg(TensorId),
    Scale(TensorId, f64),
    Shift(TensorId),
    Powi(TensorId, i32),
    Exp(TensorId),
    Ln(TensorId),
    Sqrt(TensorId),
    Tanh(TensorId),
    Sigmoid(TensorId),
    Relu(TensorId),
    LeakyRelu(TensorId, f64),
    MatMul(TensorId, TensorId),
    BatchMatMul(TensorId, TensorId),
    PermuteAxes(TensorId, Vec<usize>),
    Reshape(TensorId),
    BroadcastTo(TensorId),
    SumAxis(TensorId, usize),
    SumAll(TensorId),
    Select(TensorId, usize, usize),
    Expand(TensorId, usize, usize),
}

struct Node {
    value: ArrayD<f64>,
    op: Op,
}

/// Eager computation tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn standard(a: ArrayD<f64>) -> ArrayD<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op) -> TensorId {
        self.nodes.push(Node {
            value: standard(value),
            op,
        });
        self.nodes.len() - 1
    }

    /// Insert a constant/parameter node.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> TensorId {
        self.push(value, Op::Leaf)
    }

    /// Scalar constant (0-dimensional).
    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.leaf(ArrayD::from_elem(IxDyn(&[]), v))
    }

    /// Copy of `id`'s value as a fresh leaf: gradients do not flow past it.
    pub fn detach(&mut self, id: TensorId) -> TensorId {
        let v = self.nodes[id].value.clone();
        self.leaf(v)
    }

    pub fn value(&self, id: TensorId) -> &ArrayD<f64> {
        &self.nodes[id].value
    }

    pub fn scalar_value(&self, id: TensorId) -> f64 {
        let v = &self.nodes[id].value;
        assert!(v.ndim() == 0, "scalar_value on non-scalar node");
        v[IxDyn(&[])]
    }

    pub fn shape(&self, id: TensorId) -> Vec<usize> {
        self.nodes[id].value.shape().to_vec()
    }

    fn binary_shapes(&self, a: TensorId, b: TensorId, what: &str) {
        assert_eq!(
            self.nodes[a].value.shape(),
            self.nodes[b].value.shape(),
            "{what}: shape mismatch (use broadcast_to explicitly)"
        );
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_shapes(a, b, "add");
        let v = &self.nodes[a].value + &self.nodes[b].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_shapes(a, b, "sub");
        let v = &self.nodes[a].value - &self.nodes[b].value;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_shapes(a, b, "mul");
        let v = &self.nodes[a].value * &self.nodes[b].value;
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary_shapes(a, b, "div");
        let v = &self.nodes[a].value / &self.nodes[b].value;
        self.push(v, Op::Div(a, b))
    }

    pub fn neg(&mut self, x: TensorId) -> TensorId {
        let v = self.nodes[x].value.mapv(|e| -e);
        self.push(v, Op::Neg(x))
    }

    pub fn scale(&mut self, x: TensorId, c: f64) -> TensorId {
        let v = self.nodes[x].value.mapv(|e| e * c);
        self.push(v, Op::Scale(x, c))
    }

    pub fn shift(&mut self, x: TensorId, c: f64) -> TensorId {
        let v = self.nodes[x].value.mapv(|e| e + c);
        self.push(v, Op::Shift(x))
    }

    pub fn powi(&mut self, x: TensorId, n: i32) -> TensorId {
        let v = self.nodes[x].value.mapv(|e| e.powi(n));
        self.push(v, Op::Powi(x, n))
    }

    pub fn exp(&mut self, x: TensorId) -> TensorId {
        let v = self.nodes[x].value.mapv(f64::exp);
        self.push(v, Op::Exp(x))
    }

    pub fn ln(&mut self, x: TensorId) -> TensorId {
        let v = self.nodes[x].value.mapv(f64::ln);
        self.push(v, Op::Ln(x))
    }

    pub fn sqrt(&mut self, x: TensorId) -> TensorId {
        let v = self.nodes[x].value.mapv(f64::sqrt);
        self.push(v, Op::Sqrt(x))
    }

    pub fn tanh(&mut self, x: TensorId) -> TensorId {
        let v = self.nodes[x].value.mapv(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        let v = self.nodes[x].value.mapv(|e| 1.0 / (1.0 + (-e).exp()));
        self.push(v, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        let v = self.nodes[x].value.mapv(|e| e.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: TensorId, slope: f64) -> TensorId {
        let v = self.nodes[x].value.mapv(|e| if e > 0.0 { e } else { slope * e });
        self.push(v, Op::LeakyRelu(x, slope))
    }

    /// `[n, m] x [m, k] -> [n, k]`
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let av = &self.nodes[a].value;
        let bv = &self.nodes[b].value;
        assert!(av.ndim() == 2 && bv.ndim() == 2, "matmul expects 2-d inputs");
        assert_eq!(av.shape()[1], bv.shape()[0], "matmul: inner dims differ");
        let a2 = av.view().into_dimensionality::<Ix2>().unwrap();
        let b2 = bv.view().into_dimensionality::<Ix2>().unwrap();
        let v = a2.dot(&b2).into_dyn();
        self.push(v, Op::MatMul(a, b))
    }

    /// `[B, n, m] x [B, m, k] -> [B, n, k]`
    pub fn batch_matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let av = &self.nodes[a].value;
        let bv = &self.nodes[b].value;
        assert!(av.ndim() == 3 && bv.ndim() == 3, "batch_matmul expects 3-d inputs");
        assert_eq!(av.shape()[0], bv.shape()[0], "batch_matmul: batch dims differ");
        assert_eq!(av.shape()[2], bv.shape()[1], "batch_matmul: inner dims differ");
        let (bsz, n, k) = (av.shape()[0], av.shape()[1], bv.shape()[2]);
        let mut out = ArrayD::zeros(IxDyn(&[bsz, n, k]));
        for i in 0..bsz {
            let ai = av
                .index_axis(Axis(0), i)
                .into_dimensionality::<Ix2>()
                .unwrap();
            let bi = bv
                .index_axis(Axis(0), i)
                .into_dimensionality::<Ix2>()
                .unwrap();
            out.index_axis_mut(Axis(0), i).assign(&ai.dot(&bi));
        }
        self.push(out, Op::BatchMatMul(a, b))
    }

    pub fn permute_axes(&mut self, x: TensorId, perm: &[usize]) -> TensorId {
        let xv = &self.nodes[x].value;
        assert_eq!(perm.len(), xv.ndim(), "permute_axes: rank mismatch");
        let v = xv.view().permuted_axes(perm).as_standard_layout().into_owned();
        self.push(v.into_dyn(), Op::PermuteAxes(x, perm.to_vec()))
    }

    /// Transpose of a 2-d tensor.
    pub fn transpose(&mut self, x: TensorId) -> TensorId {
        self.permute_axes(x, &[1, 0])
    }

    pub fn reshape(&mut self, x: TensorId, dims: &[usize]) -> TensorId {
        let xv = &self.nodes[x].value;
        let n_old: usize = xv.len();
        let n_new: usize = dims.iter().product();
        assert_eq!(n_old, n_new, "reshape: element count changed");
        let v = xv
            .view()
            .to_shape(IxDyn(dims))
            .expect("reshape on standard layout")
            .to_owned();
        self.push(v, Op::Reshape(x))
    }

    /// Numpy-style broadcast to a larger shape.
    pub fn broadcast_to(&mut self, x: TensorId, dims: &[usize]) -> TensorId {
        let xv = &self.nodes[x].value;
        let v = xv
            .broadcast(IxDyn(dims))
            .unwrap_or_else(|| panic!("broadcast_to: {:?} -> {:?}", xv.shape(), dims))
            .to_owned();
        self.push(v, Op::BroadcastTo(x))
    }

    /// Sum over one axis; the axis is removed from the shape.
    pub fn sum_axis(&mut self, x: TensorId, axis: usize) -> TensorId {
        let v = self.nodes[x].value.sum_axis(Axis(axis));
        self.push(v, Op::SumAxis(x, axis))
    }

    /// Sum of all entries; returns a 0-d scalar node.
    pub fn sum_all(&mut self, x: TensorId) -> TensorId {
        let s = self.nodes[x].value.sum();
        self.push(ArrayD::from_elem(IxDyn(&[]), s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: TensorId) -> TensorId {
        let n = self.nodes[x].value.len() as f64;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n)
    }

    /// Pick index `i` along `axis`; the axis is removed from the shape.
    pub fn select(&mut self, x: TensorId, axis: usize, i: usize) -> TensorId {
        let v = self.nodes[x].value.index_axis(Axis(axis), i).to_owned();
        self.push(v, Op::Select(x, axis, i))
    }

    /// Inverse of [`Tape::select`]: place `x` at index `i` of a new axis of
    /// length `size`, zero elsewhere.
    pub fn expand(&mut self, x: TensorId, axis: usize, i: usize, size: usize) -> TensorId {
        let xv = &self.nodes[x].value;
        let mut dims = xv.shape().to_vec();
        dims.insert(axis, size);
        let mut out = ArrayD::zeros(IxDyn(&dims));
        out.index_axis_mut(Axis(axis), i).assign(xv);
        self.push(out, Op::Expand(x, axis, i))
    }

    /// `x + b` where `b` has the shape of `x`'s last axis.
    pub fn add_bias(&mut self, x: TensorId, b: TensorId) -> TensorId {
        let xs = self.shape(x);
        let bs = self.shape(b);
        assert!(bs.len() == 1 && bs[0] == *xs.last().unwrap(), "add_bias: bias rank");
        let mut ones = vec![1usize; xs.len() - 1];
        ones.push(bs[0]);
        let br = self.reshape(b, &ones);
        let bb = self.broadcast_to(br, &xs);
        self.add(x, bb)
    }

    /// Numerically stable softmax over the last axis.
    ///
    /// The stabilizing shift is a constant, which leaves both the value and
    /// the gradient exact (softmax is shift-invariant).
    pub fn softmax_last(&mut self, x: TensorId) -> TensorId {
        let shifted = self.shift_by_last_max(x);
        let e = self.exp(shifted);
        let denom = self.sum_last_keep(e);
        self.div(e, denom)
    }

    /// Numerically stable log-softmax over the last axis.
    pub fn log_softmax_last(&mut self, x: TensorId) -> TensorId {
        let shifted = self.shift_by_last_max(x);
        let e = self.exp(shifted);
        let denom = self.sum_last_keep(e);
        let log_denom = self.ln(denom);
        self.sub(shifted, log_denom)
    }

    fn shift_by_last_max(&mut self, x: TensorId) -> TensorId {
        let xs = self.shape(x);
        let last = xs.len() - 1;
        let maxes = self.nodes[x]
            .value
            .map_axis(Axis(last), |row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let mut keep = xs.clone();
        keep[last] = 1;
        let maxes = maxes.into_shape_with_order(IxDyn(&keep)).unwrap();
        let full = maxes.broadcast(IxDyn(&xs)).unwrap().to_owned();
        let c = self.leaf(full);
        self.sub(x, c)
    }

    /// Sum over the last axis, broadcast back to the input shape.
    fn sum_last_keep(&mut self, x: TensorId) -> TensorId {
        let xs = self.shape(x);
        let last = xs.len() - 1;
        let s = self.sum_axis(x, last);
        let mut keep = xs.clone();
        keep[last] = 1;
        let sk = self.reshape(s, &keep);
        self.broadcast_to(sk, &xs)
    }

    /// Reduce `g` back to `target` shape by summing broadcast axes.
    fn reduce_like(&mut self, mut g: TensorId, target: &[usize]) -> TensorId {
        while self.shape(g).len() > target.len() {
            g = self.sum_axis(g, 0);
        }
        for (ax, &tdim) in target.iter().enumerate() {
            if tdim == 1 && self.shape(g)[ax] != 1 {
                let reduced = self.sum_axis(g, ax);
                let mut dims = self.shape(reduced);
                dims.insert(ax, 1);
                g = self.reshape(reduced, &dims);
            }
        }
        g
    }

    fn mask_of(&mut self, x: TensorId, f: impl Fn(f64) -> f64) -> TensorId {
        let m = self.nodes[x].value.mapv(f);
        self.leaf(m)
    }

    fn accumulate(&mut self, adj: &mut [Option<TensorId>], i: TensorId, c: TensorId) {
        adj[i] = Some(match adj[i] {
            None => c,
            Some(prev) => self.add(prev, c),
        });
    }

    /// Reverse-mode gradient of scalar node `output` with respect to each node
    /// in `wrt`. The adjoints are emitted as new tape nodes and therefore can
    /// be differentiated again.
    ///
    /// Nodes that do not influence `output` get a zero gradient of their own
    /// shape.
    pub fn grad(&mut self, output: TensorId, wrt: &[TensorId]) -> Vec<TensorId> {
        assert!(
            self.nodes[output].value.ndim() == 0,
            "grad: output must be a scalar node"
        );
        let frontier = output + 1;
        let mut adj: Vec<Option<TensorId>> = vec![None; frontier];
        let seed = self.scalar(1.0);
        adj[output] = Some(seed);

        for id in (0..frontier).rev() {
            let Some(g) = adj[id] else { continue };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, a, g);
                    self.accumulate(&mut adj, b, g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adj, a, g);
                    let nb = self.neg(g);
                    self.accumulate(&mut adj, b, nb);
                }
                Op::Mul(a, b) => {
                    let da = self.mul(g, b);
                    let db = self.mul(g, a);
                    self.accumulate(&mut adj, a, da);
                    self.accumulate(&mut adj, b, db);
                }
                Op::Div(a, b) => {
                    let da = self.div(g, b);
                    let gy = self.mul(g, id);
                    let gyb = self.div(gy, b);
                    let db = self.neg(gyb);
                    self.accumulate(&mut adj, a, da);
                    self.accumulate(&mut adj, b, db);
                }
                Op::Neg(x) => {
                    let d = self.neg(g);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Scale(x, c) => {
                    let d = self.scale(g, c);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Shift(x) => {
                    self.accumulate(&mut adj, x, g);
                }
                Op::Powi(x, n) => {
                    let p = self.powi(x, n - 1);
                    let gp = self.mul(g, p);
                    let d = self.scale(gp, n as f64);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Exp(x) => {
                    let d = self.mul(g, id);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Ln(x) => {
                    let d = self.div(g, x);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Sqrt(x) => {
                    let gy = self.div(g, id);
                    let d = self.scale(gy, 0.5);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Tanh(x) => {
                    let y2 = self.powi(id, 2);
                    let ny2 = self.neg(y2);
                    let one_m = self.shift(ny2, 1.0);
                    let d = self.mul(g, one_m);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Sigmoid(x) => {
                    let ny = self.neg(id);
                    let one_m = self.shift(ny, 1.0);
                    let yy = self.mul(id, one_m);
                    let d = self.mul(g, yy);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Relu(x) => {
                    let mask = self.mask_of(x, |e| if e > 0.0 { 1.0 } else { 0.0 });
                    let d = self.mul(g, mask);
                    self.accumulate(&mut adj, x, d);
                }
                Op::LeakyRelu(x, s) => {
                    let mask = self.mask_of(x, |e| if e > 0.0 { 1.0 } else { s });
                    let d = self.mul(g, mask);
                    self.accumulate(&mut adj, x, d);
                }
                Op::MatMul(a, b) => {
                    let bt = self.transpose(b);
                    let da = self.matmul(g, bt);
                    let at = self.transpose(a);
                    let db = self.matmul(at, g);
                    self.accumulate(&mut adj, a, da);
                    self.accumulate(&mut adj, b, db);
                }
                Op::BatchMatMul(a, b) => {
                    let bt = self.permute_axes(b, &[0, 2, 1]);
                    let da = self.batch_matmul(g, bt);
                    let at = self.permute_axes(a, &[0, 2, 1]);
                    let db = self.batch_matmul(at, g);
                    self.accumulate(&mut adj, a, da);
                    self.accumulate(&mut adj, b, db);
                }
                Op::PermuteAxes(x, perm) => {
                    let mut inv = vec![0usize; perm.len()];
                    for (i, &p) in perm.iter().enumerate() {
                        inv[p] = i;
                    }
                    let d = self.permute_axes(g, &inv);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Reshape(x) => {
                    let xs = self.shape(x);
                    let d = self.reshape(g, &xs);
                    self.accumulate(&mut adj, x, d);
                }
                Op::BroadcastTo(x) => {
                    let xs = self.shape(x);
                    let d = self.reduce_like(g, &xs);
                    self.accumulate(&mut adj, x, d);
                }
                Op::SumAxis(x, axis) => {
                    let xs = self.shape(x);
                    let mut keep = xs.clone();
                    keep[axis] = 1;
                    let gr = self.reshape(g, &keep);
                    let d = self.broadcast_to(gr, &xs);
                    self.accumulate(&mut adj, x, d);
                }
                Op::SumAll(x) => {
                    let xs = self.shape(x);
                    let ones = vec![1usize; xs.len()];
                    let gr = self.reshape(g, &ones);
                    let d = self.broadcast_to(gr, &xs);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Select(x, axis, i) => {
                    let size = self.shape(x)[axis];
                    let d = self.expand(g, axis, i, size);
                    self.accumulate(&mut adj, x, d);
                }
                Op::Expand(x, axis, i) => {
                    let d = self.select(g, axis, i);
                    self.accumulate(&mut adj, x, d);
                }
            }
        }

        wrt.iter()
            .map(|&w| {
                adj.get(w).copied().flatten().unwrap_or_else(|| {
                    let z = ArrayD::zeros(IxDyn(&self.shape(w)));
                    self.leaf(z)
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Central finite differences of `f` at `x0`.
    fn fd_grad(f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], eps: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(x0.len());
        let mut x = x0.to_vec();
        for i in 0..x0.len() {
            x[i] = x0[i] + eps;
            let hi = f(&x);
            x[i] = x0[i] - eps;
            let lo = f(&x);
            x[i] = x0[i];
            out.push((hi - lo) / (2.0 * eps));
        }
        out
    }

    fn assert_close(analytic: &[f64], numeric: &[f64], rel_tol: f64) {
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let denom = a.abs().max(n.abs()).max(1e-6);
            assert!(
                (a - n).abs() / denom < rel_tol,
                "grad entry {i}: analytic {a} vs numeric {n}"
            );
        }
    }

    /// Runs a full tape-vs-finite-difference comparison for a scalar function
    /// of a flat parameter vector.
    fn gradcheck(
        build: &mut dyn FnMut(&mut Tape, TensorId) -> TensorId,
        shape: &[usize],
        x0: &[f64],
        rel_tol: f64,
    ) {
        let mut eval = |x: &[f64]| {
            let mut t = Tape::new();
            let xv = ArrayD::from_shape_vec(IxDyn(shape), x.to_vec()).unwrap();
            let xid = t.leaf(xv);
            let y = build(&mut t, xid);
            t.scalar_value(y)
        };
        let numeric = fd_grad(&mut eval, x0, 1e-5);

        let mut t = Tape::new();
        let xv = ArrayD::from_shape_vec(IxDyn(shape), x0.to_vec()).unwrap();
        let xid = t.leaf(xv);
        let y = build(&mut t, xid);
        let g = t.grad(y, &[xid])[0];
        let analytic: Vec<f64> = t.value(g).iter().cloned().collect();
        assert_close(&analytic, &numeric, rel_tol);
    }

    #[test]
    fn elementwise_chain_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x0 = rand_vec(&mut rng, 12);
        gradcheck(
            &mut |t, x| {
                let a = t.tanh(x);
                let b = t.sigmoid(a);
                let c = t.exp(b);
                let d = t.powi(c, 3);
                let e = t.scale(d, 0.25);
                let f = t.shift(e, 1.5);
                let g = t.sqrt(f);
                t.sum_all(g)
            },
            &[3, 4],
            &x0,
            1e-6,
        );
    }

    #[test]
    fn division_and_log_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x0: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..2.0)).collect();
        gradcheck(
            &mut |t, x| {
                let l = t.ln(x);
                let s = t.shift(x, 2.0);
                let q = t.div(l, s);
                t.sum_all(q)
            },
            &[10],
            &x0,
            1e-6,
        );
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a0 = rand_vec(&mut rng, 6);
        let b0 = rand_vec(&mut rng, 12);
        let mut eval = |joint: &[f64]| {
            let mut t = Tape::new();
            let a = t.leaf(ArrayD::from_shape_vec(IxDyn(&[2, 3]), joint[..6].to_vec()).unwrap());
            let b = t.leaf(ArrayD::from_shape_vec(IxDyn(&[3, 4]), joint[6..].to_vec()).unwrap());
            let c = t.matmul(a, b);
            let c2 = t.tanh(c);
            let y = t.sum_all(c2);
            t.scalar_value(y)
        };
        let joint: Vec<f64> = a0.iter().chain(b0.iter()).cloned().collect();
        let numeric = fd_grad(&mut eval, &joint, 1e-5);
        let mut t = Tape::new();
        let a = t.leaf(ArrayD::from_shape_vec(IxDyn(&[2, 3]), a0.clone()).unwrap());
        let b = t.leaf(ArrayD::from_shape_vec(IxDyn(&[3, 4]), b0.clone()).unwrap());
        let c = t.matmul(a, b);
        let c2 = t.tanh(c);
        let y = t.sum_all(c2);
        let g = t.grad(y, &[a, b]);
        let analytic: Vec<f64> = t
            .value(g[0])
            .iter()
            .chain(t.value(g[1]).iter())
            .cloned()
            .collect();
        assert_close(&analytic, &numeric, 1e-6);
    }

    #[test]
    fn batch_matmul_and_permute_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x0 = rand_vec(&mut rng, 2 * 3 * 3);
        gradcheck(
            &mut |t, x| {
                let xt = t.permute_axes(x, &[0, 2, 1]);
                let prod = t.batch_matmul(x, xt);
                let sq = t.tanh(prod);
                t.sum_all(sq)
            },
            &[2, 3, 3],
            &x0,
            1e-6,
        );
    }

    #[test]
    fn softmax_gradient_matches_finite_differences_and_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = rand_vec(&mut rng, 4 * 5);
        gradcheck(
            &mut |t, x| {
                let sm = t.softmax_last(x);
                let w = t.powi(sm, 2);
                t.sum_all(w)
            },
            &[4, 5],
            &x0,
            1e-6,
        );
        let mut t = Tape::new();
        let x = t.leaf(ArrayD::from_shape_vec(IxDyn(&[4, 5]), x0).unwrap());
        let sm = t.softmax_last(x);
        for row in t.value(sm).rows() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn select_expand_broadcast_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x0 = rand_vec(&mut rng, 3 * 4);
        gradcheck(
            &mut |t, x| {
                let c1 = t.select(x, 1, 2); // [3]
                let e = t.expand(c1, 0, 1, 2); // [2,3]
                let b = t.reshape(c1, &[1, 3]);
                let bb = t.broadcast_to(b, &[2, 3]);
                let s = t.mul(e, bb);
                let sm = t.sum_axis(s, 0);
                let total = t.sum_all(sm);
                let m = t.mean_all(x);
                t.add(total, m)
            },
            &[3, 4],
            &x0,
            1e-6,
        );
    }

    /// The pattern the critic loss uses: a penalty built from the gradient of
    /// the critic output with respect to its input, then differentiated with
    /// respect to the critic weights.
    #[test]
    fn second_order_gradient_penalty_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w1_0 = rand_vec(&mut rng, 4 * 3);
        let w2_0 = rand_vec(&mut rng, 3);
        let x_in = rand_vec(&mut rng, 4);
        let joint: Vec<f64> = w1_0.iter().chain(w2_0.iter()).cloned().collect();

        let mut eval = |p: &[f64]| {
            let mut t = Tape::new();
            let w1 = t.leaf(ArrayD::from_shape_vec(IxDyn(&[4, 3]), p[..12].to_vec()).unwrap());
            let w2 = t.leaf(ArrayD::from_shape_vec(IxDyn(&[3, 1]), p[12..].to_vec()).unwrap());
            let x = t.leaf(ArrayD::from_shape_vec(IxDyn(&[1, 4]), x_in.clone()).unwrap());
            let h = t.matmul(x, w1);
            let h = t.tanh(h);
            let d = t.matmul(h, w2); // [1,1]
            let d = t.reshape(d, &[]);
            let gx = t.grad(d, &[x])[0];
            let g2 = t.powi(gx, 2);
            let n2 = t.sum_all(g2);
            let n = t.sqrt(n2);
            let nm1 = t.shift(n, -1.0);
            let pen = t.powi(nm1, 2);
            t.scalar_value(pen)
        };
        let numeric = fd_grad(&mut eval, &joint, 1e-5);

        let mut t = Tape::new();
        let w1 = t.leaf(ArrayD::from_shape_vec(IxDyn(&[4, 3]), w1_0).unwrap());
        let w2 = t.leaf(ArrayD::from_shape_vec(IxDyn(&[3, 1]), w2_0).unwrap());
        let x = t.leaf(ArrayD::from_shape_vec(IxDyn(&[1, 4]), x_in).unwrap());
        let h = t.matmul(x, w1);
        let h = t.tanh(h);
        let d = t.matmul(h, w2);
        let d = t.reshape(d, &[]);
        let gx = t.grad(d, &[x])[0];
        let g2 = t.powi(gx, 2);
        let n2 = t.sum_all(g2);
        let n = t.sqrt(n2);
        let nm1 = t.shift(n, -1.0);
        let pen = t.powi(nm1, 2);
        let grads = t.grad(pen, &[w1, w2]);
        let analytic: Vec<f64> = t
            .value(grads[0])
            .iter()
            .chain(t.value(grads[1]).iter())
            .cloned()
            .collect();
        assert_close(&analytic, &numeric, 1e-5);
    }

    #[test]
    fn detach_blocks_gradient_flow() {
        let mut t = Tape::new();
        let x = t.leaf(ArrayD::from_elem(IxDyn(&[2]), 3.0));
        let d = t.detach(x);
        let y = t.mul(x, d);
        let s = t.sum_all(y);
        let g = t.grad(s, &[x])[0];
        // d(x * const)/dx = const = 3, not 2x = 6
        assert_eq!(t.value(g).iter().cloned().collect::<Vec<_>>(), vec![3.0, 3.0]);
    }

    #[test]
    fn unreachable_node_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(ArrayD::from_elem(IxDyn(&[2, 2]), 1.0));
        let z = t.leaf(ArrayD::from_elem(IxDyn(&[3]), 5.0));
        let s = t.sum_all(x);
        let g = t.grad(s, &[z])[0];
        assert_eq!(t.shape(g), vec![3]);
        assert!(t.value(g).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn log_softmax_matches_softmax_log() {
        let mut t = Tape::new();
        let x = t.leaf(
            ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![1.0, -2.0, 0.5, 30.0, 10.0, -5.0])
                .unwrap(),
        );
        let ls = t.log_softmax_last(x);
        let sm = t.softmax_last(x);
        let lg = t.ln(sm);
        for (a, b) in t.value(ls).iter().zip(t.value(lg).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
