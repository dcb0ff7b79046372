//! Reverse-mode differentiation over small dense computation graphs.
//!
//! The engine is an eager tape: building an op computes its value
//! immediately. [`Graph::backward`] emits the vector-Jacobian products as new
//! graph nodes rather than plain buffers, so a gradient is itself a
//! differentiable expression — which is what lets gradient-matching losses
//! backpropagate through per-parameter classifier gradients without any
//! dedicated higher-order machinery.
//!
//! The primitive set is fixed and each primitive's VJP is either hand-written
//! against the adjoint pair (`Gather`/`ScatterAdd`, `SumAll`/`Broadcast`) or
//! expressed in terms of the other primitives, keeping every rule exact and
//! finite-difference checkable.

mod adam;
mod check;
mod composites;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use check::grad_check;
pub use composites::Padding;

use std::rc::Rc;

use crate::error::{Error, Result};

/// Dense f64 array with shape. Rank 0 is not used; scalars are `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match buffer length {}",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn full(shape: Vec<usize>, v: f64) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![v; len],
        }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Tensor {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "elementwise shape mismatch");
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Index map shared by a `Gather` and its adjoint `ScatterAdd`.
///
/// `idx[i]` is the flat source element for output element `i`; `-1` means
/// the output element is zero-filled (used for padding).
#[derive(Debug)]
pub struct GatherMap {
    idx: Vec<i64>,
    src_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl GatherMap {
    pub fn new(idx: Vec<i64>, src_shape: Vec<usize>, out_shape: Vec<usize>) -> GatherMap {
        let src_len: usize = src_shape.iter().product();
        assert_eq!(idx.len(), out_shape.iter().product::<usize>());
        assert!(
            idx.iter().all(|&i| i >= -1 && (i as i128) < src_len as i128),
            "gather index out of range"
        );
        GatherMap {
            idx,
            src_shape,
            out_shape,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Sin,
    Cos,
    Exp,
    Ln,
    Recip,
    Rsqrt,
    Relu,
    Matmul,
    Transpose,
    Reshape,
    Gather(Rc<GatherMap>),
    ScatterAdd(Rc<GatherMap>),
    SumAll,
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

struct GNode {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// An eager computation tape. Single-threaded during construction and
/// backward; distinct graphs are independent.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<GNode>,
}

fn matmul_val(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape.len(), 2, "matmul lhs must be rank 2");
    assert_eq!(b.shape.len(), 2, "matmul rhs must be rank 2");
    let (r, k) = (a.shape[0], a.shape[1]);
    let (k2, c) = (b.shape[0], b.shape[1]);
    assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * c..(i + 1) * c];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b.data[kk * c..(kk + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![r, c], out)
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        self.nodes.push(GNode { op, inputs, value });
        NodeId(self.nodes.len() - 1)
    }

    /// A differentiable input (parameter) or plain constant; which one it is
    /// only matters for which ids are passed to [`Graph::backward`].
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, vec![], t)
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.leaf(t)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(Tensor::scalar(v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(Op::Add, vec![a, b], v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(Op::Sub, vec![a, b], v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(Op::Mul, vec![a, b], v)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| s * x);
        self.push(Op::Scale(s), vec![a], v)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::sin);
        self.push(Op::Sin, vec![a], v)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::cos);
        self.push(Op::Cos, vec![a], v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp, vec![a], v)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Ln, vec![a], v)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / x);
        self.push(Op::Recip, vec![a], v)
    }

    pub fn rsqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / x.sqrt());
        self.push(Op::Rsqrt, vec![a], v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu, vec![a], v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul_val(self.value(a), self.value(b));
        self.push(Op::Matmul, vec![a, b], v)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        assert_eq!(t.shape.len(), 2, "transpose needs rank 2");
        let (r, c) = (t.shape[0], t.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.data[i * c + j];
            }
        }
        self.push(Op::Transpose, vec![a], Tensor::new(vec![c, r], out))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> NodeId {
        let t = self.value(a);
        assert_eq!(
            shape.iter().product::<usize>(),
            t.len(),
            "reshape {:?} -> {shape:?} changes element count",
            t.shape
        );
        let v = Tensor::new(shape, t.data.clone());
        self.push(Op::Reshape, vec![a], v)
    }

    pub fn gather(&mut self, a: NodeId, map: Rc<GatherMap>) -> NodeId {
        let t = self.value(a);
        assert_eq!(t.shape, map.src_shape, "gather source shape mismatch");
        let data = map
            .idx
            .iter()
            .map(|&i| if i < 0 { 0.0 } else { t.data[i as usize] })
            .collect();
        let v = Tensor::new(map.out_shape.clone(), data);
        self.push(Op::Gather(map), vec![a], v)
    }

    pub fn scatter_add(&mut self, a: NodeId, map: Rc<GatherMap>) -> NodeId {
        let t = self.value(a);
        assert_eq!(t.shape, map.out_shape, "scatter source shape mismatch");
        let mut data = vec![0.0; map.src_shape.iter().product()];
        for (&i, &x) in map.idx.iter().zip(&t.data) {
            if i >= 0 {
                data[i as usize] += x;
            }
        }
        let v = Tensor::new(map.src_shape.clone(), data);
        self.push(Op::ScatterAdd(map), vec![a], v)
    }

    /// Sum of all elements, as a `[1]` scalar node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data.iter().sum();
        self.push(Op::SumAll, vec![a], Tensor::scalar(s))
    }

    /// Fill `shape` with the scalar value of `a`.
    pub fn broadcast(&mut self, a: NodeId, shape: Vec<usize>) -> NodeId {
        let t = self.value(a);
        assert_eq!(t.len(), 1, "broadcast source must be scalar");
        let v = Tensor::full(shape, t.data[0]);
        self.push(Op::Broadcast, vec![a], v)
    }

    fn ones_like(&mut self, id: NodeId) -> NodeId {
        let shape = self.value(id).shape.to_vec();
        self.leaf(Tensor::full(shape, 1.0))
    }

    /// Emit the VJP nodes of `node` given its output gradient node `g`.
    /// Returns one optional contribution per input.
    fn vjp(&mut self, node: usize, g: NodeId) -> Vec<Option<NodeId>> {
        let op = self.nodes[node].op.clone();
        let inputs = self.nodes[node].inputs.clone();
        let out = NodeId(node);
        match op {
            Op::Leaf => vec![],
            Op::Add => vec![Some(g), Some(g)],
            Op::Sub => vec![Some(g), Some(self.scale(g, -1.0))],
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                vec![Some(self.mul(g, b)), Some(self.mul(g, a))]
            }
            Op::Scale(s) => vec![Some(self.scale(g, s))],
            Op::Sin => {
                let c = self.cos(inputs[0]);
                vec![Some(self.mul(g, c))]
            }
            Op::Cos => {
                let s = self.sin(inputs[0]);
                let gs = self.mul(g, s);
                vec![Some(self.scale(gs, -1.0))]
            }
            Op::Exp => vec![Some(self.mul(g, out))],
            Op::Ln => {
                let r = self.recip(inputs[0]);
                vec![Some(self.mul(g, r))]
            }
            Op::Recip => {
                let yy = self.mul(out, out);
                let gyy = self.mul(g, yy);
                vec![Some(self.scale(gyy, -1.0))]
            }
            Op::Rsqrt => {
                let y2 = self.mul(out, out);
                let y3 = self.mul(y2, out);
                let gy3 = self.mul(g, y3);
                vec![Some(self.scale(gy3, -0.5))]
            }
            Op::Relu => {
                let mask = self.value(inputs[0]).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let m = self.leaf(mask);
                vec![Some(self.mul(g, m))]
            }
            Op::Matmul => {
                let (a, b) = (inputs[0], inputs[1]);
                let bt = self.transpose(b);
                let at = self.transpose(a);
                vec![Some(self.matmul(g, bt)), Some(self.matmul(at, g))]
            }
            Op::Transpose => vec![Some(self.transpose(g))],
            Op::Reshape => {
                let shape = self.value(inputs[0]).shape.to_vec();
                vec![Some(self.reshape(g, shape))]
            }
            Op::Gather(map) => vec![Some(self.scatter_add(g, map))],
            Op::ScatterAdd(map) => vec![Some(self.gather(g, map))],
            Op::SumAll => {
                let shape = self.value(inputs[0]).shape.to_vec();
                vec![Some(self.broadcast(g, shape))]
            }
            Op::Broadcast => vec![Some(self.sum(g))],
        }
    }

    /// Reverse-mode gradients of a scalar `root` with respect to `wrt`.
    ///
    /// Gradients are emitted as graph nodes, so they can be fed back into
    /// further computation and differentiated again. Unreachable `wrt`
    /// entries get zero gradients.
    pub fn backward(&mut self, root: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        if self.value(root).len() != 1 {
            return Err(Error::invalid(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let n = root.0 + 1;

        // descendants of wrt
        let mut needs = vec![false; n];
        for w in wrt {
            if w.0 < n {
                needs[w.0] = true;
            }
        }
        for id in 0..n {
            if !needs[id] {
                needs[id] = self.nodes[id].inputs.iter().any(|p| needs[p.0]);
            }
        }
        // ancestors of root
        let mut live = vec![false; n];
        live[root.0] = true;
        for id in (0..n).rev() {
            if live[id] {
                for p in &self.nodes[id].inputs {
                    live[p.0] = true;
                }
            }
        }

        let mut grads: Vec<Option<NodeId>> = vec![None; n];
        if needs[root.0] {
            grads[root.0] = Some(self.ones_like(root));
        }
        for id in (0..n).rev() {
            let Some(g) = grads[id] else { continue };
            if !live[id] || !needs[id] {
                continue;
            }
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let contributions = self.vjp(id, g);
            let inputs = self.nodes[id].inputs.clone();
            for (input, contrib) in inputs.iter().zip(contributions) {
                if !needs[input.0] {
                    continue;
                }
                if let Some(c) = contrib {
                    grads[input.0] = Some(match grads[input.0] {
                        Some(prev) => self.add(prev, c),
                        None => c,
                    });
                }
            }
        }

        Ok(wrt
            .iter()
            .map(|w| {
                grads.get(w.0).copied().flatten().unwrap_or_else(|| {
                    let shape = self.value(*w).shape.to_vec();
                    self.leaf(Tensor::zeros(shape))
                })
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]));
        let s = g.sum(x);
        let grads = g.backward(s, &[x]).unwrap();
        assert_eq!(g.value(grads[0]).data(), &[1.0; 5]);
    }

    #[test]
    fn sum_of_sin_at_zero_gives_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(vec![4]));
        let s = g.sin(x);
        let r = g.sum(s);
        let grads = g.backward(r, &[x]).unwrap();
        for &v in g.value(grads[0]).data() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let y = g.sin(x);
        assert!(g.backward(y, &[x]).is_err());
    }

    #[test]
    fn unreachable_wrt_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.0));
        let y = g.leaf(Tensor::scalar(2.0));
        let r = g.mul(x, x);
        let grads = g.backward(r, &[y]).unwrap();
        assert_eq!(g.value(grads[0]).data(), &[0.0]);
    }

    #[test]
    fn batch_sum_gradient_is_linear() {
        // grad of sum over a batch equals the sum of per-element gradients
        let pts = [0.3, -1.2, 2.5];
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(pts.to_vec()));
        let s = g.sin(x);
        let sq = g.mul(s, s);
        let r = g.sum(sq);
        let grads = g.backward(r, &[x]).unwrap();
        let batch = g.value(grads[0]).data().to_vec();

        for (i, &p) in pts.iter().enumerate() {
            let mut g1 = Graph::new();
            let x1 = g1.leaf(Tensor::scalar(p));
            let s1 = g1.sin(x1);
            let sq1 = g1.mul(s1, s1);
            let r1 = g1.sum(sq1);
            let gr = g1.backward(r1, &[x1]).unwrap();
            assert_eq!(batch[i], g1.value(gr[0]).data()[0]);
        }
    }

    #[test]
    fn second_derivative_through_gradient_nodes() {
        // y = x^3, dy/dx = 3x^2, d2y/dx2 = 6x
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.7));
        let x2 = g.mul(x, x);
        let y = g.mul(x2, x);
        let first = g.backward(y, &[x]).unwrap()[0];
        assert_abs_diff_eq!(g.value(first).item(), 3.0 * 1.7 * 1.7, epsilon = 1e-12);
        let second = g.backward(first, &[x]).unwrap()[0];
        assert_abs_diff_eq!(g.value(second).item(), 6.0 * 1.7, epsilon = 1e-12);
    }

    #[test]
    fn matmul_adjoints() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]));
        let b = g.leaf(Tensor::new(vec![3, 2], vec![1., 0., 0., 1., 1., 1.]));
        let c = g.matmul(a, b);
        assert_eq!(g.value(c).data(), &[4., 5., 10., 11.]);
        let r = g.sum(c);
        let grads = g.backward(r, &[a, b]).unwrap();
        // dA = ones(2,2) * B^T
        assert_eq!(g.value(grads[0]).data(), &[1., 1., 2., 1., 1., 2.]);
        // dB = A^T * ones(2,2)
        assert_eq!(g.value(grads[1]).data(), &[5., 5., 7., 7., 9., 9.]);
    }

    #[test]
    fn gather_scatter_roundtrip_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        // duplicate element 1 twice, pad one zero
        let map = Rc::new(GatherMap::new(vec![1, 1, -1, 2], vec![3], vec![4]));
        let y = g.gather(x, map);
        assert_eq!(g.value(y).data(), &[2.0, 2.0, 0.0, 3.0]);
        let r = g.sum(y);
        let grads = g.backward(r, &[x]).unwrap();
        assert_eq!(g.value(grads[0]).data(), &[0.0, 2.0, 1.0]);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let build = || {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::from_vec(vec![0.5, -0.25, 0.125]));
            let s = g.sin(x);
            let e = g.exp(s);
            let r = g.sum(e);
            let grads = g.backward(r, &[x]).unwrap();
            (g.value(r).item(), g.value(grads[0]).data().to_vec())
        };
        assert_eq!(build(), build());
    }
}
