//! Eager tape for reverse-mode differentiation over dense f64 matrices.
//!
//! Each operation evaluates immediately and records itself; `backward` walks
//! the record in reverse and accumulates adjoints into every named leaf.
//! Stop-gradient nodes pass values forward and block all adjoint flow, which
//! is how TD targets and per-sample gradient routing are expressed upstream.

use std::collections::BTreeMap;

use super::mat::Mat;
use super::params::ParamStore;
use super::KernelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Leaf(String),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    Mish(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    GroupSoftmax(NodeId, usize),
    LogGroupSoftmax(NodeId, usize),
    Sum(NodeId),
    Mean(NodeId),
    ConcatCols(NodeId, NodeId),
    StopGrad(#[allow(dead_code)] NodeId),
}

struct Node {
    value: Mat,
    op: Op,
}

/// Gradients keyed like the leaves that produced them.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_name: BTreeMap<String, Mat>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat)> {
        self.by_name.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    /// Euclidean norm over every recorded entry.
    pub fn global_norm(&self) -> f64 {
        self.by_name
            .values()
            .flat_map(|m| m.data.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for m in self.by_name.values_mut() {
            for g in m.data.iter_mut() {
                *g *= s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.by_name.values().all(|m| m.all_finite())
    }

    pub fn merge(&mut self, other: Gradients) {
        for (name, grad) in other.by_name {
            match self.by_name.get_mut(&name) {
                Some(acc) => {
                    for (a, g) in acc.data.iter_mut().zip(grad.data.iter()) {
                        *a += g;
                    }
                }
                None => {
                    self.by_name.insert(name, grad);
                }
            }
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

fn mish_deriv(x: f64) -> f64 {
    let t = softplus(x).tanh();
    let sig = 1.0 / (1.0 + (-x).exp());
    t + x * (1.0 - t * t) * sig
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        let m = self.value(id);
        assert!(m.rows == 1 && m.cols == 1, "node is not scalar");
        m.data[0]
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Const)
    }

    /// Named differentiable leaf; `backward` reports a gradient under this name.
    pub fn leaf(&mut self, name: &str, value: Mat) -> NodeId {
        self.push(value, Op::Leaf(name.to_string()))
    }

    /// Insert every entry of a store as named leaves (trainable) or constants.
    pub fn params(&mut self, store: &ParamStore, trainable: bool) -> BTreeMap<String, NodeId> {
        store
            .iter()
            .map(|(name, value)| {
                let id = if trainable {
                    self.leaf(name, value.clone())
                } else {
                    self.constant(value.clone())
                };
                (name.clone(), id)
            })
            .collect()
    }

    fn check_same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<(), KernelError> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(KernelError::ShapeMismatch {
                what: format!("{what} at nodes {}/{}", a.0, b.0),
                expected: (va.rows, va.cols),
                got: (vb.rows, vb.cols),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        self.check_same_shape(a, b, "add")?;
        let mut v = self.value(a).clone();
        for (x, y) in v.data.iter_mut().zip(self.value(b).data.iter()) {
            *x += y;
        }
        Ok(self.push(v, Op::Add(a, b)))
    }

    /// Broadcast a 1 x cols bias over every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, KernelError> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows != 1 || vb.cols != va.cols {
            return Err(KernelError::ShapeMismatch {
                what: format!("add_row bias at node {}", bias.0),
                expected: (1, va.cols),
                got: (vb.rows, vb.cols),
            });
        }
        let mut v = va.clone();
        for r in 0..v.rows {
            for c in 0..v.cols {
                v.data[r * v.cols + c] += vb.data[c];
            }
        }
        Ok(self.push(v, Op::AddRow(a, bias)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        self.check_same_shape(a, b, "sub")?;
        let mut v = self.value(a).clone();
        for (x, y) in v.data.iter_mut().zip(self.value(b).data.iter()) {
            *x -= y;
        }
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        self.check_same_shape(a, b, "mul")?;
        let mut v = self.value(a).clone();
        for (x, y) in v.data.iter_mut().zip(self.value(b).data.iter()) {
            *x *= y;
        }
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols != vb.rows {
            return Err(KernelError::ShapeMismatch {
                what: format!("matmul at nodes {}/{}", a.0, b.0),
                expected: (va.cols, va.cols),
                got: (vb.rows, vb.cols),
            });
        }
        let v = va.matmul(vb);
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn mish(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(mish);
        self.push(v, Op::Mish(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    /// Softmax over each contiguous group of `k` columns, per row.
    pub fn group_softmax(&mut self, a: NodeId, k: usize) -> Result<NodeId, KernelError> {
        let va = self.value(a);
        if k == 0 || va.cols % k != 0 {
            return Err(KernelError::InvalidArg(format!(
                "group size {k} does not divide {} columns (node {})",
                va.cols, a.0
            )));
        }
        let mut v = va.clone();
        for row in v.data.chunks_mut(v.cols) {
            for group in row.chunks_mut(k) {
                let max = group.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for g in group.iter_mut() {
                    *g = (*g - max).exp();
                    sum += *g;
                }
                for g in group.iter_mut() {
                    *g /= sum;
                }
            }
        }
        Ok(self.push(v, Op::GroupSoftmax(a, k)))
    }

    /// Log-softmax over each contiguous group of `k` columns, per row.
    pub fn log_group_softmax(&mut self, a: NodeId, k: usize) -> Result<NodeId, KernelError> {
        let va = self.value(a);
        if k == 0 || va.cols % k != 0 {
            return Err(KernelError::InvalidArg(format!(
                "group size {k} does not divide {} columns (node {})",
                va.cols, a.0
            )));
        }
        let mut v = va.clone();
        for row in v.data.chunks_mut(v.cols) {
            for group in row.chunks_mut(k) {
                let max = group.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + group.iter().map(|g| (g - max).exp()).sum::<f64>().ln();
                for g in group.iter_mut() {
                    *g -= lse;
                }
            }
        }
        Ok(self.push(v, Op::LogGroupSoftmax(a, k)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data.iter().sum();
        self.push(Mat::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let s: f64 = v.data.iter().sum::<f64>() / v.len() as f64;
        self.push(Mat::scalar(s), Op::Mean(a))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, KernelError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows != vb.rows {
            return Err(KernelError::ShapeMismatch {
                what: format!("concat_cols at nodes {}/{}", a.0, b.0),
                expected: (va.rows, va.cols),
                got: (vb.rows, vb.cols),
            });
        }
        let mut v = Mat::zeros(va.rows, va.cols + vb.cols);
        for r in 0..va.rows {
            let out = &mut v.data[r * v.cols..(r + 1) * v.cols];
            out[..va.cols].copy_from_slice(va.row(r));
            out[va.cols..].copy_from_slice(vb.row(r));
        }
        Ok(self.push(v, Op::ConcatCols(a, b)))
    }

    /// Identity forward, zero adjoint upstream.
    pub fn stop_grad(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.push(v, Op::StopGrad(a))
    }

    /// Reverse pass from a scalar output; returns gradients for every named leaf.
    pub fn backward(&mut self, out: NodeId) -> Result<Gradients, KernelError> {
        if out.0 >= self.nodes.len() {
            return Err(KernelError::InvalidArg(format!(
                "backward on node {} but tape holds {} nodes",
                out.0,
                self.nodes.len()
            )));
        }
        let ov = self.value(out);
        if ov.rows != 1 || ov.cols != 1 {
            return Err(KernelError::InvalidArg(format!(
                "backward requires a scalar output, node {} is {}x{}",
                out.0, ov.rows, ov.cols
            )));
        }

        let mut adjoints: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[out.0] = Some(Mat::scalar(1.0));

        for idx in (0..=out.0).rev() {
            let grad = match adjoints[idx].take() {
                Some(g) => g,
                None => continue,
            };
            // Re-store for leaf collection below.
            let op = self.nodes[idx].op.clone();
            match &op {
                Op::Const | Op::StopGrad(_) => {}
                Op::Leaf(_) => {
                    adjoints[idx] = Some(grad);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adjoints, *a, grad.clone());
                    accumulate(&mut adjoints, *b, grad);
                }
                Op::AddRow(a, bias) => {
                    let cols = grad.cols;
                    let mut bg = Mat::zeros(1, cols);
                    for row in grad.data.chunks(cols) {
                        for (bgc, g) in bg.data.iter_mut().zip(row.iter()) {
                            *bgc += g;
                        }
                    }
                    accumulate(&mut adjoints, *a, grad);
                    accumulate(&mut adjoints, *bias, bg);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adjoints, *a, grad.clone());
                    let mut neg = grad;
                    for g in neg.data.iter_mut() {
                        *g = -*g;
                    }
                    accumulate(&mut adjoints, *b, neg);
                }
                Op::Mul(a, b) => {
                    let mut ga = grad.clone();
                    for (g, y) in ga.data.iter_mut().zip(self.value(*b).data.iter()) {
                        *g *= y;
                    }
                    let mut gb = grad;
                    for (g, x) in gb.data.iter_mut().zip(self.value(*a).data.iter()) {
                        *g *= x;
                    }
                    accumulate(&mut adjoints, *a, ga);
                    accumulate(&mut adjoints, *b, gb);
                }
                Op::Scale(a, s) => {
                    let mut g = grad;
                    for x in g.data.iter_mut() {
                        *x *= s;
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::MatMul(a, b) => {
                    let ga = grad.matmul_nt(self.value(*b));
                    let gb = self.value(*a).matmul_tn(&grad);
                    accumulate(&mut adjoints, *a, ga);
                    accumulate(&mut adjoints, *b, gb);
                }
                Op::Mish(a) => {
                    let mut g = grad;
                    for (gx, x) in g.data.iter_mut().zip(self.value(*a).data.iter()) {
                        *gx *= mish_deriv(*x);
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::Tanh(a) => {
                    let mut g = grad;
                    for (gx, y) in g.data.iter_mut().zip(self.nodes[idx].value.data.iter()) {
                        *gx *= 1.0 - y * y;
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::Exp(a) => {
                    let mut g = grad;
                    for (gx, y) in g.data.iter_mut().zip(self.nodes[idx].value.data.iter()) {
                        *gx *= y;
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::Log(a) => {
                    let mut g = grad;
                    for (gx, x) in g.data.iter_mut().zip(self.value(*a).data.iter()) {
                        *gx /= x;
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::GroupSoftmax(a, k) => {
                    let y = &self.nodes[idx].value;
                    let mut g = grad;
                    for (grow, yrow) in g.data.chunks_mut(y.cols).zip(y.data.chunks(y.cols)) {
                        for (gg, yg) in grow.chunks_mut(*k).zip(yrow.chunks(*k)) {
                            let dot: f64 = gg.iter().zip(yg.iter()).map(|(g, y)| g * y).sum();
                            for (g, y) in gg.iter_mut().zip(yg.iter()) {
                                *g = y * (*g - dot);
                            }
                        }
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::LogGroupSoftmax(a, k) => {
                    let y = &self.nodes[idx].value;
                    let mut g = grad;
                    for (grow, yrow) in g.data.chunks_mut(y.cols).zip(y.data.chunks(y.cols)) {
                        for (gg, yg) in grow.chunks_mut(*k).zip(yrow.chunks(*k)) {
                            let gsum: f64 = gg.iter().sum();
                            for (g, y) in gg.iter_mut().zip(yg.iter()) {
                                *g -= y.exp() * gsum;
                            }
                        }
                    }
                    accumulate(&mut adjoints, *a, g);
                }
                Op::Sum(a) => {
                    let g = grad.data[0];
                    let va = self.value(*a);
                    let ga = Mat::from_vec(va.rows, va.cols, vec![g; va.len()]);
                    accumulate(&mut adjoints, *a, ga);
                }
                Op::Mean(a) => {
                    let va = self.value(*a);
                    let g = grad.data[0] / va.len() as f64;
                    let ga = Mat::from_vec(va.rows, va.cols, vec![g; va.len()]);
                    accumulate(&mut adjoints, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let (va_cols, vb_cols) = (self.value(*a).cols, self.value(*b).cols);
                    let rows = grad.rows;
                    let mut ga = Mat::zeros(rows, va_cols);
                    let mut gb = Mat::zeros(rows, vb_cols);
                    for r in 0..rows {
                        let grow = grad.row(r);
                        ga.data[r * va_cols..(r + 1) * va_cols].copy_from_slice(&grow[..va_cols]);
                        gb.data[r * vb_cols..(r + 1) * vb_cols].copy_from_slice(&grow[va_cols..]);
                    }
                    accumulate(&mut adjoints, *a, ga);
                    accumulate(&mut adjoints, *b, gb);
                }
            }
        }

        let mut grads = Gradients::default();
        for (idx, adj) in adjoints.into_iter().enumerate() {
            if let (Op::Leaf(name), Some(g)) = (&self.nodes[idx].op, adj) {
                match grads.by_name.get_mut(name) {
                    Some(acc) => {
                        for (a, gv) in acc.data.iter_mut().zip(g.data.iter()) {
                            *a += gv;
                        }
                    }
                    None => {
                        grads.by_name.insert(name.clone(), g);
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adjoints: &mut [Option<Mat>], id: NodeId, grad: Mat) {
    match &mut adjoints[id.0] {
        Some(acc) => {
            for (a, g) in acc.data.iter_mut().zip(grad.data.iter()) {
                *a += g;
            }
        }
        slot @ None => *slot = Some(grad),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_forward_and_grad() {
        let mut t = Tape::new();
        let x = t.leaf("x", Mat::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        assert_eq!(t.scalar_value(y), 9.0);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get("x").unwrap().data[0], 6.0);
    }

    #[test]
    fn mish_at_zero() {
        assert_eq!(mish(0.0), 0.0);
        let mut t = Tape::new();
        let x = t.constant(Mat::scalar(0.0));
        let y = t.mish(x);
        assert_eq!(t.scalar_value(y), 0.0);
    }

    #[test]
    fn stop_grad_blocks_one_factor() {
        // d/dx [sg(x) * x] at x = 2 is 2, not 4.
        let mut t = Tape::new();
        let x = t.leaf("x", Mat::scalar(2.0));
        let sg = t.stop_grad(x);
        let y = t.mul(sg, x).unwrap();
        assert_eq!(t.scalar_value(y), 4.0);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get("x").unwrap().data[0], 2.0);
    }

    #[test]
    fn leaf_behind_stop_grad_gets_no_entry() {
        let mut t = Tape::new();
        let x = t.leaf("x", Mat::scalar(2.0));
        let y = t.leaf("y", Mat::scalar(3.0));
        let sgx = t.stop_grad(x);
        let p = t.mul(sgx, y).unwrap();
        let g = t.backward(p).unwrap();
        assert!(g.get("x").is_none());
        assert_eq!(g.get("y").unwrap().data[0], 2.0);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let x = t.leaf("x", Mat::row_vec(vec![1.0, 2.0]));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn backward_on_missing_node_rejected() {
        let mut t = Tape::new();
        assert!(t.backward(NodeId(0)).is_err());
    }

    #[test]
    fn shape_mismatch_reports_node() {
        let mut t = Tape::new();
        let a = t.constant(Mat::zeros(2, 3));
        let b = t.constant(Mat::zeros(2, 2));
        let err = t.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("nodes 0/1"), "{err}");
    }

    #[test]
    fn group_softmax_rows_normalize() {
        let mut t = Tape::new();
        let x = t.constant(Mat::from_vec(1, 4, vec![0.0, 0.0, 5.0, 1.0]));
        let y = t.group_softmax(x, 2).unwrap();
        let v = t.value(y);
        assert!((v.data[0] - 0.5).abs() < 1e-12);
        assert!((v.data[2] + v.data[3] - 1.0).abs() < 1e-12);
    }

    /// Central finite differences on a scalar-output tape function.
    fn fd_check(build: impl Fn(&mut Tape, NodeId) -> NodeId, x0: Vec<f64>) {
        let h = 1e-6;
        let mut t = Tape::new();
        let x = t.leaf("x", Mat::row_vec(x0.clone()));
        let y = build(&mut t, x);
        let g = t.backward(y).unwrap();
        let ga = g.get("x").unwrap().data.clone();
        for i in 0..x0.len() {
            let eval = |v: f64| {
                let mut xs = x0.clone();
                xs[i] = v;
                let mut t = Tape::new();
                let x = t.leaf("x", Mat::row_vec(xs));
                let y = build(&mut t, x);
                t.scalar_value(y)
            };
            let fd = (eval(x0[i] + h) - eval(x0[i] - h)) / (2.0 * h);
            let rel = (ga[i] - fd).abs() / fd.abs().max(ga[i].abs()).max(1e-3);
            assert!(rel <= 1e-4, "component {i}: ad {} vs fd {fd}", ga[i]);
        }
    }

    #[test]
    fn primitive_gradients_match_finite_differences() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x0: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            // mish -> tanh -> group softmax -> weighted sum
            fd_check(
                |t, x| {
                    let m = t.mish(x);
                    let th = t.tanh(m);
                    let sm = t.group_softmax(th, 3).unwrap();
                    let w = t.constant(Mat::col_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0, 2.0]));
                    let y = t.matmul(sm, w).unwrap();
                    t.mean(y)
                },
                x0.clone(),
            );
            // exp/log path (shifted positive for log)
            fd_check(
                |t, x| {
                    let e = t.exp(x);
                    let l = t.log(e);
                    let sq = t.mul(l, l).unwrap();
                    t.sum(sq)
                },
                x0.clone(),
            );
            // log-group-softmax cross-entropy form
            fd_check(
                |t, x| {
                    let lp = t.log_group_softmax(x, 2).unwrap();
                    let target = t.constant(Mat::row_vec(vec![0.3, 0.7, 1.0, 0.0, 0.5, 0.5]));
                    let p = t.mul(target, lp).unwrap();
                    let s = t.sum(p);
                    t.scale(s, -1.0)
                },
                x0,
            );
        }
    }

    #[test]
    fn matmul_affine_gradients_match_finite_differences() {
        fd_check(
            |t, x| {
                let w = t.constant(Mat::from_vec(6, 2, (0..12).map(|i| 0.3 * i as f64 - 1.0).collect()));
                let b = t.constant(Mat::row_vec(vec![0.1, -0.2]));
                let h = t.matmul(x, w).unwrap();
                let h = t.add_row(h, b).unwrap();
                let h = t.mish(h);
                t.sum(h)
            },
            vec![0.5, -1.2, 0.3, 1.7, -0.4, 0.9],
        );
    }

    #[test]
    fn deterministic_forward() {
        let run = || {
            let mut t = Tape::new();
            let x = t.constant(Mat::row_vec(vec![0.123, -1.5, 2.25]));
            let w = t.constant(Mat::from_vec(3, 3, (0..9).map(|i| (i as f64).sin()).collect()));
            let h = t.matmul(x, w).unwrap();
            let h = t.mish(h);
            let s = t.group_softmax(h, 3).unwrap();
            t.value(s).data.clone()
        };
        assert_eq!(run(), run());
    }
}
