//! Reverse-mode automatic differentiation over a Wengert tape.
//!
//! Operations are recorded as they execute; `backward` walks the tape in
//! reverse and accumulates gradients into every leaf. One tape = one forward
//! pass; training builds a fresh tape per step. Tapes are single-threaded,
//! independent tapes may run concurrently.

use thiserror::Error;

use super::tensor::{matmul_acc, Tensor};

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar output, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("non-finite gradient for parameter {index}")]
    NonFiniteGradient { index: usize },
}

/// Handle to a node on a tape. Only valid for the tape that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceMetric {
    Euclidean,
    /// Great-circle distance between unit vectors: acos(clamp(dot)).
    Geodesic,
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Matmul(Var, Var),
    Transpose(Var),
    Relu(Var),
    /// (m x n) + bias row (n).
    AddBias(Var, Var),
    SoftmaxRows(Var),
    Sum(Var),
    /// Collapse (m x n) to (1 x n).
    SumRows(Var),
    /// Tile (1 x n) to (m x n).
    RepeatRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    /// Scatter-add rows of (e x d) into (n x d) at the given indices.
    ScatterAddRows(Var, Vec<usize>),
    ConcatCols(Var, Var),
    /// Pairwise distances between rows of a (m x d) and b (n x d).
    PairwiseDist(Var, Var, DistanceMetric),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    nonfinite: Option<&'static str>,
}

/// Gradients per tape node after a backward pass. Internal-node gradients
/// are freed as soon as they are consumed; leaf gradients are kept.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of the given shape if nothing flowed to it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        match &self.grads[v.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(shape.to_vec()),
        }
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

    /// True once any recorded op produced NaN/Inf.
    pub fn poisoned(&self) -> Option<&'static str> {
        self.nonfinite
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar readout with the finite-forward invariant enforced.
    pub fn scalar_value(&self, v: Var) -> Result<f64, AutodiffError> {
        if let Some(op) = self.nonfinite {
            return Err(AutodiffError::NonFinite { op });
        }
        let t = self.value(v);
        if t.len() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: t.shape().to_vec(),
            });
        }
        Ok(t.item())
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Var {
        if self.nonfinite.is_none() && !value.all_finite() {
            self.nonfinite = Some(name);
        }
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, "leaf")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add shape mismatch");
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data);
        self.push(Op::Add(a, b), out, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "sub shape mismatch");
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x - y)
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data);
        self.push(Op::Sub(a, b), out, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data);
        self.push(Op::Mul(a, b), out, "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), out, "scale")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        assert_eq!(
            k,
            k2,
            "matmul dims {:?} x {:?}",
            self.value(a).shape(),
            self.value(b).shape()
        );
        let mut out = Tensor::zeros(vec![m, n]);
        matmul_acc(
            self.value(a).data(),
            self.value(b).data(),
            out.data_mut(),
            m,
            k,
            n,
        );
        self.push(Op::Matmul(a, b), out, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = super::tensor::transpose(self.value(a));
        self.push(Op::Transpose(a), out, "transpose")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), out, "relu")
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (m, n) = self.value(a).dims2();
        assert_eq!(self.value(bias).len(), n, "bias length mismatch");
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for i in 0..m {
            for j in 0..n {
                out.data_mut()[i * n + j] += b[j];
            }
        }
        self.push(Op::AddBias(a, bias), out, "add_bias")
    }

    /// Row-wise softmax with max-subtraction for stability.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.value(a).dims2();
        assert!(n > 0, "softmax over empty rows");
        let mut out = Tensor::zeros(vec![m, n]);
        for i in 0..m {
            let row = self.value(a).row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..n {
                let e = (row[j] - max).exp();
                out.data_mut()[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                out.data_mut()[i * n + j] /= sum;
            }
        }
        self.push(Op::SoftmaxRows(a), out, "softmax_rows")
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(total), "sum")
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.value(a).dims2();
        let mut out = Tensor::zeros(vec![1, n]);
        for i in 0..m {
            for j in 0..n {
                out.data_mut()[j] += self.value(a).data()[i * n + j];
            }
        }
        self.push(Op::SumRows(a), out, "sum_rows")
    }

    pub fn repeat_rows(&mut self, a: Var, m: usize) -> Var {
        let (one, n) = self.value(a).dims2();
        assert_eq!(one, 1, "repeat_rows expects a 1 x n tensor");
        let row = self.value(a).data().to_vec();
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m {
            data.extend_from_slice(&row);
        }
        self.push(
            Op::RepeatRows(a, m),
            Tensor::matrix(m, n, data),
            "repeat_rows",
        )
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let (rows, n) = self.value(a).dims2();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            assert!(i < rows, "gather index {i} out of range {rows}");
            data.extend_from_slice(self.value(a).row(i));
        }
        let out = Tensor::matrix(idx.len(), n, data);
        self.push(Op::GatherRows(a, idx.to_vec()), out, "gather_rows")
    }

    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], rows: usize) -> Var {
        let (e, n) = self.value(a).dims2();
        assert_eq!(e, idx.len(), "scatter index count mismatch");
        let mut out = Tensor::zeros(vec![rows, n]);
        for (r, &i) in idx.iter().enumerate() {
            assert!(i < rows, "scatter index {i} out of range {rows}");
            let src = self.value(a).row(r).to_vec();
            for j in 0..n {
                out.data_mut()[i * n + j] += src[j];
            }
        }
        self.push(Op::ScatterAddRows(a, idx.to_vec()), out, "scatter_add_rows")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (m, p) = self.value(a).dims2();
        let (m2, q) = self.value(b).dims2();
        assert_eq!(m, m2, "concat_cols row mismatch");
        let mut data = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            data.extend_from_slice(self.value(a).row(i));
            data.extend_from_slice(self.value(b).row(i));
        }
        self.push(
            Op::ConcatCols(a, b),
            Tensor::matrix(m, p + q, data),
            "concat_cols",
        )
    }

    /// Distance matrix (m x n) between rows of `a` (m x d) and `b` (n x d).
    pub fn pairwise_dist(&mut self, a: Var, b: Var, metric: DistanceMetric) -> Var {
        let (m, d) = self.value(a).dims2();
        let (n, d2) = self.value(b).dims2();
        assert_eq!(d, d2, "pairwise_dist dim mismatch");
        let mut out = Tensor::zeros(vec![m, n]);
        for i in 0..m {
            for j in 0..n {
                let (pa, pb) = (self.value(a).row(i), self.value(b).row(j));
                out.data_mut()[i * n + j] = match metric {
                    DistanceMetric::Euclidean => pa
                        .iter()
                        .zip(pb)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt(),
                    DistanceMetric::Geodesic => {
                        let dot: f64 = pa.iter().zip(pb).map(|(x, y)| x * y).sum();
                        dot.clamp(-1.0, 1.0).acos()
                    }
                };
            }
        }
        self.push(Op::PairwiseDist(a, b, metric), out, "pairwise_dist")
    }

    /// Reverse pass from a scalar output. Gradients accumulate into every
    /// node reachable from `output`; read them off leaves via `Gradients`.
    pub fn backward(&mut self, output: Var) -> Result<Gradients, AutodiffError> {
        if let Some(op) = self.nonfinite {
            return Err(AutodiffError::NonFinite { op });
        }
        let out_shape = self.value(output).shape();
        if self.value(output).len() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: out_shape.to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::new(out_shape.to_vec(), vec![1.0]));

        for i in (0..=output.0).rev() {
            if grads[i].is_none() {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let g = grads[i].take().expect("checked above");
            self.accumulate(i, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, node: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let add_to = |grads: &mut [Option<Tensor>], v: Var, delta: Tensor| match &mut grads[v.0] {
            Some(acc) => {
                for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                    *a += d;
                }
            }
            slot @ None => *slot = Some(delta),
        };
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let da = Tensor::new(
                    g.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(x, y)| x * y)
                        .collect(),
                );
                let db = Tensor::new(
                    g.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(x, y)| x * y)
                        .collect(),
                );
                add_to(grads, *a, da);
                add_to(grads, *b, db);
            }
            Op::Scale(a, c) => add_to(grads, *a, g.map(|x| c * x)),
            Op::Matmul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let (_, n) = self.value(*b).dims2();
                // dA = dC . B^T
                let mut da = Tensor::zeros(vec![m, k]);
                let bt = super::tensor::transpose(self.value(*b));
                matmul_acc(g.data(), bt.data(), da.data_mut(), m, n, k);
                // dB = A^T . dC
                let mut db = Tensor::zeros(vec![k, n]);
                let at = super::tensor::transpose(self.value(*a));
                matmul_acc(at.data(), g.data(), db.data_mut(), k, m, n);
                add_to(grads, *a, da);
                add_to(grads, *b, db);
            }
            Op::Transpose(a) => add_to(grads, *a, super::tensor::transpose(g)),
            Op::Relu(a) => {
                let da = Tensor::new(
                    g.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(gy, x)| if *x > 0.0 { *gy } else { 0.0 })
                        .collect(),
                );
                add_to(grads, *a, da);
            }
            Op::AddBias(a, bias) => {
                let (m, n) = g.dims2();
                let mut db = Tensor::zeros(vec![n]);
                for i in 0..m {
                    for j in 0..n {
                        db.data_mut()[j] += g.data()[i * n + j];
                    }
                }
                add_to(grads, *a, g.clone());
                add_to(grads, *bias, db);
            }
            Op::SoftmaxRows(a) => {
                let (m, n) = g.dims2();
                let y = &self.nodes[node].value;
                let mut da = Tensor::zeros(vec![m, n]);
                for i in 0..m {
                    let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(gy, yy)| gy * yy).sum();
                    for j in 0..n {
                        da.data_mut()[i * n + j] = y.row(i)[j] * (g.row(i)[j] - dot);
                    }
                }
                add_to(grads, *a, da);
            }
            Op::Sum(a) => {
                let gv = g.item();
                add_to(grads, *a, self.value(*a).map(|_| gv));
            }
            Op::SumRows(a) => {
                let (m, n) = self.value(*a).dims2();
                let mut da = Tensor::zeros(vec![m, n]);
                for i in 0..m {
                    for j in 0..n {
                        da.data_mut()[i * n + j] = g.data()[j];
                    }
                }
                add_to(grads, *a, da);
            }
            Op::RepeatRows(a, m) => {
                let (_, n) = g.dims2();
                let mut da = Tensor::zeros(vec![1, n]);
                for i in 0..*m {
                    for j in 0..n {
                        da.data_mut()[j] += g.data()[i * n + j];
                    }
                }
                add_to(grads, *a, da);
            }
            Op::GatherRows(a, idx) => {
                let (rows, n) = self.value(*a).dims2();
                let mut da = Tensor::zeros(vec![rows, n]);
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..n {
                        da.data_mut()[i * n + j] += g.data()[r * n + j];
                    }
                }
                add_to(grads, *a, da);
            }
            Op::ScatterAddRows(a, idx) => {
                let (e, n) = self.value(*a).dims2();
                let mut da = Tensor::zeros(vec![e, n]);
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..n {
                        da.data_mut()[r * n + j] = g.data()[i * n + j];
                    }
                }
                add_to(grads, *a, da);
            }
            Op::ConcatCols(a, b) => {
                let (m, p) = self.value(*a).dims2();
                let (_, q) = self.value(*b).dims2();
                let mut da = Tensor::zeros(vec![m, p]);
                let mut db = Tensor::zeros(vec![m, q]);
                for i in 0..m {
                    let grow = g.row(i);
                    da.data_mut()[i * p..(i + 1) * p].copy_from_slice(&grow[..p]);
                    db.data_mut()[i * q..(i + 1) * q].copy_from_slice(&grow[p..]);
                }
                add_to(grads, *a, da);
                add_to(grads, *b, db);
            }
            Op::PairwiseDist(a, b, metric) => {
                let (m, d) = self.value(*a).dims2();
                let (n, _) = self.value(*b).dims2();
                let mut da = Tensor::zeros(vec![m, d]);
                let mut db = Tensor::zeros(vec![n, d]);
                let dist = &self.nodes[node].value;
                for i in 0..m {
                    for j in 0..n {
                        let gd = g.data()[i * n + j];
                        if gd == 0.0 {
                            continue;
                        }
                        let (pa, pb) = (self.value(*a).row(i), self.value(*b).row(j));
                        match metric {
                            DistanceMetric::Euclidean => {
                                let dij = dist.data()[i * n + j];
                                if dij < 1e-12 {
                                    continue; // subgradient 0 at coincident points
                                }
                                for t in 0..d {
                                    let diff = (pa[t] - pb[t]) / dij;
                                    da.data_mut()[i * d + t] += gd * diff;
                                    db.data_mut()[j * d + t] -= gd * diff;
                                }
                            }
                            DistanceMetric::Geodesic => {
                                let dot: f64 = pa
                                    .iter()
                                    .zip(pb)
                                    .map(|(x, y)| x * y)
                                    .sum::<f64>()
                                    .clamp(-1.0, 1.0);
                                let s = 1.0 - dot * dot;
                                if s < 1e-12 {
                                    continue; // acos not differentiable at +-1
                                }
                                let coef = -gd / s.sqrt();
                                for t in 0..d {
                                    da.data_mut()[i * d + t] += coef * pb[t];
                                    db.data_mut()[j * d + t] += coef * pa[t];
                                }
                            }
                        }
                    }
                }
                add_to(grads, *a, da);
                add_to(grads, *b, db);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(1, 2, vec![0.0, 0.0]));
        let y = tape.softmax_rows(x);
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn grad_of_sum_of_squares() {
        // d/dx sum(x^2) at [1, 2] is [2, 4]
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]));
        let sq = tape.mul(x, x);
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn grad_of_constant_path_is_none() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let unused = tape.leaf(Tensor::scalar(5.0));
        let loss = tape.mul(x, x);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.get_or_zeros(unused, &[1]).data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]));
        let y = tape.relu(x);
        assert!(matches!(
            tape.backward(y),
            Err(AutodiffError::NotScalar { .. })
        ));
    }

    #[test]
    fn non_finite_forward_poisons_tape() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1e308));
        let y = tape.mul(x, x);
        assert!(tape.poisoned().is_some());
        assert!(tape.scalar_value(y).is_err());
    }

    #[test]
    fn gather_scatter_round_trip_gradients() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let g = tape.gather_rows(z, &[2, 0, 2]);
        let s = tape.scatter_add_rows(g, &[0, 1, 1], 2);
        let total = tape.sum(s);
        let grads = tape.backward(total).unwrap();
        // rows 0 and 2 of z each flow once/twice into the sum
        assert_eq!(
            grads.get(z).unwrap().data(),
            &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]
        );
    }

    #[test]
    fn same_var_used_twice_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.add(x, x);
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0]);
    }
}
