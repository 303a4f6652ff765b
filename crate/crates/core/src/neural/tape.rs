//! Reverse-mode differentiation over 2-D `f64` matrices.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the nodes in reverse and returns the gradient of a scalar node with
//! respect to every parameter leaf.

use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

use super::params::{Grads, ParamId, ParamSet};

pub type Tensor = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Tanh(Var),
    Square(Var),
    Minimum(Var, Var),
    Clamp(Var, f64, f64),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    RepeatRows(Var, Rc<[usize]>),
    SegmentMean(Var, Rc<[usize]>),
    Reshape(Var),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    Gather(Var, Rc<[usize]>),
    MaskedLogSoftmax(Var, Rc<Array2<bool>>),
    MaskedEntropy(Var, Rc<Array2<bool>>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a `[1, 1]` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.dim(), (1, 1));
        t[[0, 0]]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(params.get(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a + b`, where `b` may broadcast along rows and/or columns.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Elementwise minimum of two equally shaped nodes. Ties send the
    /// gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        Zip::from(&mut v).and(self.value(b)).for_each(|x, &y| *x = x.min(y));
        self.push(v, Op::Minimum(a, b))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("concat_cols: row counts differ");
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    /// Row `i` of `a` repeated `counts[i]` times, stacked in order.
    pub fn repeat_rows(&mut self, a: Var, counts: Rc<[usize]>) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), counts.len(), "repeat_rows: count length");
        let total: usize = counts.iter().sum();
        let mut v = Tensor::zeros((total, src.ncols()));
        let mut r = 0;
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                v.row_mut(r).assign(&src.row(i));
                r += 1;
            }
        }
        self.push(v, Op::RepeatRows(a, counts))
    }

    /// Mean of each row group. `offsets` has one more entry than there are
    /// groups; group `i` spans rows `offsets[i]..offsets[i + 1]`.
    pub fn segment_mean(&mut self, a: Var, offsets: Rc<[usize]>) -> Var {
        let src = self.value(a);
        let groups = offsets.len() - 1;
        let mut v = Tensor::zeros((groups, src.ncols()));
        for g in 0..groups {
            let (lo, hi) = (offsets[g], offsets[g + 1]);
            assert!(hi > lo, "segment_mean: empty group {g}");
            let mut row = v.row_mut(g);
            for r in lo..hi {
                row += &src.row(r);
            }
            row /= (hi - lo) as f64;
        }
        self.push(v, Op::SegmentMean(a, offsets))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.len(), rows * cols, "reshape: element count");
        let flat: Vec<f64> = src.iter().copied().collect();
        let v = Tensor::from_shape_vec((rows, cols), flat).expect("reshape");
        self.push(v, Op::Reshape(a))
    }

    /// Row sums, `[n, m] -> [n, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::SumCols(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::from_elem((1, 1), t.sum() / t.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Picks column `idx[i]` from row `i`: `[n, k] -> [n, 1]`.
    pub fn gather(&mut self, a: Var, idx: Rc<[usize]>) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), idx.len(), "gather: index length");
        let v = Tensor::from_shape_fn((idx.len(), 1), |(i, _)| src[[i, idx[i]]]);
        self.push(v, Op::Gather(a, idx))
    }

    /// Row-wise log-softmax restricted to `mask`. Masked-out entries hold
    /// `-inf` and never receive gradient. Every row needs a valid entry.
    pub fn masked_log_softmax(&mut self, logits: Var, mask: Rc<Array2<bool>>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.dim(), mask.dim(), "masked_log_softmax: mask shape");
        let mut v = Tensor::from_elem(z.dim(), f64::NEG_INFINITY);
        for (i, row) in z.outer_iter().enumerate() {
            let lse = masked_logsumexp(row.iter().copied(), mask.row(i).iter().copied());
            for (j, &x) in row.iter().enumerate() {
                if mask[[i, j]] {
                    v[[i, j]] = x - lse;
                }
            }
        }
        self.push(v, Op::MaskedLogSoftmax(logits, mask))
    }

    /// Entropy of the row-wise masked softmax: `[n, k] -> [n, 1]`.
    pub fn masked_entropy(&mut self, logits: Var, mask: Rc<Array2<bool>>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.dim(), mask.dim(), "masked_entropy: mask shape");
        let mut v = Tensor::zeros((z.nrows(), 1));
        for (i, row) in z.outer_iter().enumerate() {
            let lse = masked_logsumexp(row.iter().copied(), mask.row(i).iter().copied());
            let mut h = 0.0;
            for (j, &x) in row.iter().enumerate() {
                if mask[[i, j]] {
                    let lp = x - lse;
                    h -= lp.exp() * lp;
                }
            }
            v[[i, 0]] = h;
        }
        self.push(v, Op::MaskedEntropy(logits, mask))
    }

    /// Gradients of the `[1, 1]` node `loss` with respect to every
    /// parameter leaf, summed per parameter.
    pub fn backward(&self, loss: Var, params: &ParamSet) -> Grads {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward: loss must be scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::from_elem((1, 1), 1.0));
        let mut out = Grads::zeros_like(params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    let gb = reduce_to(&g, self.value(*b).dim());
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    let gb = -reduce_to(&g, self.value(*b).dim());
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = reduce_to(&(&g * self.value(*a)), self.value(*b).dim());
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|d, &x| if x <= 0.0 { *d = 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => acc(&mut grads, *a, g * &node.value),
                Op::Log(a) => acc(&mut grads, *a, g / self.value(*a)),
                Op::Softplus(a) => {
                    let ga = g * &self.value(*a).mapv(sigmoid);
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g * &node.value.mapv(|y| 1.0 - y * y);
                    acc(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g * &(self.value(*a) * 2.0);
                    acc(&mut grads, *a, ga);
                }
                Op::Minimum(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut ga = g.clone();
                    let mut gb = g;
                    Zip::from(&mut ga)
                        .and(&mut gb)
                        .and(va)
                        .and(vb)
                        .for_each(|da, db, &x, &y| if x <= y { *db = 0.0 } else { *da = 0.0 });
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|d, &x| if x < *lo || x > *hi { *d = 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).ncols();
                    acc(&mut grads, *a, g.slice(s![.., ..ca]).to_owned());
                    acc(&mut grads, *b, g.slice(s![.., ca..]).to_owned());
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Tensor::zeros(self.value(*a).dim());
                    let w = g.ncols();
                    ga.slice_mut(s![.., *start..*start + w]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::RepeatRows(a, counts) => {
                    let mut ga = Tensor::zeros(self.value(*a).dim());
                    let mut r = 0;
                    for (i, &c) in counts.iter().enumerate() {
                        let mut row = ga.row_mut(i);
                        for _ in 0..c {
                            row += &g.row(r);
                            r += 1;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SegmentMean(a, offsets) => {
                    let mut ga = Tensor::zeros(self.value(*a).dim());
                    for grp in 0..offsets.len() - 1 {
                        let (lo, hi) = (offsets[grp], offsets[grp + 1]);
                        let share = &g.row(grp) / (hi - lo) as f64;
                        for r in lo..hi {
                            ga.row_mut(r).assign(&share);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Reshape(a) => {
                    let dim = self.value(*a).dim();
                    let flat: Vec<f64> = g.iter().copied().collect();
                    acc(&mut grads, *a, Tensor::from_shape_vec(dim, flat).expect("reshape grad"));
                }
                Op::SumCols(a) => {
                    let dim = self.value(*a).dim();
                    let ga = g.broadcast(dim).expect("sum_cols grad").to_owned();
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Tensor::from_elem(self.value(*a).dim(), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let t = self.value(*a);
                    let ga = Tensor::from_elem(t.dim(), g[[0, 0]] / t.len() as f64);
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(a, idx) => {
                    let mut ga = Tensor::zeros(self.value(*a).dim());
                    for (i, &j) in idx.iter().enumerate() {
                        ga[[i, j]] = g[[i, 0]];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::MaskedLogSoftmax(a, mask) => {
                    let logp = &node.value;
                    let mut ga = Tensor::zeros(logp.dim());
                    for i in 0..logp.nrows() {
                        let total: f64 = (0..logp.ncols()).filter(|&j| mask[[i, j]]).map(|j| g[[i, j]]).sum();
                        for j in 0..logp.ncols() {
                            if mask[[i, j]] {
                                ga[[i, j]] = g[[i, j]] - logp[[i, j]].exp() * total;
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::MaskedEntropy(a, mask) => {
                    let z = self.value(*a);
                    let mut ga = Tensor::zeros(z.dim());
                    for (i, row) in z.outer_iter().enumerate() {
                        let lse = masked_logsumexp(row.iter().copied(), mask.row(i).iter().copied());
                        let h = node.value[[i, 0]];
                        for (j, &x) in row.iter().enumerate() {
                            if mask[[i, j]] {
                                let lp = x - lse;
                                ga[[i, j]] = -g[[i, 0]] * lp.exp() * (lp + h);
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
            }
        }
        out
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Sums `g` down to `dim` along broadcast axes.
fn reduce_to(g: &Tensor, dim: (usize, usize)) -> Tensor {
    let mut r = g.clone();
    if dim.0 == 1 && r.nrows() != 1 {
        r = r.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if dim.1 == 1 && r.ncols() != 1 {
        r = r.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    r
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn masked_logsumexp(values: impl Iterator<Item = f64> + Clone, mask: impl Iterator<Item = bool> + Clone) -> f64 {
    let max = values
        .clone()
        .zip(mask.clone())
        .filter(|(_, m)| *m)
        .map(|(x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max > f64::NEG_INFINITY, "masked_logsumexp: no valid entries");
    let sum: f64 = values.zip(mask).filter(|(_, m)| *m).map(|(x, _)| (x - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single_param(value: Tensor) -> (ParamSet, ParamId) {
        let mut p = ParamSet::new();
        let id = p.add("x", value);
        (p, id)
    }

    #[test]
    fn matmul_gradient_matches_hand_derivation() {
        let (p, id) = single_param(array![[1.0, 2.0], [3.0, 4.0]]);
        let mut t = Tape::new();
        let w = t.param(&p, id);
        let x = t.constant(array![[1.0, -1.0]]);
        let y = t.matmul(x, w);
        let l = t.sum(y);
        let g = t.backward(l, &p);
        // d/dW sum(x W) = x^T 1
        assert_eq!(g.get(id), &array![[1.0, 1.0], [-1.0, -1.0]]);
    }

    #[test]
    fn broadcast_add_reduces_gradient() {
        let (p, id) = single_param(array![[0.5, -0.5, 1.0]]);
        let mut t = Tape::new();
        let b = t.param(&p, id);
        let x = t.constant(Tensor::zeros((4, 3)));
        let y = t.add(x, b);
        let l = t.sum(y);
        let g = t.backward(l, &p);
        assert_eq!(g.get(id), &array![[4.0, 4.0, 4.0]]);
    }

    #[test]
    fn masked_log_softmax_zeroes_invalid() {
        let (p, id) = single_param(array![[0.3, 1.2, -0.7, 2.0]]);
        let mask = Rc::new(array![[true, false, true, false]]);
        let mut t = Tape::new();
        let z = t.param(&p, id);
        let lp = t.masked_log_softmax(z, mask.clone());
        let v = t.value(lp).clone();
        assert_eq!(v[[0, 1]], f64::NEG_INFINITY);
        let total: f64 = [0, 2].iter().map(|&j| v[[0, j]].exp()).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let pick = t.gather(lp, Rc::from(vec![2]));
        let l = t.sum(pick);
        let g = t.backward(l, &p);
        assert_eq!(g.get(id)[[0, 1]], 0.0);
        assert_eq!(g.get(id)[[0, 3]], 0.0);
    }

    #[test]
    fn segment_mean_and_repeat_are_adjoint() {
        let (p, id) = single_param(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let mut t = Tape::new();
        let a = t.param(&p, id);
        let m = t.segment_mean(a, Rc::from(vec![0, 1, 3]));
        assert_eq!(t.value(m), &array![[1.0, 2.0], [4.0, 5.0]]);
        let r = t.repeat_rows(m, Rc::from(vec![2, 1]));
        assert_eq!(t.value(r), &array![[1.0, 2.0], [1.0, 2.0], [4.0, 5.0]]);
        let l = t.sum(r);
        let g = t.backward(l, &p);
        assert_eq!(g.get(id), &array![[2.0, 2.0], [0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
