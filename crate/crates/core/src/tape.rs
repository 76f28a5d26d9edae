//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of a forward pass together with the
//! values it produced. [`Tape::backward`] walks the records in reverse,
//! accumulating vector-Jacobian products into one gradient per node.
//! Operations are coarse (matrix multiply, layer norm, block attention, ...)
//! so a forward pass of the point transformer is a few hundred nodes.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Mat, Scalar};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Index lists in compressed form: group `g` is
/// `members[offsets[g]..offsets[g + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Groups {
    offsets: Vec<usize>,
    members: Vec<usize>,
}

impl Groups {
    pub fn new() -> Self {
        Self { offsets: vec![0], members: Vec::new() }
    }

    pub fn from_lists<I, L>(lists: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: AsRef<[usize]>,
    {
        let mut g = Self::new();
        for l in lists {
            g.push(l.as_ref());
        }
        g
    }

    pub fn push(&mut self, members: &[usize]) {
        self.members.extend_from_slice(members);
        self.offsets.push(self.members.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.members[self.offsets[g]..self.offsets[g + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.len()).map(move |g| self.group(g))
    }
}

/// Sequence layout for block attention: `order[k]` is the row at sequence
/// position `k`, and attention is restricted to each `(start, end)` block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub order: Vec<usize>,
    pub blocks: Vec<(usize, usize)>,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Mat<T>, rstd: Vec<T> },
    Gather { x: Var, idx: Vec<usize> },
    GroupMean { x: Var, groups: Groups },
    Attention { q: Var, k: Var, v: Var, heads: usize, layout: BlockLayout, probs: Vec<T> },
}

struct Node<T> {
    value: Mat<T>,
    op: Op<T>,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let u = T::lit(GELU_C) * (x + T::lit(GELU_A) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

#[inline]
fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let th = (c * (x + a * x * x * x)).tanh();
    let half = T::lit(0.5);
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::lit(3.0) * a * x * x)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Input or parameter.
    pub fn leaf(&mut self, value: Mat<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `x + 1·b` for a `1 x m` row `b`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.rows(), 1, "add_row expects a row vector");
        let mut out = self.value(x).clone();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(bias.row(0)) {
                *o = *o + b;
            }
        }
        self.push(out, Op::AddRow(x, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape");
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let out = Mat::from_vec(x.rows(), x.cols(), data).expect("same shape");
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale(x, s))
    }

    /// Sum of all entries as a `1 x 1` matrix.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Mat::from_vec(1, 1, vec![s]).expect("1x1"), Op::Sum(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu);
        self.push(out, Op::Gelu(x))
    }

    /// Row-wise normalization with learned `1 x m` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.shape();
        let (g, b) = (self.value(gamma).row(0), self.value(beta).row(0));
        let mut xhat = Mat::zeros(n, m);
        let mut out = Mat::zeros(n, m);
        let mut rstd = Vec::with_capacity(n);
        let inv_m = T::one() / T::lit(m as f64);
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.iter().copied().sum::<T>() * inv_m;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_m;
            let r = T::one() / (var + T::lit(LAYER_NORM_EPS)).sqrt();
            rstd.push(r);
            for j in 0..m {
                let h = (row[j] - mean) * r;
                xhat.set(i, j, h);
                out.set(i, j, h * g[j] + b[j]);
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, rstd })
    }

    /// Row `i` of the result is row `idx[i]` of `x`.
    pub fn gather(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let out = self.value(x).gather_rows(&idx);
        self.push(out, Op::Gather { x, idx })
    }

    /// Row `g` of the result is the mean of the rows of `x` in group `g`;
    /// empty groups give zero rows.
    pub fn group_mean(&mut self, x: Var, groups: Groups) -> Var {
        let xv = self.value(x);
        let m = xv.cols();
        let mut out = Mat::zeros(groups.len(), m);
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let o = out.row_mut(g);
            for &r in members {
                for (o, &v) in o.iter_mut().zip(xv.row(r)) {
                    *o = *o + v;
                }
            }
            let inv = T::one() / T::lit(members.len() as f64);
            for o in o.iter_mut() {
                *o = *o * inv;
            }
        }
        self.push(out, Op::GroupMean { x, groups })
    }

    /// Multi-head scaled dot-product attention computed independently inside
    /// every block of `layout`. Rows keep their original positions.
    pub fn block_attention(&mut self, q: Var, k: Var, v: Var, heads: usize, layout: BlockLayout) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, w) = qv.shape();
        assert!(heads > 0 && w % heads == 0, "width divisible by heads");
        assert_eq!(kv.shape(), (n, w));
        assert_eq!(vv.shape(), (n, w));
        let dh = w / heads;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let mut out = Mat::zeros(n, w);
        let mut probs = Vec::new();
        for &(s, e) in &layout.blocks {
            let idx = &layout.order[s..e];
            let l = idx.len();
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let base = probs.len();
                probs.resize(base + l * l, T::zero());
                let p = &mut probs[base..];
                for a in 0..l {
                    let qa = &qv.row(idx[a])[cols.clone()];
                    let row = &mut p[a * l..(a + 1) * l];
                    let mut max = T::neg_infinity();
                    for b in 0..l {
                        let s = crate::mat::dot(qa, &kv.row(idx[b])[cols.clone()]) * scale;
                        row[b] = s;
                        max = max.max(s);
                    }
                    let mut z = T::zero();
                    for r in row.iter_mut() {
                        *r = (*r - max).exp();
                        z = z + *r;
                    }
                    for r in row.iter_mut() {
                        *r = *r / z;
                    }
                    let o = &mut out.row_mut(idx[a])[cols.clone()];
                    for b in 0..l {
                        let pb = row[b];
                        for (o, &x) in o.iter_mut().zip(&vv.row(idx[b])[cols.clone()]) {
                            *o = *o + pb * x;
                        }
                    }
                }
            }
        }
        self.push(out, Op::Attention { q, k, v, heads, layout, probs })
    }

    /// Reverse pass seeded with `∂L/∂v` for each `(v, seed)`.
    pub fn backward(&self, seeds: &[(Var, Mat<T>)]) -> Gradients<T> {
        let mut grads: Vec<Option<Mat<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (v, g) in seeds {
            assert_eq!(g.shape(), self.value(*v).shape(), "seed shape");
            accumulate(&mut grads, *v, g.clone());
            last = last.max(v.0);
        }
        for id in (0..=last).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.node_backward(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    fn node_backward(&self, id: usize, g: &Mat<T>, grads: &mut [Option<Mat<T>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul_t(bv));
                accumulate(grads, *b, av.t_matmul(g));
            }
            Op::AddRow(x, b) => {
                accumulate(grads, *x, g.clone());
                let mut db = Mat::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (d, &v) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                        *d = *d + v;
                    }
                }
                accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let da = zip_map(g, bv, |x, y| x * y);
                let db = zip_map(g, av, |x, y| x * y);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Scale(x, s) => accumulate(grads, *x, g.map(|v| v * *s)),
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                let s = g.get(0, 0);
                accumulate(grads, *x, Mat::from_vec(r, c, vec![s; r * c]).expect("shape"));
            }
            Op::Gelu(x) => {
                let dx = zip_map(g, self.value(*x), |gv, xv| gv * gelu_grad(xv));
                accumulate(grads, *x, dx);
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let (n, m) = xhat.shape();
                let gm = self.value(*gamma).row(0);
                let mut dgamma = Mat::zeros(1, m);
                let mut dbeta = Mat::zeros(1, m);
                let mut dx = Mat::zeros(n, m);
                let inv_m = T::one() / T::lit(m as f64);
                let mut dxhat = vec![T::zero(); m];
                for i in 0..n {
                    let (gi, hi) = (g.row(i), xhat.row(i));
                    let mut mean_d = T::zero();
                    let mut mean_dh = T::zero();
                    for j in 0..m {
                        dgamma.row_mut(0)[j] = dgamma.row_mut(0)[j] + gi[j] * hi[j];
                        dbeta.row_mut(0)[j] = dbeta.row_mut(0)[j] + gi[j];
                        dxhat[j] = gi[j] * gm[j];
                        mean_d = mean_d + dxhat[j];
                        mean_dh = mean_dh + dxhat[j] * hi[j];
                    }
                    mean_d = mean_d * inv_m;
                    mean_dh = mean_dh * inv_m;
                    let out = dx.row_mut(i);
                    for j in 0..m {
                        out[j] = rstd[i] * (dxhat[j] - mean_d - hi[j] * mean_dh);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, dgamma);
                accumulate(grads, *beta, dbeta);
            }
            Op::Gather { x, idx } => {
                let (r, c) = self.value(*x).shape();
                let mut dx = Mat::zeros(r, c);
                for (i, &src) in idx.iter().enumerate() {
                    for (d, &v) in dx.row_mut(src).iter_mut().zip(g.row(i)) {
                        *d = *d + v;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::GroupMean { x, groups } => {
                let (r, c) = self.value(*x).shape();
                let mut dx = Mat::zeros(r, c);
                for (gi, members) in groups.iter().enumerate() {
                    if members.is_empty() {
                        continue;
                    }
                    let inv = T::one() / T::lit(members.len() as f64);
                    for &m in members {
                        for (d, &v) in dx.row_mut(m).iter_mut().zip(g.row(gi)) {
                            *d = *d + v * inv;
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Attention { q, k, v, heads, layout, probs } => {
                let (dq, dk, dv) = self.attention_backward(*q, *k, *v, *heads, layout, probs, g);
                accumulate(grads, *q, dq);
                accumulate(grads, *k, dk);
                accumulate(grads, *v, dv);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        layout: &BlockLayout,
        probs: &[T],
        g: &Mat<T>,
    ) -> (Mat<T>, Mat<T>, Mat<T>) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, w) = qv.shape();
        let dh = w / heads;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let mut dq = Mat::zeros(n, w);
        let mut dk = Mat::zeros(n, w);
        let mut dv = Mat::zeros(n, w);
        let mut base = 0;
        let mut ds = Vec::new();
        for &(s, e) in &layout.blocks {
            let idx = &layout.order[s..e];
            let l = idx.len();
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let p = &probs[base..base + l * l];
                base += l * l;
                ds.clear();
                ds.resize(l * l, T::zero());
                for a in 0..l {
                    let ga = &g.row(idx[a])[cols.clone()];
                    let prow = &p[a * l..(a + 1) * l];
                    let drow = &mut ds[a * l..(a + 1) * l];
                    let mut acc = T::zero();
                    for b in 0..l {
                        let dp = crate::mat::dot(ga, &vv.row(idx[b])[cols.clone()]);
                        drow[b] = dp;
                        acc = acc + dp * prow[b];
                        let pb = prow[b];
                        for (d, &x) in dv.row_mut(idx[b])[cols.clone()].iter_mut().zip(ga) {
                            *d = *d + pb * x;
                        }
                    }
                    for b in 0..l {
                        drow[b] = prow[b] * (drow[b] - acc) * scale;
                    }
                }
                for a in 0..l {
                    for b in 0..l {
                        let d = ds[a * l + b];
                        if d == T::zero() {
                            continue;
                        }
                        for c in cols.clone() {
                            let (ia, ib) = (idx[a], idx[b]);
                            let kb = kv.get(ib, c);
                            let qa = qv.get(ia, c);
                            dq.row_mut(ia)[c] = dq.row_mut(ia)[c] + d * kb;
                            dk.row_mut(ib)[c] = dk.row_mut(ib)[c] + d * qa;
                        }
                    }
                }
            }
        }
        (dq, dk, dv)
    }
}

fn zip_map<T: Scalar>(a: &Mat<T>, b: &Mat<T>, f: impl Fn(T, T) -> T) -> Mat<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Mat::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn accumulate<T: Scalar>(grads: &mut [Option<Mat<T>>], v: Var, g: Mat<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Mat<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of `v`, or `None` when the seeds do not depend on it.
    pub fn get(&self, v: Var) -> Option<&Mat<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zero-filled when the seeds do not depend on it.
    pub fn get_or_zero(&self, v: Var, shape: (usize, usize)) -> Mat<T> {
        self.get(v).cloned().unwrap_or_else(|| Mat::zeros(shape.0, shape.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng as _;

    fn rand_mat(r: usize, c: usize, seed: u64) -> Mat<f64> {
        let mut rng = stream(seed, &[]);
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Checks d(sum(out ⊙ w))/d(inputs) against central differences.
    fn check(inputs: &[Mat<f64>], build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
        let run = |vals: &[Mat<f64>]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = vals.iter().map(|m| t.leaf(m.clone())).collect();
            let out = build(&mut t, &vars);
            (t, vars, out)
        };
        let (tape, vars, out) = run(inputs);
        let (r, c) = tape.value(out).shape();
        let weights = rand_mat(r, c, 99);
        let objective = |vals: &[Mat<f64>]| {
            let (t, _, o) = run(vals);
            crate::mat::dot(t.value(o).data(), weights.data())
        };
        let grads = tape.backward(&[(out, weights.clone())]);
        let h = 1e-6;
        for (which, v) in vars.iter().enumerate() {
            let analytic = grads.get_or_zero(*v, inputs[which].shape());
            for e in 0..inputs[which].data().len() {
                let mut plus = inputs.to_vec();
                plus[which].data_mut()[e] += h;
                let mut minus = inputs.to_vec();
                minus[which].data_mut()[e] -= h;
                let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let a = analytic.data()[e];
                let denom = a.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (a - numeric).abs() / denom < 1e-5,
                    "input {which} entry {e}: analytic {a} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn quadratic_loss_gradient_is_w() {
        let w = rand_mat(3, 2, 1);
        let mut t = Tape::new();
        let wv = t.leaf(w.clone());
        let sq = t.mul(wv, wv);
        let s = t.sum(sq);
        let loss = t.scale(s, 0.5);
        let g = t.backward(&[(loss, Mat::from_vec(1, 1, vec![1.0]).unwrap())]);
        assert_eq!(g.get(wv).unwrap(), &w);
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut t = Tape::new();
        let a = t.leaf(rand_mat(2, 2, 1));
        let b = t.leaf(rand_mat(2, 2, 2));
        let s = t.sum(a);
        let g = t.backward(&[(s, Mat::from_vec(1, 1, vec![1.0]).unwrap())]);
        assert!(g.get(b).is_none());
        assert_eq!(g.get_or_zero(b, (2, 2)), Mat::zeros(2, 2));
    }

    #[test]
    fn linear_and_gelu_gradients() {
        check(&[rand_mat(4, 3, 1), rand_mat(3, 5, 2), rand_mat(1, 5, 3)], |t, v| {
            let y = t.matmul(v[0], v[1]);
            let y = t.add_row(y, v[2]);
            t.gelu(y)
        });
    }

    #[test]
    fn layer_norm_gradients() {
        check(&[rand_mat(5, 6, 4), rand_mat(1, 6, 5), rand_mat(1, 6, 6)], |t, v| {
            t.layer_norm(v[0], v[1], v[2])
        });
    }

    #[test]
    fn gather_and_group_mean_gradients() {
        check(&[rand_mat(6, 3, 7)], |t, v| {
            let g = t.gather(v[0], vec![5, 0, 0, 2]);
            let m = t.group_mean(v[0], Groups::from_lists([vec![0, 1], vec![2], vec![3, 4, 5]]));
            let s = t.scale(m, 2.0);
            let a = t.gather(s, vec![0, 1, 2, 0]);
            t.add(g, a)
        });
    }

    #[test]
    fn attention_gradients() {
        let layout = BlockLayout { order: vec![3, 0, 5, 1, 4, 2, 6], blocks: vec![(0, 4), (4, 7)] };
        check(&[rand_mat(7, 4, 8), rand_mat(7, 4, 9), rand_mat(7, 4, 10)], |t, v| {
            t.block_attention(v[0], v[1], v[2], 2, layout.clone())
        });
    }

    fn reference_attention(q: &Mat<f64>, k: &Mat<f64>, v: &Mat<f64>) -> Mat<f64> {
        let n = q.rows();
        let d = q.cols();
        let mut out = Mat::zeros(n, d);
        for a in 0..n {
            let mut s = vec![0.0; n];
            for b in 0..n {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += q.get(a, c) * k.get(b, c);
                }
                s[b] = acc / (d as f64).sqrt();
            }
            let z: f64 = s.iter().map(|x| x.exp()).sum();
            for b in 0..n {
                let p = s[b].exp() / z;
                for c in 0..d {
                    out.set(a, c, out.get(a, c) + p * v.get(b, c));
                }
            }
        }
        out
    }

    #[test]
    fn attention_matches_scalar_reference() {
        let (q, k, v) = (rand_mat(4, 3, 11), rand_mat(4, 3, 12), rand_mat(4, 3, 13));
        let mut t = Tape::new();
        let (qv, kv, vv) = (t.leaf(q.clone()), t.leaf(k.clone()), t.leaf(v.clone()));
        let layout = BlockLayout { order: vec![0, 1, 2, 3], blocks: vec![(0, 4)] };
        let o = t.block_attention(qv, kv, vv, 1, layout);
        let r = reference_attention(&q, &k, &v);
        for (a, b) in t.value(o).data().iter().zip(r.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_row_block_returns_its_value() {
        let (q, k, v) = (rand_mat(3, 4, 1), rand_mat(3, 4, 2), rand_mat(3, 4, 3));
        let mut t = Tape::new();
        let (qv, kv, vv) = (t.leaf(q), t.leaf(k), t.leaf(v.clone()));
        let layout = BlockLayout { order: vec![2, 0, 1], blocks: vec![(0, 1), (1, 2), (2, 3)] };
        let o = t.block_attention(qv, kv, vv, 2, layout);
        for (a, b) in t.value(o).data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
