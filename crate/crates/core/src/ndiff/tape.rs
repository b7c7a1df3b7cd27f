use std::cell::Cell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::scalar::Real;

use super::{ParamId, ParamSet};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type Adjoint<T> = Box<dyn Fn(&Matrix<T>) -> Vec<Matrix<T>>>;

struct Node<T> {
    value: Matrix<T>,
    parents: Vec<usize>,
    /// Maps the upstream gradient to one gradient per parent.
    adjoint: Option<Adjoint<T>>,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// Records forward values and adjoint closures for one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    degenerate_rows: Cell<usize>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn finite<T: Real>(op: &'static str, m: Matrix<T>) -> Result<Matrix<T>> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite { op })
    }
}

/// Placeholder for the gradient of a parent that does not need one.
fn empty<T: Real>() -> Matrix<T> {
    Matrix::zeros(0, 0)
}

fn same_shape<T: Real>(op: &'static str, a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            degenerate_rows: Cell::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Zero rows seen by [`Tape::row_l2_normalize`] so far.
    pub fn degenerate_rows(&self) -> usize {
        self.degenerate_rows.get()
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix<T>, parents: &[Var], adjoint: Adjoint<T>) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            parents: parents.iter().map(|p| p.0).collect(),
            adjoint: requires_grad.then_some(adjoint),
            param: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            adjoint: None,
            param: None,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is accumulated into `params[id]` by [`Tape::backward`].
    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: params.value(id).clone(),
            parents: Vec::new(),
            adjoint: None,
            param: Some(id),
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Keeps a copy of `v` only if the other operand's gradient needs it.
    fn keep_for(&self, v: Var, other: Var) -> Option<Matrix<T>> {
        self.needs(other).then(|| self.value(v).clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = finite("matmul", self.value(a).matmul(self.value(b))?)?;
        let (av, bv) = (self.keep_for(a, b), self.keep_for(b, a));
        Ok(self.push(
            out,
            &[a, b],
            Box::new(move |g| {
                vec![
                    bv.as_ref()
                        .map_or_else(empty, |bv| g.matmul_nt(bv).expect("shape")),
                    av.as_ref()
                        .map_or_else(empty, |av| av.matmul_tn(g).expect("shape")),
                ]
            }),
        ))
    }

    /// `x · w` for a constant `x` shared with the caller, so repeated passes
    /// over the same data record no copy of it.
    pub fn matmul_shared(&mut self, x: Rc<Matrix<T>>, w: Var) -> Result<Var> {
        let out = finite("matmul", x.matmul(self.value(w))?)?;
        Ok(self.push(
            out,
            &[w],
            Box::new(move |g| vec![x.matmul_tn(g).expect("shape")]),
        ))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = finite("matmul_nt", self.value(a).matmul_nt(self.value(b))?)?;
        let (av, bv) = (self.keep_for(a, b), self.keep_for(b, a));
        Ok(self.push(
            out,
            &[a, b],
            Box::new(move |g| {
                vec![
                    bv.as_ref()
                        .map_or_else(empty, |bv| g.matmul(bv).expect("shape")),
                    av.as_ref()
                        .map_or_else(empty, |av| g.matmul_tn(av).expect("shape")),
                ]
            }),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = finite("add", self.value(a).add(self.value(b))?)?;
        Ok(self.push(out, &[a, b], Box::new(|g| vec![g.clone(), g.clone()])))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = finite("sub", self.value(a).sub(self.value(b))?)?;
        Ok(self.push(
            out,
            &[a, b],
            Box::new(|g| vec![g.clone(), g.scale(-T::one())]),
        ))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let out = finite("scale", self.value(a).scale(s))?;
        Ok(self.push(out, &[a], Box::new(move |g| vec![g.scale(s)])))
    }

    /// Scales each row to unit L2 norm. All-zero rows are returned unchanged
    /// (their gradient passes straight through) and counted in
    /// [`Tape::degenerate_rows`].
    pub fn row_l2_normalize(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a).clone();
        let mut norms = Vec::with_capacity(x.rows());
        let mut out = x.clone();
        for r in 0..x.rows() {
            let norm = dot(x.row(r), x.row(r)).sqrt();
            if norm == T::zero() {
                self.degenerate_rows.set(self.degenerate_rows.get() + 1);
            } else {
                out.row_mut(r).iter_mut().for_each(|v| *v /= norm);
            }
            norms.push(norm);
        }
        let out = finite("row_l2_normalize", out)?;
        let y = out.clone();
        Ok(self.push(
            out,
            &[a],
            Box::new(move |g| {
                let mut dx = g.clone();
                for r in 0..y.rows() {
                    let n = norms[r];
                    if n == T::zero() {
                        continue;
                    }
                    let proj = dot(g.row(r), y.row(r));
                    for ((d, &gv), &yv) in dx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *d = (gv - proj * yv) / n;
                    }
                }
                vec![dx]
            }),
        ))
    }

    /// Per-row standardization `(x − mean) / sqrt(var + eps)` with the
    /// population variance of the row.
    pub fn row_standardize(&mut self, a: Var, eps: T) -> Result<Var> {
        let x = self.value(a).clone();
        let c = x.cols();
        let cn = T::from_count(c.max(1));
        let mut out = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = out.row_mut(r);
            let mean = row.iter().copied().sum::<T>() / cn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
            let is = T::one() / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let out = finite("row_standardize", out)?;
        let y = out.clone();
        Ok(self.push(
            out,
            &[a],
            Box::new(move |g| {
                let mut dx = g.clone();
                for r in 0..y.rows() {
                    let gr = g.row(r);
                    let yr = y.row(r);
                    let g_mean = gr.iter().copied().sum::<T>() / cn;
                    let gy_mean = dot(gr, yr) / cn;
                    for ((d, &gv), &yv) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *d = inv_std[r] * (gv - g_mean - yv * gy_mean);
                    }
                }
                vec![dx]
            }),
        ))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a).clone();
        let out = x.map(|v| v.max(T::zero()));
        Ok(self.push(
            out,
            &[a],
            Box::new(move |g| {
                let mut dx = g.clone();
                for (d, &xv) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if xv <= T::zero() {
                        *d = T::zero();
                    }
                }
                vec![dx]
            }),
        ))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.iter_mut().for_each(|v| *v = (*v - max).exp());
            let s: T = row.iter().copied().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let out = finite("softmax_rows", out)?;
        let y = out.clone();
        Ok(self.push(
            out,
            &[a],
            Box::new(move |g| {
                let mut dx = g.clone();
                for r in 0..y.rows() {
                    let s = dot(g.row(r), y.row(r));
                    for ((d, &gv), &yv) in dx.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *d = yv * (gv - s);
                    }
                }
                vec![dx]
            }),
        ))
    }

    /// Row-wise concatenation: output row `i` is row `i` of `a` followed by row `i` of `b`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::dim(
                "concat_rows",
                format!("{} rows vs {} rows", av.rows(), bv.rows()),
            ));
        }
        let (ca, cb) = (av.cols(), bv.cols());
        let out = Matrix::from_fn(av.rows(), ca + cb, |r, c| {
            if c < ca {
                av[(r, c)]
            } else {
                bv[(r, c - ca)]
            }
        });
        Ok(self.push(
            out,
            &[a, b],
            Box::new(move |g| {
                vec![
                    Matrix::from_fn(g.rows(), ca, |r, c| g[(r, c)]),
                    Matrix::from_fn(g.rows(), cb, |r, c| g[(r, c + ca)]),
                ]
            }),
        ))
    }

    /// Column-wise mean over rows, giving a `1 × cols` matrix.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rows() == 0 {
            return Err(Error::dim("mean_rows", "no rows"));
        }
        let rows = x.rows();
        let out = x.mean_rows();
        let inv = T::one() / T::from_count(rows);
        Ok(self.push(
            out,
            &[a],
            Box::new(move |g| vec![Matrix::from_fn(rows, g.cols(), |_, c| g[(0, c)] * inv)]),
        ))
    }

    /// Column-wise means over consecutive row blocks of the given lengths,
    /// one output row per block.
    pub fn segment_mean_rows(&mut self, a: Var, lens: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if lens.contains(&0) || lens.iter().sum::<usize>() != x.rows() {
            return Err(Error::dim(
                "segment_mean_rows",
                format!("segments {lens:?} over {} rows", x.rows()),
            ));
        }
        let cols = x.cols();
        let mut out = Matrix::zeros(lens.len(), cols);
        let mut start = 0;
        for (s, &len) in lens.iter().enumerate() {
            let inv = T::one() / T::from_count(len);
            let o = out.row_mut(s);
            for r in start..start + len {
                for (acc, &v) in o.iter_mut().zip(x.row(r)) {
                    *acc += v;
                }
            }
            o.iter_mut().for_each(|v| *v *= inv);
            start += len;
        }
        let lens = lens.to_vec();
        let rows = start;
        Ok(self.push(
            out,
            &[a],
            Box::new(move |g| {
                let mut dx = Matrix::zeros(rows, cols);
                let mut r = 0;
                for (s, &len) in lens.iter().enumerate() {
                    let inv = T::one() / T::from_count(len);
                    for _ in 0..len {
                        for (d, &gv) in dx.row_mut(r).iter_mut().zip(g.row(s)) {
                            *d = gv * inv;
                        }
                        r += 1;
                    }
                }
                vec![dx]
            }),
        ))
    }

    /// Sum of all entries as a 1x1 matrix.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.shape();
        let out = Matrix::scalar(x.as_slice().iter().copied().sum());
        let out = finite("sum", out)?;
        Ok(self.push(
            out,
            &[a],
            Box::new(move |g| vec![Matrix::filled(r, c, g.item())]),
        ))
    }

    /// Picks the listed `(row, col)` entries into a `1 × m` matrix.
    pub fn gather(&mut self, a: Var, positions: &[(usize, usize)]) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.shape();
        if let Some(&(pr, pc)) = positions.iter().find(|&&(pr, pc)| pr >= r || pc >= c) {
            return Err(Error::dim(
                "gather",
                format!("({pr}, {pc}) outside {r}x{c}"),
            ));
        }
        let out = Matrix::from_fn(1, positions.len(), |_, k| x[positions[k]]);
        let positions = positions.to_vec();
        Ok(self.push(
            out,
            &[a],
            Box::new(move |g| {
                let mut dx = Matrix::zeros(r, c);
                for (k, &p) in positions.iter().enumerate() {
                    dx[p] += g[(0, k)];
                }
                vec![dx]
            }),
        ))
    }

    /// Mean squared error `mean_k (target_k − a_k)²` against a constant
    /// target with the same shape as `a`.
    pub fn mse_to(&mut self, a: Var, target: &Matrix<T>) -> Result<Var> {
        let x = self.value(a).clone();
        same_shape("mse_to", &x, target)?;
        let count = x.as_slice().len();
        if count == 0 {
            return Err(Error::dim("mse_to", "empty input"));
        }
        let n = T::from_count(count);
        let resid = x.sub(target)?;
        let loss = resid.as_slice().iter().map(|&r| r * r).sum::<T>() / n;
        let out = finite("mse_to", Matrix::scalar(loss))?;
        Ok(self.push(
            out,
            &[a],
            Box::new(move |g| {
                let s = g.item() * T::lit(2.0) / n;
                vec![resid.scale(s)]
            }),
        ))
    }

    /// Two-view infoNCE over unit-norm view rows.
    ///
    /// For anchor row `i` of one view, the positive is row `i` of the other
    /// view and the negatives are every other row of both views. The loss is
    /// the mean over all `2N` anchors of `−log(exp(pos) / Σ exp(·))` with
    /// similarities divided by `temperature`.
    pub fn info_nce(&mut self, v1: Var, v2: Var, temperature: T) -> Result<Var> {
        let (a, b) = (self.value(v1).clone(), self.value(v2).clone());
        same_shape("info_nce", &a, &b)?;
        let n = a.rows();
        if n == 0 {
            return Err(Error::dim("info_nce", "no rows"));
        }
        let inv_t = T::one() / temperature;
        let s_ab = a.matmul_nt(&b)?.scale(inv_t);
        let s_aa = a.matmul_nt(&a)?.scale(inv_t);
        let s_bb = b.matmul_nt(&b)?.scale(inv_t);

        // d loss / d similarity, filled while computing the forward value.
        // View 2 anchors read the cross block transposed.
        let s_ba = s_ab.transpose();
        let mut g_cross = [Matrix::<T>::zeros(n, n), Matrix::<T>::zeros(n, n)];
        let mut g_same = [Matrix::<T>::zeros(n, n), Matrix::<T>::zeros(n, n)];
        let w = T::one() / T::from_count(2 * n);
        let mut total = T::zero();
        let mut ex = vec![T::zero(); 2 * n];
        for (view, (cross, same)) in [(&s_ab, &s_aa), (&s_ba, &s_bb)].into_iter().enumerate() {
            for i in 0..n {
                let (cr, sr) = (cross.row(i), same.row(i));
                let mut max = T::neg_infinity();
                for k in 0..n {
                    max = max.max(cr[k]);
                    if k != i {
                        max = max.max(sr[k]);
                    }
                }
                let (ec, es) = ex.split_at_mut(n);
                for k in 0..n {
                    ec[k] = (cr[k] - max).exp();
                    es[k] = if k == i {
                        T::zero()
                    } else {
                        (sr[k] - max).exp()
                    };
                }
                let denom = ex.iter().fold(T::zero(), |acc, &v| acc + v);
                total += -(cr[i] - max) + denom.ln();
                let scale = w / denom;
                for (g, &e) in g_cross[view].row_mut(i).iter_mut().zip(&ex[..n]) {
                    *g = e * scale;
                }
                g_cross[view].row_mut(i)[i] -= w;
                for (g, &e) in g_same[view].row_mut(i).iter_mut().zip(&ex[n..]) {
                    *g = e * scale;
                }
            }
        }
        let [g_same_a, g_same_b] = g_same;
        let g_aa = g_same_a;
        let g_bb = g_same_b;
        let g_ab = g_cross[0].add(&g_cross[1].transpose())?;
        let out = finite("info_nce", Matrix::scalar(total * w))?;
        Ok(self.push(
            out,
            &[v1, v2],
            Box::new(move |g| {
                let s = g.item() * inv_t;
                let sym_aa = g_aa.add(&g_aa.transpose()).expect("square");
                let sym_bb = g_bb.add(&g_bb.transpose()).expect("square");
                let da = g_ab
                    .matmul(&b)
                    .and_then(|m| m.add(&sym_aa.matmul(&a)?))
                    .expect("shape")
                    .scale(s);
                let db = g_ab
                    .matmul_tn(&a)
                    .and_then(|m| m.add(&sym_bb.matmul(&b)?))
                    .expect("shape")
                    .scale(s);
                vec![da, db]
            }),
        ))
    }

    /// Student-t (one degree of freedom) soft assignment of rows of `z` to
    /// rows of `centers`: `G_ij ∝ (1 + ‖z_i − c_j‖²)^{-1}`, rows normalized.
    pub fn student_t(&mut self, z: Var, centers: Var) -> Result<Var> {
        let (zv, cv) = (self.value(z).clone(), self.value(centers).clone());
        if zv.cols() != cv.cols() || cv.rows() == 0 {
            return Err(Error::dim(
                "student_t",
                format!("points {:?}, centers {:?}", zv.shape(), cv.shape()),
            ));
        }
        let (n, k) = (zv.rows(), cv.rows());
        let mut kernel = Matrix::<T>::zeros(n, k);
        for i in 0..n {
            for j in 0..k {
                kernel[(i, j)] =
                    T::one() / (T::one() + crate::matrix::sq_dist(zv.row(i), cv.row(j)));
            }
        }
        let row_sums: Vec<T> = kernel.row_iter().map(|r| r.iter().copied().sum()).collect();
        let out = Matrix::from_fn(n, k, |i, j| kernel[(i, j)] / row_sums[i]);
        let out = finite("student_t", out)?;
        let gv = out.clone();
        let need_z = self.needs(z);
        let need_c = self.needs(centers);
        Ok(self.push(
            out,
            &[z, centers],
            Box::new(move |g| {
                let d = zv.cols();
                let mut dz = Matrix::zeros(n, d);
                let mut dc = Matrix::zeros(k, d);
                for i in 0..n {
                    let proj = dot(g.row(i), gv.row(i));
                    for j in 0..k {
                        let dq = (g[(i, j)] - proj) / row_sums[i];
                        let q = kernel[(i, j)];
                        // d q / d ‖z_i − c_j‖² = −q²
                        let dd = -dq * q * q;
                        let two = T::lit(2.0);
                        for c in 0..d {
                            let diff = zv[(i, c)] - cv[(j, c)];
                            if need_z {
                                dz[(i, c)] += two * dd * diff;
                            }
                            if need_c {
                                dc[(j, c)] -= two * dd * diff;
                            }
                        }
                    }
                }
                vec![dz, dc]
            }),
        ))
    }

    /// `Σ g log(g / h)` for a fixed target `h`, with `0 · log(0 / h) = 0`.
    pub fn kl_to_fixed(&mut self, g: Var, target: &Matrix<T>) -> Result<Var> {
        let gv = self.value(g).clone();
        same_shape("kl_to_fixed", &gv, target)?;
        let mut total = T::zero();
        let mut dg = Matrix::zeros(gv.rows(), gv.cols());
        for ((&p, &q), d) in gv
            .as_slice()
            .iter()
            .zip(target.as_slice())
            .zip(dg.as_mut_slice())
        {
            if p <= T::zero() {
                continue;
            }
            if q <= T::zero() {
                return Err(Error::Divergence { value: p.as_f64() });
            }
            let l = (p / q).ln();
            total += p * l;
            *d = l + T::one();
        }
        let out = finite("kl_to_fixed", Matrix::scalar(total))?;
        Ok(self.push(out, &[g], Box::new(move |up| vec![dg.scale(up.item())])))
    }

    /// Propagates d`loss` (a 1x1 node) back through the tape and adds the
    /// resulting gradients into `params`.
    pub fn backward(&self, loss: Var, params: &mut ParamSet<T>) -> Result<()> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::dim(
                "backward",
                format!("loss shape {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Some(id) = node.param {
                params.accumulate(id, &g);
            }
            let Some(adjoint) = &node.adjoint else {
                continue;
            };
            let parent_grads = adjoint(&g);
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                if !self.nodes[p].requires_grad {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }
}
