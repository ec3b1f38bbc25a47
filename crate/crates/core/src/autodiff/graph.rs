//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only list of nodes. Every forward operation pushes
//! one node holding its value; [`Graph::backward`] walks the list in exact
//! reverse insertion order, so gradients are bit-reproducible for fixed
//! inputs. Parameters are borrowed, never copied, which keeps a graph cheap to
//! build per training step.

use std::borrow::Cow;

use super::tensor::{gemm, softmax_slice, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    SoftmaxRows(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    /// `-log softmax(a)[target]` for a single row.
    NllAt(Var, usize),
    /// Elementwise product with a constant mask.
    Mask(Var, Vec<f64>),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
}

pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    param_shapes: Vec<Vec<usize>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), param_shapes: Vec::new() }
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

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.value(v).dims2()
    }

    /// Registers a trainable leaf. Gradients come back from
    /// [`backward`](Self::backward) in registration order.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        let id = self.param_shapes.len();
        self.param_shapes.push(t.shape().to_vec());
        self.push(Cow::Borrowed(t), Op::Param(id))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Constant)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Constant)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Cow::Owned(out), Op::MatMul(a, b)))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul_nt: {:?} x {:?}^T inner dimensions differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), (k, 1), self.value(b).data(), (1, k), &mut out, false);
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(Cow::Owned(t), Op::MatMulNT(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let src = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let t = Tensor::matrix(n, m, out)?;
        Ok(self.push(Cow::Owned(t), Op::Transpose(a)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let t = self.value(a).with_same_shape(data);
        Ok(self.push(Cow::Owned(t), Op::Add(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let (r, n2) = self.dims(row);
        if r != 1 || n != n2 {
            return Err(Error::dim(format!(
                "add_row: cannot broadcast {:?} over {:?}",
                self.value(row).shape(),
                self.value(a).shape()
            )));
        }
        let bias = self.value(row).data();
        let mut data = self.value(a).data().to_vec();
        for i in 0..m {
            for (x, b) in data[i * n..(i + 1) * n].iter_mut().zip(bias) {
                *x += b;
            }
        }
        let t = self.value(a).with_same_shape(data);
        Ok(self.push(Cow::Owned(t), Op::AddRow(a, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let t = self.value(a).with_same_shape(data);
        Ok(self.push(Cow::Owned(t), Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let data = self.value(a).data().iter().map(|x| x * c).collect();
        let t = self.value(a).with_same_shape(data);
        self.push(Cow::Owned(t), Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|x| x.tanh()).collect();
        let t = self.value(a).with_same_shape(data);
        self.push(Cow::Owned(t), Op::Tanh(a))
    }

    /// Softmax applied independently to every row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            data.extend(softmax_slice(&src[i * n..(i + 1) * n]));
        }
        let t = self.value(a).with_same_shape(data);
        self.push(Cow::Owned(t), Op::SoftmaxRows(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if width == 0 || start + width > n {
            return Err(Error::dim(format!(
                "slice_cols: [{start}, {}) out of {n} columns",
                start + width
            )));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(m * width);
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + start + width]);
        }
        let t = Tensor::matrix(m, width, data)?;
        Ok(self.push(Cow::Owned(t), Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = match parts.first() {
            Some(&p) => self.dims(p).0,
            None => return Err(Error::dim("concat_cols: no inputs")),
        };
        if parts.iter().any(|&p| self.dims(p).0 != m) {
            return Err(Error::dim("concat_cols: row counts differ"));
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let t = Tensor::matrix(m, total, data)?;
        Ok(self.push(Cow::Owned(t), Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks `1 x n` rows into an `m x n` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let n = match rows.first() {
            Some(&r) => self.value(r).len(),
            None => return Err(Error::dim("stack_rows: no inputs")),
        };
        if rows.iter().any(|&r| self.dims(r) != (1, n)) {
            return Err(Error::dim("stack_rows: every input must be a 1 x n row"));
        }
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            data.extend_from_slice(self.value(r).data());
        }
        let t = Tensor::matrix(rows.len(), n, data)?;
        Ok(self.push(Cow::Owned(t), Op::StackRows(rows.to_vec())))
    }

    /// Row lookup, as used by embedding tables.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(table);
        if indices.is_empty() {
            return Err(Error::dim("gather_rows: no indices"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::dim(format!("gather_rows: index {bad} out of {m} rows")));
        }
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.value(table).row(i));
        }
        let t = Tensor::matrix(indices.len(), n, data)?;
        Ok(self.push(Cow::Owned(t), Op::GatherRows(table, indices.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Cow::Owned(Tensor::scalar(s)), Op::Sum(a))
    }

    /// Cross-entropy of a single row of logits against class `target`.
    pub fn nll_at(&mut self, logits: Var, target: usize) -> Result<Var> {
        let (m, n) = self.dims(logits);
        if m != 1 || target >= n {
            return Err(Error::dim(format!(
                "nll_at: target {target} for logits {:?}",
                self.value(logits).shape()
            )));
        }
        let x = self.value(logits).data();
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - x[target];
        Ok(self.push(Cow::Owned(Tensor::scalar(loss)), Op::NllAt(logits, target)))
    }

    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(a).len() {
            return Err(Error::dim("mask: length differs from input"));
        }
        let data = zip_map(self.value(a).data(), &mask, |x, m| x * m);
        let t = self.value(a).with_same_shape(data);
        Ok(self.push(Cow::Owned(t), Op::Mask(a, mask)))
    }

    /// Sum of several nodes of identical shape.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::dim("add_all: no terms"))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// Gradient of the scalar `loss` with respect to every registered
    /// parameter, in registration order. Parameters the loss does not depend
    /// on get an all-zero tensor.
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor>> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut param_grads: Vec<Tensor> =
            self.param_shapes.iter().map(|s| Tensor::zeros(s)).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    for (d, s) in param_grads[*p].data_mut().iter_mut().zip(&g) {
                        *d += s;
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.dims(*a);
                    let (_, n) = self.dims(*b);
                    let bv = self.value(*b).data();
                    self.accumulate(&mut grads, *a, |da| {
                        gemm(m, n, k, &g, (n, 1), bv, (1, n), da, true)
                    });
                    let av = self.value(*a).data();
                    self.accumulate(&mut grads, *b, |db| {
                        gemm(k, m, n, av, (1, k), &g, (n, 1), db, true)
                    });
                }
                Op::MatMulNT(a, b) => {
                    let (m, k) = self.dims(*a);
                    let (n, _) = self.dims(*b);
                    let bv = self.value(*b).data();
                    self.accumulate(&mut grads, *a, |da| {
                        gemm(m, n, k, &g, (n, 1), bv, (k, 1), da, true)
                    });
                    let av = self.value(*a).data();
                    self.accumulate(&mut grads, *b, |db| {
                        gemm(n, m, k, &g, (1, n), av, (k, 1), db, true)
                    });
                }
                Op::Transpose(a) => {
                    let (m, n) = self.dims(*a);
                    self.accumulate(&mut grads, *a, |da| {
                        for r in 0..m {
                            for c in 0..n {
                                da[r * n + c] += g[c * m + r];
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, |da| add_into(da, &g));
                    self.accumulate(&mut grads, *b, |db| add_into(db, &g));
                }
                Op::AddRow(a, row) => {
                    let (_, n) = self.dims(*a);
                    self.accumulate(&mut grads, *a, |da| add_into(da, &g));
                    self.accumulate(&mut grads, *row, |dr| {
                        for chunk in g.chunks(n) {
                            add_into(dr, chunk);
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    self.accumulate(&mut grads, *a, |da| {
                        for ((d, gi), bi) in da.iter_mut().zip(&g).zip(bv) {
                            *d += gi * bi;
                        }
                    });
                    self.accumulate(&mut grads, *b, |db| {
                        for ((d, gi), ai) in db.iter_mut().zip(&g).zip(av) {
                            *d += gi * ai;
                        }
                    });
                }
                Op::Scale(a, c) => {
                    self.accumulate(&mut grads, *a, |da| {
                        for (d, gi) in da.iter_mut().zip(&g) {
                            *d += c * gi;
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    self.accumulate(&mut grads, *a, |da| {
                        for ((d, gi), yi) in da.iter_mut().zip(&g).zip(y) {
                            *d += gi * (1.0 - yi * yi);
                        }
                    });
                }
                Op::SoftmaxRows(a) => {
                    let (_, n) = self.dims(*a);
                    let y = node.value.data();
                    self.accumulate(&mut grads, *a, |da| {
                        for ((dr, gr), yr) in da.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                            let inner: f64 = gr.iter().zip(yr).map(|(gi, yi)| gi * yi).sum();
                            for ((d, gi), yi) in dr.iter_mut().zip(gr).zip(yr) {
                                *d += yi * (gi - inner);
                            }
                        }
                    });
                }
                Op::SliceCols(a, start) => {
                    let (_, n) = self.dims(*a);
                    let (_, w) = node.value.dims2();
                    self.accumulate(&mut grads, *a, |da| {
                        for (dr, gr) in da.chunks_mut(n).zip(g.chunks(w)) {
                            add_into(&mut dr[*start..start + w], gr);
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let (_, total) = node.value.dims2();
                    let mut offset = 0;
                    for &p in parts {
                        let (_, w) = self.dims(p);
                        self.accumulate(&mut grads, p, |dp| {
                            for (dr, gr) in dp.chunks_mut(w).zip(g.chunks(total)) {
                                add_into(dr, &gr[offset..offset + w]);
                            }
                        });
                        offset += w;
                    }
                }
                Op::StackRows(rows) => {
                    let (_, n) = node.value.dims2();
                    for (&r, gr) in rows.iter().zip(g.chunks(n)) {
                        self.accumulate(&mut grads, r, |dr| add_into(dr, gr));
                    }
                }
                Op::GatherRows(table, indices) => {
                    let (_, n) = self.dims(*table);
                    self.accumulate(&mut grads, *table, |dt| {
                        for (&row, gr) in indices.iter().zip(g.chunks(n)) {
                            add_into(&mut dt[row * n..(row + 1) * n], gr);
                        }
                    });
                }
                Op::Sum(a) => {
                    let s = g[0];
                    self.accumulate(&mut grads, *a, |da| da.iter_mut().for_each(|d| *d += s));
                }
                Op::NllAt(a, target) => {
                    let s = g[0];
                    let p = softmax_slice(self.value(*a).data());
                    self.accumulate(&mut grads, *a, |da| {
                        for (j, (d, pj)) in da.iter_mut().zip(&p).enumerate() {
                            let onehot = if j == *target { 1.0 } else { 0.0 };
                            *d += s * (pj - onehot);
                        }
                    });
                }
                Op::Mask(a, mask) => {
                    self.accumulate(&mut grads, *a, |da| {
                        for ((d, gi), mi) in da.iter_mut().zip(&g).zip(mask) {
                            *d += gi * mi;
                        }
                    });
                }
            }
        }
        Ok(param_grads)
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Vec<f64>>],
        v: Var,
        f: impl FnOnce(&mut [f64]),
    ) {
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.value(v).len()]);
        f(slot);
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    /// Central differences over every entry of every input, compared with the
    /// analytic gradient by relative norm error per input.
    fn check_gradients<F>(inputs: &[Tensor], f: F)
    where
        F: Fn(&mut Graph<'_>, &[Var]) -> Var,
    {
        let eval = |ts: &[Tensor]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = ts.iter().map(|t| g.param(t)).collect();
            let out = f(&mut g, &vars);
            g.value(out).item().unwrap()
        };
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
        let out = f(&mut g, &vars);
        let analytic = g.backward(out).unwrap();

        let h = 1e-5;
        for (p, grad) in analytic.iter().enumerate() {
            let mut numeric = vec![0.0; grad.len()];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let mut plus = inputs.to_vec();
                plus[p].data_mut()[i] += h;
                let mut minus = inputs.to_vec();
                minus[p].data_mut()[i] -= h;
                *slot = (eval(&plus) - eval(&minus)) / (2.0 * h);
            }
            let diff: f64 = grad.data().iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum();
            let scale = grad.data().iter().map(|a| a * a).sum::<f64>().sqrt()
                .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt())
                .max(1e-12);
            let rel = diff.sqrt() / scale;
            assert!(rel <= 1e-4, "input {p}: relative error {rel:e}");
        }
    }

    #[test]
    fn square_has_derivative_two_x() {
        let x = Tensor::scalar(3.0);
        let mut g = Graph::new();
        let xv = g.param(&x);
        let y = g.mul(xv, xv).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads[0].data(), &[6.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let w = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut g = Graph::new();
        let _ = g.param(&w);
        let c = g.constant(Tensor::scalar(5.0));
        let grads = g.backward(c).unwrap();
        assert_eq!(grads[0], Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn unused_parameter_gets_exact_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, &[2, 3]);
        let unused = random(&mut rng, &[4]);
        let mut g = Graph::new();
        let av = g.param(&a);
        let _ = g.param(&unused);
        let t = g.tanh(av);
        let s = g.sum(t);
        let grads = g.backward(s).unwrap();
        assert!(grads[1].data().iter().all(|&v| v == 0.0));
        assert_eq!(grads[1].shape(), &[4]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let a = Tensor::zeros(&[2, 2]);
        let mut g = Graph::new();
        let av = g.param(&a);
        assert!(matches!(g.backward(av), Err(Error::Contract(_))));
    }

    #[test]
    fn three_layer_composition_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let inputs = vec![
                random(&mut rng, &[3, 4]),
                random(&mut rng, &[4, 5]),
                random(&mut rng, &[5]),
                random(&mut rng, &[5, 6]),
            ];
            check_gradients(&inputs, |g, v| {
                let h = g.matmul(v[0], v[1]).unwrap();
                let h = g.add_row(h, v[2]).unwrap();
                let h = g.tanh(h);
                let h = g.matmul(h, v[3]).unwrap();
                let p = g.softmax_rows(h);
                let row = g.slice_cols(p, 1, 4).unwrap();
                let row = g.transpose(row).unwrap();
                let first = g.slice_cols(row, 0, 1).unwrap();
                let first = g.transpose(first).unwrap();
                g.nll_at(first, 2).unwrap()
            });
        }
    }

    #[test]
    fn attention_style_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inputs = vec![
            random(&mut rng, &[5, 3]),
            random(&mut rng, &[3, 4]),
            random(&mut rng, &[3, 4]),
            random(&mut rng, &[4, 3]),
        ];
        check_gradients(&inputs, |g, v| {
            let x = g.gather_rows(v[0], &[1, 3, 1, 4]).unwrap();
            let q = g.matmul(x, v[1]).unwrap();
            let k = g.matmul(x, v[2]).unwrap();
            let s = g.matmul_nt(q, k).unwrap();
            let s = g.scale(s, 0.5);
            let a = g.softmax_rows(s);
            let heads: Vec<Var> = (0..2)
                .map(|h| {
                    let vh = g.slice_cols(x, h, 2).unwrap();
                    g.matmul(a, vh).unwrap()
                })
                .collect();
            let cat = g.concat_cols(&heads).unwrap();
            let y = g.matmul(cat, v[3]).unwrap();
            let rows: Vec<Var> = (0..2)
                .map(|r| {
                    let t = g.transpose(y).unwrap();
                    let c = g.slice_cols(t, r, 1).unwrap();
                    g.transpose(c).unwrap()
                })
                .collect();
            let st = g.stack_rows(&rows).unwrap();
            let m = g.mask(st, vec![1.0, 0.0, 2.0, 1.0, 1.0, 0.5]).unwrap();
            let sq = g.mul(m, m).unwrap();
            let total = g.add(sq, st).unwrap();
            g.sum(total)
        });
    }

    #[test]
    fn backward_is_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, &[4, 4]);
        let b = random(&mut rng, &[4, 4]);
        let run = || {
            let mut g = Graph::new();
            let (av, bv) = (g.param(&a), g.param(&b));
            let c = g.matmul(av, bv).unwrap();
            let c = g.softmax_rows(c);
            let r = g_row(&mut g, c);
            let c = g.nll_at(r, 1).unwrap();
            g.backward(c).unwrap()
        };
        fn g_row(g: &mut Graph<'_>, m: Var) -> Var {
            let t = g.transpose(m).unwrap();
            let c = g.slice_cols(t, 0, 1).unwrap();
            g.transpose(c).unwrap()
        }
        let first = run();
        let second = run();
        for (x, y) in first.iter().zip(&second) {
            let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }
}
