use rand::Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::Result;

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub(crate) fn uniform_init(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape is valid")
}

/// Multi-head self-attention without positional information. Head `h` owns
/// columns `[h * head_dim, (h + 1) * head_dim)` of each projection, and head
/// outputs are concatenated.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfAttention {
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
}

impl SelfAttention {
    pub(crate) fn new(rng: &mut impl Rng, dim: usize) -> Self {
        SelfAttention {
            query: uniform_init(rng, &[dim, dim], dim),
            key: uniform_init(rng, &[dim, dim], dim),
            value: uniform_init(rng, &[dim, dim], dim),
        }
    }

    pub(crate) fn tensors(&self) -> [&Tensor; 3] {
        [&self.query, &self.key, &self.value]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Tensor; 3] {
        [&mut self.query, &mut self.key, &mut self.value]
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BoundSelfAttention {
    query: Var,
    key: Var,
    value: Var,
}

impl BoundSelfAttention {
    pub(crate) fn bind<'a>(p: &'a SelfAttention, g: &mut Graph<'a>) -> Self {
        BoundSelfAttention { query: g.param(&p.query), key: g.param(&p.key), value: g.param(&p.value) }
    }

    /// `x` is `len x dim`; the result has the same shape.
    pub(crate) fn forward(&self, g: &mut Graph<'_>, x: Var, n_heads: usize) -> Result<Var> {
        let dim = g.value(x).dims2().1;
        let head_dim = dim / n_heads;
        let q = g.matmul(x, self.query)?;
        let k = g.matmul(x, self.key)?;
        let v = g.matmul(x, self.value)?;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut heads = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let start = h * head_dim;
            let qh = g.slice_cols(q, start, head_dim)?;
            let kh = g.slice_cols(k, start, head_dim)?;
            let vh = g.slice_cols(v, start, head_dim)?;
            let scores = g.matmul_nt(qh, kh)?;
            let scores = g.scale(scores, scale);
            let weights = g.softmax_rows(scores);
            heads.push(g.matmul(weights, vh)?);
        }
        if heads.len() == 1 {
            return Ok(heads[0]);
        }
        g.concat_cols(&heads)
    }
}

/// Additive attention pooling: `a_i = q . tanh(P h_i + b)`, weights
/// `softmax(a)`, output `sum_i w_i h_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveAttention {
    pub projection: Tensor,
    pub bias: Tensor,
    pub query: Tensor,
}

impl AdditiveAttention {
    pub(crate) fn new(rng: &mut impl Rng, dim: usize, hidden: usize) -> Self {
        AdditiveAttention {
            projection: uniform_init(rng, &[dim, hidden], dim),
            bias: Tensor::zeros(&[hidden]),
            query: uniform_init(rng, &[hidden], hidden),
        }
    }

    pub(crate) fn tensors(&self) -> [&Tensor; 3] {
        [&self.projection, &self.bias, &self.query]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Tensor; 3] {
        [&mut self.projection, &mut self.bias, &mut self.query]
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BoundAdditiveAttention {
    projection: Var,
    bias: Var,
    query: Var,
}

impl BoundAdditiveAttention {
    pub(crate) fn bind<'a>(p: &'a AdditiveAttention, g: &mut Graph<'a>) -> Self {
        BoundAdditiveAttention {
            projection: g.param(&p.projection),
            bias: g.param(&p.bias),
            query: g.param(&p.query),
        }
    }

    /// Pooling weights (`1 x len`) for the rows of `h`.
    pub(crate) fn weights(&self, g: &mut Graph<'_>, h: Var) -> Result<Var> {
        let t = g.matmul(h, self.projection)?;
        let t = g.add_row(t, self.bias)?;
        let t = g.tanh(t);
        let scores = g.matmul_nt(self.query, t)?;
        Ok(g.softmax_rows(scores))
    }

    /// Pools `len x dim` rows into one `1 x dim` row.
    pub(crate) fn forward(&self, g: &mut Graph<'_>, h: Var) -> Result<Var> {
        let w = self.weights(g, h)?;
        g.matmul(w, h)
    }
}
