//! The shared recommendation network.
//!
//! News titles are embedded, passed through multi-head self-attention and
//! pooled by additive attention into one vector. A user is the additive
//! attention pool of their history's news vectors, and a candidate's score is
//! the dot product of the two. The alignment head is a dense layer mapping a
//! news vector to one logit per source news id.
//!
//! No positional encoding is used anywhere, so both encoders are invariant to
//! the order of their inputs.

mod checkpoint;
mod layers;

use std::collections::HashMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::text::Vocabulary;

pub use checkpoint::Checkpoint;
pub use layers::{AdditiveAttention, SelfAttention};
use layers::{uniform_init, BoundAdditiveAttention, BoundSelfAttention};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub n_heads: usize,
    pub attention_hidden: usize,
    /// Inserts a multi-head self-attention layer over the history before the
    /// user pooling step.
    pub user_self_attention: bool,
    pub dropout: f64,
    pub max_title_len: usize,
    pub max_history_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: 300,
            n_heads: 6,
            attention_hidden: 200,
            user_self_attention: false,
            dropout: 0.0,
            max_title_len: 30,
            max_history_len: 50,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.n_heads == 0 || self.attention_hidden == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        if self.embedding_dim % self.n_heads != 0 {
            return Err(Error::config(format!(
                "embedding_dim {} is not divisible by n_heads {}",
                self.embedding_dim, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_title_len == 0 || self.max_history_len == 0 {
            return Err(Error::config("max_title_len and max_history_len must be >= 1"));
        }
        Ok(())
    }
}

/// Dense layer from a news vector to one logit per source news id.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignHead {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub word_embedding: Tensor,
    pub news_self_attention: SelfAttention,
    pub news_pool: AdditiveAttention,
    pub user_self_attention: Option<SelfAttention>,
    pub user_pool: AdditiveAttention,
    pub align_head: Option<AlignHead>,
}

impl ModelParams {
    /// Fresh parameters. `align_classes` is the number of source news ids,
    /// or `None` for a model without alignment head.
    pub fn new(
        config: ModelConfig,
        vocab_size: usize,
        align_classes: Option<usize>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.embedding_dim;
        let h = config.attention_hidden;
        if vocab_size < 2 {
            return Err(Error::config("vocabulary must contain at least PAD and UNK"));
        }
        let word_embedding = uniform_init(rng, &[vocab_size, d], d);
        let news_self_attention = SelfAttention::new(rng, d);
        let news_pool = AdditiveAttention::new(rng, d, h);
        let user_self_attention = config.user_self_attention.then(|| SelfAttention::new(rng, d));
        let user_pool = AdditiveAttention::new(rng, d, h);
        let align_head = match align_classes {
            Some(0) => return Err(Error::config("alignment head needs at least one class")),
            Some(n) => Some(AlignHead {
                weight: uniform_init(rng, &[d, n], d),
                bias: Tensor::zeros(&[n]),
            }),
            None => None,
        };
        Ok(ModelParams {
            config,
            word_embedding,
            news_self_attention,
            news_pool,
            user_self_attention,
            user_pool,
            align_head,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.word_embedding.dims2().0
    }

    pub fn align_classes(&self) -> Option<usize> {
        self.align_head.as_ref().map(|a| a.weight.dims2().1)
    }

    /// Every learnable tensor with a stable name, in binding order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![("word_embedding".into(), &self.word_embedding)];
        let sa = ["query", "key", "value"];
        let pool = ["projection", "bias", "query"];
        for (n, t) in sa.iter().zip(self.news_self_attention.tensors()) {
            out.push((format!("news_self_attention.{n}"), t));
        }
        for (n, t) in pool.iter().zip(self.news_pool.tensors()) {
            out.push((format!("news_pool.{n}"), t));
        }
        if let Some(usa) = &self.user_self_attention {
            for (n, t) in sa.iter().zip(usa.tensors()) {
                out.push((format!("user_self_attention.{n}"), t));
            }
        }
        for (n, t) in pool.iter().zip(self.user_pool.tensors()) {
            out.push((format!("user_pool.{n}"), t));
        }
        if let Some(head) = &self.align_head {
            out.push(("align_head.weight".into(), &head.weight));
            out.push(("align_head.bias".into(), &head.bias));
        }
        out
    }

    /// Mutable view in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.word_embedding];
        out.extend(self.news_self_attention.tensors_mut());
        out.extend(self.news_pool.tensors_mut());
        if let Some(usa) = &mut self.user_self_attention {
            out.extend(usa.tensors_mut());
        }
        out.extend(self.user_pool.tensors_mut());
        if let Some(head) = &mut self.align_head {
            out.push(&mut head.weight);
            out.push(&mut head.bias);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Overwrites embedding rows of tokens present in `vectors`. Returns how
    /// many rows were replaced.
    pub fn load_pretrained_embeddings(
        &mut self,
        vocab: &Vocabulary,
        vectors: &HashMap<String, Vec<f64>>,
    ) -> Result<usize> {
        let d = self.config.embedding_dim;
        if vocab.len() != self.vocab_size() {
            return Err(Error::dim(format!(
                "vocabulary has {} tokens, embedding table {}",
                vocab.len(),
                self.vocab_size()
            )));
        }
        let mut replaced = 0;
        for (i, tok) in vocab.tokens().iter().enumerate() {
            if let Some(v) = vectors.get(tok) {
                if v.len() != d {
                    return Err(Error::dim(format!(
                        "pretrained vector for {tok:?} has {} values, expected {d}",
                        v.len()
                    )));
                }
                self.word_embedding.row_mut(i).copy_from_slice(v);
                replaced += 1;
            }
        }
        Ok(replaced)
    }

    /// Registers every parameter on `g` in [`named_tensors`](Self::named_tensors) order.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> BoundModel<'a> {
        let word_embedding = g.param(&self.word_embedding);
        let news_self_attention = BoundSelfAttention::bind(&self.news_self_attention, g);
        let news_pool = BoundAdditiveAttention::bind(&self.news_pool, g);
        let user_self_attention =
            self.user_self_attention.as_ref().map(|p| BoundSelfAttention::bind(p, g));
        let user_pool = BoundAdditiveAttention::bind(&self.user_pool, g);
        let align_head = self
            .align_head
            .as_ref()
            .map(|h| (g.param(&h.weight), g.param(&h.bias)));
        BoundModel {
            params: self,
            word_embedding,
            news_self_attention,
            news_pool,
            user_self_attention,
            user_pool,
            align_head,
        }
    }

    /// News vector `e_d` for one title, outside any training graph.
    pub fn encode_news(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let m = self.bind(&mut g);
        let v = m.encode_news(&mut g, tokens, None)?;
        Ok(g.value(v).data().to_vec())
    }

    /// User vector `e_u` from precomputed news vectors.
    pub fn encode_user(&self, history: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let m = self.bind(&mut g);
        let rows = history
            .iter()
            .map(|h| Tensor::vector(h.clone()).map(|t| g.constant(t)))
            .collect::<Result<Vec<_>>>()?;
        let u = m.encode_user(&mut g, &rows)?;
        Ok(g.value(u).data().to_vec())
    }

    pub fn align_logits(&self, news_vector: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let m = self.bind(&mut g);
        let e = g.constant(Tensor::vector(news_vector.to_vec())?);
        let logits = m.align_logits(&mut g, e)?;
        Ok(g.value(logits).data().to_vec())
    }
}

/// Dot product `e_u . e_d`, unnormalized.
pub fn score(user: &[f64], news: &[f64]) -> Result<f64> {
    if user.len() != news.len() {
        return Err(Error::dim(format!(
            "score: user vector {} vs news vector {}",
            user.len(),
            news.len()
        )));
    }
    Ok(crate::autodiff::dot(user, news))
}

/// Parameters registered on a graph.
pub struct BoundModel<'a> {
    params: &'a ModelParams,
    word_embedding: Var,
    news_self_attention: BoundSelfAttention,
    news_pool: BoundAdditiveAttention,
    user_self_attention: Option<BoundSelfAttention>,
    user_pool: BoundAdditiveAttention,
    align_head: Option<(Var, Var)>,
}

impl BoundModel<'_> {
    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    /// Encodes one title (`1 x dim`). Dropout is applied only when `dropout`
    /// carries a generator and the configured rate is positive.
    pub fn encode_news(
        &self,
        g: &mut Graph<'_>,
        tokens: &[usize],
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        let cfg = self.config();
        if tokens.is_empty() {
            return Err(Error::contract("encode_news: empty token list"));
        }
        if tokens.len() > cfg.max_title_len {
            return Err(Error::contract(format!(
                "encode_news: {} tokens exceed max_title_len {}",
                tokens.len(),
                cfg.max_title_len
            )));
        }
        let mut x = g.gather_rows(self.word_embedding, tokens)?;
        let rate = cfg.dropout;
        let mut dropout = dropout.filter(|_| rate > 0.0);
        if let Some(rng) = dropout.as_deref_mut() {
            x = apply_dropout(g, x, rate, rng)?;
        }
        let mut h = self.news_self_attention.forward(g, x, cfg.n_heads)?;
        if let Some(rng) = dropout {
            h = apply_dropout(g, h, rate, rng)?;
        }
        self.news_pool.forward(g, h)
    }

    /// Pooling weights the news encoder assigns to each token of a title.
    pub fn news_pooling_weights(&self, g: &mut Graph<'_>, tokens: &[usize]) -> Result<Var> {
        let x = g.gather_rows(self.word_embedding, tokens)?;
        let h = self.news_self_attention.forward(g, x, self.config().n_heads)?;
        self.news_pool.weights(g, h)
    }

    /// Pools history news vectors (each `1 x dim`) into the user vector.
    pub fn encode_user(&self, g: &mut Graph<'_>, history: &[Var]) -> Result<Var> {
        if history.is_empty() {
            return Err(Error::contract("encode_user: empty history"));
        }
        let mut h = g.stack_rows(history)?;
        if let Some(sa) = &self.user_self_attention {
            h = sa.forward(g, h, self.config().n_heads)?;
        }
        self.user_pool.forward(g, h)
    }

    /// Scores of every candidate for one user, as a `1 x n` row.
    pub fn scores(&self, g: &mut Graph<'_>, user: Var, candidates: &[Var]) -> Result<Var> {
        let c = g.stack_rows(candidates)?;
        g.matmul_nt(user, c)
    }

    pub fn align_logits(&self, g: &mut Graph<'_>, news: Var) -> Result<Var> {
        let (w, b) = self
            .align_head
            .ok_or_else(|| Error::contract("alignment head is not configured"))?;
        let logits = g.matmul(news, w)?;
        g.add_row(logits, b)
    }
}

fn apply_dropout(g: &mut Graph<'_>, x: Var, rate: f64, rng: &mut dyn RngCore) -> Result<Var> {
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..g.value(x).len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    g.mask(x, mask)
}
