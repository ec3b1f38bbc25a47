//! One optimisation step's worth of work, split into fixed-size chunks whose
//! gradients are computed independently (in parallel when enabled) and summed
//! in chunk order. The result does not depend on the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::data::Domain;
use crate::error::{Error, Result};
use crate::model::{BoundModel, ModelParams};

/// A user history plus candidates `[positive, negatives..]`, already resolved
/// to token sequences (masking, if any, has been applied).
#[derive(Clone, Debug, PartialEq)]
pub struct RecItem {
    pub domain: Domain,
    pub history: Vec<Vec<usize>>,
    pub candidates: Vec<Vec<usize>>,
    /// Seeds the dropout masks of this item.
    pub seed: u64,
}

/// One title form and the source news id (class) it must be mapped back to.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignItem {
    pub tokens: Vec<usize>,
    pub class: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub rec: Vec<RecItem>,
    pub align: Vec<AlignItem>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub zero_shot: bool,
}

/// Per-term means over the batch and their weighted total. A term without
/// items is 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub align: f64,
    pub source: f64,
    pub target: f64,
    pub total: f64,
}

enum Item<'b> {
    Rec(&'b RecItem),
    Align(&'b AlignItem),
}

struct ChunkOut {
    grads: Vec<Tensor>,
    // Unweighted per-item losses, tagged by term: 0 align, 1 source, 2 target.
    losses: Vec<(usize, f64)>,
}

fn encode(m: &BoundModel<'_>, g: &mut Graph<'_>, tokens: &[usize], rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
    m.encode_news(g, tokens, rng.map(|r| r as &mut dyn rand::RngCore))
}

fn rec_item_loss(m: &BoundModel<'_>, g: &mut Graph<'_>, item: &RecItem, dropout: bool) -> Result<Var> {
    if item.candidates.len() < 2 {
        return Err(Error::contract("training sample needs a positive and at least one negative"));
    }
    let mut rng = dropout.then(|| ChaCha8Rng::seed_from_u64(item.seed));
    let user = if item.history.is_empty() {
        g.constant(Tensor::zeros(&[1, m.config().embedding_dim]))
    } else {
        let h = item
            .history
            .iter()
            .map(|t| encode(m, g, t, rng.as_mut()))
            .collect::<Result<Vec<_>>>()?;
        m.encode_user(g, &h)?
    };
    let c = item
        .candidates
        .iter()
        .map(|t| encode(m, g, t, rng.as_mut()))
        .collect::<Result<Vec<_>>>()?;
    let scores = m.scores(g, user, &c)?;
    g.nll_at(scores, 0)
}

fn align_item_loss(m: &BoundModel<'_>, g: &mut Graph<'_>, item: &AlignItem, dropout: bool) -> Result<Var> {
    let mut rng = dropout.then(|| ChaCha8Rng::seed_from_u64(item.seed));
    let e = encode(m, g, &item.tokens, rng.as_mut())?;
    let logits = m.align_logits(g, e)?;
    g.nll_at(logits, item.class)
        .map_err(|_| Error::contract(format!("align class {} outside the source news set", item.class)))
}

/// Loss breakdown and parameter gradients (in `named_tensors` order) of the
/// weighted batch loss. Items whose weight is zero are skipped entirely.
pub fn batch_gradients(
    params: &ModelParams,
    batch: &Batch,
    weights: LossWeights,
    chunk_size: usize,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    super::loss::check_weights(weights.alpha, weights.beta)?;
    let n_src = batch.rec.iter().filter(|r| r.domain == Domain::Source).count();
    let n_tgt = batch.rec.len() - n_src;
    let n_align = batch.align.len();
    let coef = |term: usize| -> f64 {
        match term {
            0 => weights.alpha / n_align as f64,
            1 => weights.beta / n_src as f64,
            _ if weights.zero_shot => 0.0,
            _ => 1.0 / n_tgt as f64,
        }
    };
    let term_of = |item: &Item<'_>| match item {
        Item::Align(_) => 0,
        Item::Rec(r) if r.domain == Domain::Source => 1,
        Item::Rec(_) => 2,
    };

    let items: Vec<Item<'_>> = batch
        .rec
        .iter()
        .map(Item::Rec)
        .chain(batch.align.iter().map(Item::Align))
        .filter(|it| coef(term_of(it)) > 0.0)
        .collect();
    let chunk_size = chunk_size.max(1);
    let n_chunks = items.len().div_ceil(chunk_size);
    let dropout = params.config.dropout > 0.0;

    let outs = crate::parallel::try_map(&(0..n_chunks).collect::<Vec<_>>(), |&c| -> Result<ChunkOut> {
        let mut g = Graph::new();
        let m = params.bind(&mut g);
        let mut weighted = Vec::new();
        let mut losses = Vec::new();
        for it in &items[c * chunk_size..((c + 1) * chunk_size).min(items.len())] {
            let term = term_of(it);
            let l = match it {
                Item::Rec(r) => rec_item_loss(&m, &mut g, r, dropout)?,
                Item::Align(a) => align_item_loss(&m, &mut g, a, dropout)?,
            };
            losses.push((term, g.value(l).item()?));
            weighted.push(g.scale(l, coef(term)));
        }
        let loss = g.add_all(&weighted)?;
        Ok(ChunkOut { grads: g.backward(loss)?, losses })
    })?;

    let mut grads: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut sums = [0.0; 3];
    for out in outs {
        for (acc, g) in grads.iter_mut().zip(&out.grads) {
            acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
        }
        for (term, v) in out.losses {
            sums[term] += v;
        }
    }
    let mean = |term: usize, n: usize| if n == 0 || coef(term) == 0.0 { 0.0 } else { sums[term] / n as f64 };
    let align = mean(0, n_align);
    let source = mean(1, n_src);
    let target = if weights.zero_shot { 0.0 } else { mean(2, n_tgt) };
    let total = weights.alpha * align + weights.beta * source + target;
    Ok((LossBreakdown { align, source, target, total }, grads))
}
