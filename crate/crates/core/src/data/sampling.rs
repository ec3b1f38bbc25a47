use std::collections::HashSet;
use std::hash::Hash;

use rand::seq::index;
use rand::Rng;

use super::types::TrainingSample;
use crate::error::{Error, Result};

/// Draws `k` negatives for every positive candidate of one impression.
///
/// Negatives come first from the impression's own non-clicked candidates,
/// then from the global pool of news the user never clicked. Only when both
/// pools together hold fewer than `k` distinct news are negatives repeated.
/// An impression without positives yields no samples.
pub fn sample_negatives<Id, R>(
    user_id: &Id,
    candidates: &[Id],
    labels: &[u8],
    all_news: &[Id],
    user_clicked: &HashSet<Id>,
    k: usize,
    rng: &mut R,
) -> Result<Vec<TrainingSample<Id>>>
where
    Id: Clone + Eq + Hash,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Err(Error::contract("sample_negatives: k must be >= 1"));
    }
    if candidates.len() != labels.len() {
        return Err(Error::dim("sample_negatives: candidates and labels differ in length"));
    }
    let positives: Vec<&Id> =
        candidates.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(c, _)| c).collect();
    if positives.is_empty() {
        return Ok(Vec::new());
    }
    let positive_set: HashSet<&Id> = positives.iter().copied().collect();
    let usable = |id: &Id| !user_clicked.contains(id) && !positive_set.contains(id);

    let mut local: Vec<&Id> = Vec::new();
    let mut local_seen = HashSet::new();
    for (c, &l) in candidates.iter().zip(labels) {
        if l == 0 && usable(c) && local_seen.insert(c) {
            local.push(c);
        }
    }

    let mut samples = Vec::with_capacity(positives.len());
    for pos in positives {
        let mut chosen: Vec<Id> = Vec::with_capacity(k);
        let mut chosen_set: HashSet<&Id> = HashSet::with_capacity(k);
        let take = k.min(local.len());
        for i in index::sample(rng, local.len(), take) {
            chosen.push(local[i].clone());
            chosen_set.insert(local[i]);
        }
        if chosen.len() < k {
            fill_from_global(all_news, &usable, &mut chosen, &mut chosen_set, k, rng);
        }
        if chosen.len() < k {
            // Both pools exhausted: repeat what is available.
            let pool: Vec<Id> = chosen.clone();
            if pool.is_empty() {
                return Err(Error::contract(
                    "sample_negatives: the user clicked every news; no negative can be drawn",
                ));
            }
            while chosen.len() < k {
                chosen.push(pool[rng.random_range(0..pool.len())].clone());
            }
        }
        samples.push(TrainingSample { user_id: user_id.clone(), positive: pos.clone(), negatives: chosen });
    }
    Ok(samples)
}

fn fill_from_global<'a, Id, R>(
    all_news: &'a [Id],
    usable: &impl Fn(&Id) -> bool,
    chosen: &mut Vec<Id>,
    chosen_set: &mut HashSet<&'a Id>,
    k: usize,
    rng: &mut R,
) where
    Id: Clone + Eq + Hash,
    R: Rng + ?Sized,
{
    if all_news.is_empty() {
        return;
    }
    // Rejection sampling is cheap while most of the corpus is unclicked.
    let mut attempts = 0;
    while chosen.len() < k && attempts < 16 * k {
        attempts += 1;
        let c = &all_news[rng.random_range(0..all_news.len())];
        if usable(c) && !chosen_set.iter().any(|s| *s == c) {
            chosen_set.insert(c);
            chosen.push(c.clone());
        }
    }
    if chosen.len() < k {
        let rest: Vec<&Id> = all_news.iter().filter(|c| usable(c) && !chosen_set.contains(c)).collect();
        let take = (k - chosen.len()).min(rest.len());
        for i in index::sample(rng, rest.len(), take) {
            chosen_set.insert(rest[i]);
            chosen.push(rest[i].clone());
        }
    }
}

/// Uniform subset of `n` users without replacement, kept in input order.
/// `n = 0` is the zero-shot setting; `n >= len` returns everyone.
pub fn few_shot_sample<T: Clone, R: Rng + ?Sized>(users: &[T], n: usize, rng: &mut R) -> Vec<T> {
    if n >= users.len() {
        return users.to_vec();
    }
    let mut picked = index::sample(rng, users.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| users[i].clone()).collect()
}
