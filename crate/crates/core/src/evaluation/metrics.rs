//! Per-impression ranking metrics. Ranks are by descending score with ties
//! broken by candidate order.

/// Candidate positions sorted by descending score, stable on ties.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `None` unless both classes are present.
pub fn auc(labels: &[u8], scores: &[f64]) -> Option<f64> {
    assert_eq!(labels.len(), scores.len(), "auc: labels and scores differ in length");
    let positives = labels.iter().filter(|&&l| l == 1).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    // Sweep ascending scores group by group; `2 * wins + ties` stays an
    // integer, so the result is exact up to the final division.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice = 0u64;
    let mut negatives_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 { pos += 1 } else { neg += 1 }
            j += 1;
        }
        twice += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    Some(twice as f64 / (2 * positives * negatives) as f64)
}

/// Mean over positives of 1 / rank. `None` without positives.
pub fn mrr(labels: &[u8], scores: &[f64]) -> Option<f64> {
    assert_eq!(labels.len(), scores.len(), "mrr: labels and scores differ in length");
    let order = ranking(scores);
    let (mut sum, mut n) = (0.0, 0usize);
    for (rank, &c) in order.iter().enumerate() {
        if labels[c] == 1 {
            sum += 1.0 / (rank + 1) as f64;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// DCG@k over binary gains divided by the ideal DCG@k. `None` without
/// positives.
pub fn ndcg_at_k(labels: &[u8], scores: &[f64], k: usize) -> Option<f64> {
    assert_eq!(labels.len(), scores.len(), "ndcg: labels and scores differ in length");
    assert!(k >= 1, "ndcg: k must be >= 1");
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return None;
    }
    let discount = |rank: usize| 1.0 / ((rank + 2) as f64).log2();
    let dcg: f64 = ranking(scores)
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &c)| labels[c] == 1)
        .map(|(rank, _)| discount(rank))
        .sum();
    let ideal: f64 = (0..positives.min(k)).map(discount).sum();
    Some(dcg / ideal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(labels: &[u8], scores: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        // Pairs: tie 0.5, win, loss, win.
        assert_eq!(auc(&[1, 0, 1, 0], &[0.9, 0.9, 0.2, 0.1]), Some(0.625));
        assert_eq!(auc(&[1, 0], &[2.0, 1.0]), Some(1.0));
        assert_eq!(auc(&[1, 0], &[1.0, 2.0]), Some(0.0));
        assert_eq!(auc(&[1, 1], &[1.0, 2.0]), None);
        assert_eq!(auc(&[0, 0], &[1.0, 2.0]), None);
    }

    #[test]
    fn mrr_examples() {
        assert_eq!(mrr(&[1, 0], &[2.0, 1.0]), Some(1.0));
        assert_eq!(mrr(&[0, 1], &[2.0, 1.0]), Some(0.5));
        assert!((mrr(&[1, 1, 0], &[3.0, 1.0, 2.0]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(mrr(&[0, 0], &[2.0, 1.0]), None);
        // Ties go to the earlier candidate.
        assert_eq!(mrr(&[0, 1], &[1.0, 1.0]), Some(0.5));
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[1, 1, 0], &[3.0, 2.0, 1.0], 5), Some(1.0));
        assert_eq!(ndcg_at_k(&[1], &[0.3], 5), Some(1.0));
        let expected = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((ndcg_at_k(&[1, 0, 1], &[3.0, 2.0, 1.0], 5).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.919720).abs() < 1e-6);
        assert_eq!(ndcg_at_k(&[0, 1], &[2.0, 1.0], 1), Some(0.0));
    }

    proptest! {
        #[test]
        fn auc_matches_brute_force(cands in prop::collection::vec((0u8..2, 0i32..6), 2..20)) {
            let labels: Vec<u8> = cands.iter().map(|c| c.0).collect();
            let scores: Vec<f64> = cands.iter().map(|c| c.1 as f64).collect();
            match auc(&labels, &scores) {
                Some(v) => prop_assert_eq!(v, brute_auc(&labels, &scores)),
                None => prop_assert!(labels.iter().all(|&l| l == labels[0])),
            }
        }

        #[test]
        fn metrics_invariant_under_increasing_maps(
            cands in prop::collection::vec((0u8..2, -50i32..50), 1..20),
        ) {
            let labels: Vec<u8> = cands.iter().map(|c| c.0).collect();
            let scores: Vec<f64> = cands.iter().map(|c| c.1 as f64 / 10.0).collect();
            let mapped: Vec<f64> = scores.iter().map(|s| (s * 3.0).exp() + 7.0).collect();
            prop_assert_eq!(auc(&labels, &scores), auc(&labels, &mapped));
            prop_assert_eq!(mrr(&labels, &scores), mrr(&labels, &mapped));
            prop_assert_eq!(ndcg_at_k(&labels, &scores, 5), ndcg_at_k(&labels, &mapped, 5));
        }

        #[test]
        fn ndcg_with_large_k_is_full_list(cands in prop::collection::vec((0u8..2, 0i32..9), 1..20)) {
            let labels: Vec<u8> = cands.iter().map(|c| c.0).collect();
            let scores: Vec<f64> = cands.iter().map(|c| c.1 as f64).collect();
            prop_assert_eq!(ndcg_at_k(&labels, &scores, labels.len()), ndcg_at_k(&labels, &scores, 1000));
        }
    }
}
