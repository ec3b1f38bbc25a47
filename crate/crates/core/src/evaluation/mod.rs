//! Ranking metrics and the evaluation of a frozen model on impressions.

mod metrics;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use metrics::{auc, mrr, ndcg_at_k};

use crate::corpus::Corpus;
use crate::data::Impression;
use crate::error::Result;
use crate::model::{score, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpressionMetrics {
    pub impression_id: Option<String>,
    pub user_id: String,
    pub auc: Option<f64>,
    pub mrr: Option<f64>,
    pub ndcg5: Option<f64>,
    pub ndcg10: Option<f64>,
}

impl ImpressionMetrics {
    pub fn compute(labels: &[u8], scores: &[f64]) -> Self {
        ImpressionMetrics {
            impression_id: None,
            user_id: String::new(),
            auc: auc(labels, scores),
            mrr: mrr(labels, scores),
            ndcg5: ndcg_at_k(labels, scores, 5),
            ndcg10: ndcg_at_k(labels, scores, 10),
        }
    }
}

/// Unweighted means over impressions. AUC averages impressions holding both
/// classes (`n_impressions`); MRR and NDCG average those with a positive
/// (`n_with_positive`). A metric with nothing to average reports 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub n_impressions: usize,
    pub n_with_positive: usize,
    pub n_total: usize,
    pub excluded_auc: usize,
    pub excluded_no_positive: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_impression: Option<Vec<ImpressionMetrics>>,
}

/// Sorting first makes the mean independent of impression order.
fn mean(values: impl Iterator<Item = Option<f64>>) -> (f64, usize) {
    let mut v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return (0.0, 0);
    }
    v.sort_by(f64::total_cmp);
    (v.iter().sum::<f64>() / v.len() as f64, v.len())
}

impl MetricReport {
    pub fn aggregate(rows: Vec<ImpressionMetrics>, keep_rows: bool) -> Self {
        let (auc, n_auc) = mean(rows.iter().map(|r| r.auc));
        let (mrr, n_pos) = mean(rows.iter().map(|r| r.mrr));
        let (ndcg5, _) = mean(rows.iter().map(|r| r.ndcg5));
        let (ndcg10, _) = mean(rows.iter().map(|r| r.ndcg10));
        MetricReport {
            auc,
            mrr,
            ndcg5,
            ndcg10,
            n_impressions: n_auc,
            n_with_positive: n_pos,
            n_total: rows.len(),
            excluded_auc: rows.len() - n_auc,
            excluded_no_positive: rows.len() - n_pos,
            per_impression: keep_rows.then_some(rows),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metric report serializes");
        s.push('\n');
        s
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>8} {:>8} {:>8} {:>8}", "", "AUC", "MRR", "nDCG@5", "nDCG@10");
        let _ = writeln!(
            s,
            "{:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            "score", self.auc, self.mrr, self.ndcg5, self.ndcg10
        );
        let _ = writeln!(
            s,
            "{} impressions ({} without both classes, {} without a positive)",
            self.n_total, self.excluded_auc, self.excluded_no_positive
        );
        s
    }
}

/// News vectors for the given corpus indices, in order.
pub fn encode_all(model: &ModelParams, corpus: &Corpus, news: &[usize]) -> Result<Vec<Vec<f64>>> {
    crate::parallel::try_map(news, |&i| model.encode_news(corpus.tokens(i)))
}

/// Scores every impression with original titles (no masking). An empty
/// history yields the zero user vector, hence all-tied scores.
pub fn evaluate(
    model: &ModelParams,
    corpus: &Corpus,
    impressions: &[&Impression],
    keep_rows: bool,
) -> Result<MetricReport> {
    let mut histories = Vec::with_capacity(impressions.len());
    let mut candidates = Vec::with_capacity(impressions.len());
    let mut needed = BTreeSet::new();
    for imp in impressions {
        let h = corpus.history(imp)?;
        let c = corpus.candidates(imp)?;
        needed.extend(h.iter().chain(&c).copied());
        histories.push(h);
        candidates.push(c);
    }
    let needed: Vec<usize> = needed.into_iter().collect();
    let vectors = encode_all(model, corpus, &needed)?;
    let vector_of = |i: usize| &vectors[needed.binary_search(&i).expect("encoded")];

    let positions: Vec<usize> = (0..impressions.len()).collect();
    let rows = crate::parallel::try_map(&positions, |&k| -> Result<ImpressionMetrics> {
        let imp = impressions[k];
        let user = if histories[k].is_empty() {
            vec![0.0; model.config.embedding_dim]
        } else {
            let h: Vec<Vec<f64>> = histories[k].iter().map(|&i| vector_of(i).clone()).collect();
            model.encode_user(&h)?
        };
        let scores = candidates[k]
            .iter()
            .map(|&i| score(&user, vector_of(i)))
            .collect::<Result<Vec<f64>>>()?;
        let mut m = ImpressionMetrics::compute(&imp.labels, &scores);
        m.impression_id = imp.impression_id.clone();
        m.user_id = imp.user_id.clone();
        Ok(m)
    })?;
    Ok(MetricReport::aggregate(rows, keep_rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(labels: &[u8], scores: &[f64]) -> ImpressionMetrics {
        ImpressionMetrics::compute(labels, scores)
    }

    #[test]
    fn single_impression_aggregate() {
        let r = row(&[1, 0, 1, 0], &[0.9, 0.9, 0.2, 0.1]);
        let rep = MetricReport::aggregate(vec![r.clone()], false);
        assert_eq!(Some(rep.auc), r.auc);
        assert_eq!(Some(rep.mrr), r.mrr);
        assert_eq!(rep.n_impressions, 1);
    }

    #[test]
    fn label_leakage_scores_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<_> = (0..100)
            .map(|_| {
                // One positive per impression: with several, MRR averages
                // 1/rank over all of them and stays below 1.
                let mut labels = vec![0u8; 10];
                labels[rng.random_range(0..10)] = 1;
                let scores: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
                row(&labels, &scores)
            })
            .collect();
        let rep = MetricReport::aggregate(rows, false);
        assert_eq!((rep.auc, rep.mrr, rep.ndcg5, rep.ndcg10), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn random_scores_give_chance_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<_> = (0..5000)
            .map(|_| {
                let labels = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0];
                let scores: Vec<f64> = (0..10).map(|_| rng.random()).collect();
                row(&labels, &scores)
            })
            .collect();
        let rep = MetricReport::aggregate(rows, false);
        assert!((rep.auc - 0.5).abs() <= 0.02, "{}", rep.auc);
    }

    #[test]
    fn exclusions_are_counted_and_order_does_not_matter() {
        let rows = vec![
            row(&[1, 0], &[0.3, 0.1]),
            row(&[1, 1], &[0.3, 0.1]),
            row(&[0, 0], &[0.3, 0.1]),
            row(&[0, 1, 0], &[0.5, 0.1, 0.2]),
        ];
        let a = MetricReport::aggregate(rows.clone(), false);
        assert_eq!((a.n_total, a.excluded_auc, a.excluded_no_positive), (4, 2, 1));
        let mut reversed = rows;
        reversed.reverse();
        let b = MetricReport::aggregate(reversed, false);
        assert_eq!(a, b);
        assert!(a.table().contains("AUC"));
    }
}
