use std::collections::HashMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::dot;
use crate::data::News;
use crate::error::{Error, Result};
use crate::text::load_vectors;

fn default_dim() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmbeddingProviderSpec {
    /// Precomputed per-token vectors, `token v1 .. v_dim` per line.
    File { path: PathBuf, dim: usize },
    /// Every token maps to a pseudo-random unit vector derived from its hash.
    HashFallback {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for EmbeddingProviderSpec {
    fn default() -> Self {
        EmbeddingProviderSpec::HashFallback { dim: default_dim(), seed: 0 }
    }
}

/// Stand-in for a multilingual sentence encoder: a title is the mean of its
/// (lowercased, whitespace-split) token vectors.
#[derive(Clone, Debug)]
pub enum EmbeddingProvider {
    File { dim: usize, vectors: HashMap<String, Vec<f64>> },
    Hash { dim: usize, seed: u64 },
}

impl EmbeddingProvider {
    pub fn from_spec(spec: &EmbeddingProviderSpec) -> Result<Self> {
        match spec {
            EmbeddingProviderSpec::File { path, dim } => {
                if !path.exists() {
                    return Err(Error::config(format!("embedding file {} does not exist", path.display())));
                }
                Ok(EmbeddingProvider::File { dim: *dim, vectors: load_vectors(path, *dim)? })
            }
            EmbeddingProviderSpec::HashFallback { dim, seed } => {
                if *dim == 0 {
                    return Err(Error::config("embedding dimension must be positive"));
                }
                Ok(EmbeddingProvider::Hash { dim: *dim, seed: *seed })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::File { dim, .. } | EmbeddingProvider::Hash { dim, .. } => *dim,
        }
    }

    /// `None` for tokens absent from a vector file.
    pub fn token_vector(&self, token: &str) -> Option<Vec<f64>> {
        match self {
            EmbeddingProvider::File { vectors, .. } => vectors.get(token).cloned(),
            EmbeddingProvider::Hash { dim, seed } => Some(hash_vector(token, *dim, *seed)),
        }
    }

    /// Mean of token vectors; unknown tokens contribute zeros, an empty title
    /// is the zero vector.
    pub fn embed_title(&self, title: &str) -> Vec<f64> {
        let mut sum = vec![0.0; self.dim()];
        let mut n = 0usize;
        for token in title.to_lowercase().split_whitespace() {
            n += 1;
            if let Some(v) = self.token_vector(token) {
                sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
            }
        }
        if n > 0 {
            sum.iter_mut().for_each(|s| *s /= n as f64);
        }
        sum
    }
}

fn hash_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dot(&v, &v).sqrt();
    if norm > 0.0 {
        v.into_iter().map(|x| x / norm).collect()
    } else {
        v
    }
}

/// Brute-force cosine index over target-domain titles.
#[derive(Clone, Debug)]
pub struct SimilarityIndex {
    ids: Vec<String>,
    /// Unit-normalised embeddings; zero vectors stay zero.
    unit: Vec<Vec<f64>>,
}

impl SimilarityIndex {
    pub fn build(target_news: &[&News], provider: &EmbeddingProvider) -> Result<Self> {
        if target_news.is_empty() {
            return Err(Error::contract("find_most_similar needs a non-empty target news set"));
        }
        let embedded = crate::parallel::map(target_news, |n| unit(provider.embed_title(&n.title)));
        Ok(SimilarityIndex { ids: target_news.iter().map(|n| n.news_id.clone()).collect(), unit: embedded })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Position of the most cosine-similar entry; ties go to the lowest id.
    pub fn most_similar(&self, query: &[f64]) -> usize {
        let q = unit(query.to_vec());
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, v) in self.unit.iter().enumerate() {
            let s = dot(&q, v);
            if s > best_score || (s == best_score && self.ids[i] < self.ids[best]) {
                best = i;
                best_score = s;
            }
        }
        best
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = dot(&v, &v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// The target news whose title embedding is most cosine-similar to `title`.
pub fn find_most_similar<'a>(title: &str, target_news: &[&'a News], provider: &EmbeddingProvider) -> Result<&'a News> {
    let index = SimilarityIndex::build(target_news, provider)?;
    Ok(target_news[index.most_similar(&provider.embed_title(title))])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Domain;
    use proptest::prelude::*;
    use rand::Rng;

    fn file_provider(entries: &[(&str, Vec<f64>)]) -> EmbeddingProvider {
        let dim = entries[0].1.len();
        EmbeddingProvider::File { dim, vectors: entries.iter().map(|(w, v)| (w.to_string(), v.clone())).collect() }
    }

    fn news(id: &str, title: &str) -> News {
        News::new(id, Domain::Target, title)
    }

    #[test]
    fn mean_of_token_vectors() {
        let p = file_provider(&[("a", vec![1.0, 2.0]), ("b", vec![3.0, -2.0])]);
        assert_eq!(p.embed_title("a"), vec![1.0, 2.0]);
        assert_eq!(p.embed_title("a b"), vec![2.0, 0.0]);
        // Unknown tokens count as zeros.
        assert_eq!(p.embed_title("a zzz"), vec![0.5, 1.0]);
        assert_eq!(p.embed_title(""), vec![0.0, 0.0]);
    }

    #[test]
    fn hash_fallback_is_deterministic_unit() {
        let p = EmbeddingProvider::from_spec(&EmbeddingProviderSpec::HashFallback { dim: 16, seed: 3 }).unwrap();
        let a = p.embed_title("same title");
        assert_eq!(a, p.embed_title("same title"));
        let v = p.token_vector("word").unwrap();
        assert!((dot(&v, &v) - 1.0).abs() < 1e-12);
        assert_ne!(p.token_vector("word"), p.token_vector("other"));
    }

    #[test]
    fn missing_vector_file_is_config_error() {
        let spec = EmbeddingProviderSpec::File { path: "/no/such/vectors.txt".into(), dim: 4 };
        assert!(matches!(EmbeddingProvider::from_spec(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn self_match_singleton_and_empty() {
        let p = EmbeddingProvider::Hash { dim: 32, seed: 0 };
        let targets = [news("T1", "red apple pie"), news("T2", "stock market falls"), news("T3", "blue sky")];
        let refs: Vec<&News> = targets.iter().collect();
        assert_eq!(find_most_similar("stock market falls", &refs, &p).unwrap().news_id, "T2");
        assert_eq!(find_most_similar("anything", &refs[2..], &p).unwrap().news_id, "T3");
        assert!(matches!(find_most_similar("x", &[], &p), Err(Error::Contract(_))));
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let p = file_provider(&[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]);
        let targets = [news("T9", "a"), news("T2", "a a"), news("T5", "b")];
        let refs: Vec<&News> = targets.iter().collect();
        assert_eq!(find_most_similar("a", &refs, &p).unwrap().news_id, "T2");
    }

    #[test]
    fn matches_brute_force_on_random_titles() {
        let p = EmbeddingProvider::Hash { dim: 8, seed: 11 };
        let words = ["w0", "w1", "w2", "w3", "w4", "w5"];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..50 {
            let title = |rng: &mut ChaCha8Rng| {
                (0..3).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
            };
            let targets: Vec<News> = (0..10).map(|i| news(&format!("T{trial}_{i}"), &title(&mut rng))).collect();
            let refs: Vec<&News> = targets.iter().collect();
            let q = title(&mut rng);
            let qv = p.embed_title(&q);
            let cos = |v: &[f64]| dot(&qv, v) / (dot(&qv, &qv).sqrt() * dot(v, v).sqrt());
            let best = targets
                .iter()
                .map(|n| (cos(&p.embed_title(&n.title)), n))
                .fold(None::<(f64, &News)>, |acc, (s, n)| match acc {
                    Some((bs, bn)) if bs > s + 1e-12 || ((bs - s).abs() <= 1e-12 && bn.news_id < n.news_id) => {
                        Some((bs, bn))
                    }
                    _ => Some((s, n)),
                })
                .unwrap()
                .1;
            assert_eq!(find_most_similar(&q, &refs, &p).unwrap().news_id, best.news_id);
        }
    }

    proptest! {
        #[test]
        fn invariant_under_positive_rescaling(scale in 0.01f64..100.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let entries: Vec<(String, Vec<f64>)> =
                (0..6).map(|i| (format!("w{i}"), (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
            let scaled: Vec<(String, Vec<f64>)> =
                entries.iter().map(|(w, v)| (w.clone(), v.iter().map(|x| x * scale).collect())).collect();
            let p1 = EmbeddingProvider::File { dim: 4, vectors: entries.into_iter().collect() };
            let p2 = EmbeddingProvider::File { dim: 4, vectors: scaled.into_iter().collect() };
            let targets = [news("T1", "w0 w1"), news("T2", "w2 w3"), news("T3", "w4 w5"), news("T4", "w1 w4")];
            let refs: Vec<&News> = targets.iter().collect();
            prop_assert_eq!(
                &find_most_similar("w0 w5", &refs, &p1).unwrap().news_id,
                &find_most_similar("w0 w5", &refs, &p2).unwrap().news_id
            );
        }
    }
}
