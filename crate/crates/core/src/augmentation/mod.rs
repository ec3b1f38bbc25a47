//! Cross-domain extension of source news and random masking over the
//! resulting title forms.

mod embed;
mod translate;

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use embed::{find_most_similar, EmbeddingProvider, EmbeddingProviderSpec, SimilarityIndex};
pub use translate::{parse_lexicon, title_key, ExternalTranslator, Translator, TranslatorSpec};

use crate::data::News;
use crate::error::{Error, Result};
use crate::text::{Tokenizer, Vocabulary};

/// Title texts of one source news: original, translation and (optionally)
/// the most similar target-domain news.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedTitles {
    pub news_id: String,
    pub original: String,
    pub translation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similar: Option<SimilarNews>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarNews {
    pub news_id: String,
    pub title: String,
}

impl AugmentedTitles {
    pub fn texts(&self) -> Vec<&str> {
        let mut out = vec![self.original.as_str(), self.translation.as_str()];
        out.extend(self.similar.as_ref().map(|s| s.title.as_str()));
        out
    }

    pub fn tokenize(&self, vocab: &Vocabulary, tokenizer: &Tokenizer, max_title_len: usize) -> AugmentedNewsSet {
        let forms = self
            .texts()
            .into_iter()
            .map(|t| {
                let ids = vocab.lookup(&tokenizer.tokenize(t), max_title_len);
                // An empty translation still needs one token to encode.
                if ids.is_empty() { vec![crate::text::UNK] } else { ids }
            })
            .collect();
        AugmentedNewsSet { news_id: self.news_id.clone(), forms }
    }
}

/// Token-index forms of one source news; `forms[0]` is the original title.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedNewsSet {
    pub news_id: String,
    pub forms: Vec<Vec<usize>>,
}

/// Translates every source title (in batches) and, when `use_target_news`,
/// retrieves its most similar target news. Runs once, before training.
pub fn augment_titles(
    source_news: &[&News],
    translator: &Translator,
    provider: &EmbeddingProvider,
    target_news: &[&News],
    use_target_news: bool,
) -> Result<Vec<AugmentedTitles>> {
    let titles: Vec<String> = source_news.iter().map(|n| n.title.clone()).collect();
    let translations = translator.translate_batch(&titles)?;
    let index = if use_target_news { Some(SimilarityIndex::build(target_news, provider)?) } else { None };
    let pairs: Vec<(&&News, String)> = source_news.iter().zip(translations).collect();
    Ok(crate::parallel::map(&pairs, |(n, translation)| {
        let similar = index.as_ref().map(|idx| {
            let t = target_news[idx.most_similar(&provider.embed_title(&n.title))];
            SimilarNews { news_id: t.news_id.clone(), title: t.title.clone() }
        });
        AugmentedTitles {
            news_id: n.news_id.clone(),
            original: n.title.clone(),
            translation: translation.clone(),
            similar,
        }
    }))
}

/// Builds A_d for a single source news.
#[allow(clippy::too_many_arguments)]
pub fn build_augmented_set(
    d: &News,
    translator: &Translator,
    provider: &EmbeddingProvider,
    target_news: &[&News],
    use_target_news: bool,
    vocab: &Vocabulary,
    tokenizer: &Tokenizer,
    max_title_len: usize,
) -> Result<AugmentedNewsSet> {
    let titles = augment_titles(&[d], translator, provider, target_news, use_target_news)?;
    Ok(titles[0].tokenize(vocab, tokenizer, max_title_len))
}

/// Selection probabilities over title forms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskWeights {
    #[default]
    Uniform,
    /// Relative weights for [original, translation, similar]; forms beyond the
    /// set's length are ignored.
    Weighted(Vec<f64>),
}

impl MaskWeights {
    pub fn validate(&self) -> Result<()> {
        if let MaskWeights::Weighted(w) = self {
            if w.is_empty() || w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::config("mask weights must be non-negative with a positive sum"));
            }
        }
        Ok(())
    }
}

/// Γ: picks one form, uniformly.
pub fn random_mask<'a, R: Rng + ?Sized>(set: &'a AugmentedNewsSet, rng: &mut R) -> &'a [usize] {
    &set.forms[rng.random_range(0..set.forms.len())]
}

pub fn random_mask_weighted<'a, R: Rng + ?Sized>(
    set: &'a AugmentedNewsSet,
    weights: &MaskWeights,
    rng: &mut R,
) -> Result<&'a [usize]> {
    Ok(&set.forms[choose_form(set.forms.len(), weights, rng)?])
}

/// Index of the form Γ picks among `n` forms.
pub fn choose_form<R: Rng + ?Sized>(n: usize, weights: &MaskWeights, rng: &mut R) -> Result<usize> {
    match weights {
        MaskWeights::Uniform => Ok(rng.random_range(0..n)),
        MaskWeights::Weighted(w) => {
            let w: Vec<f64> = (0..n).map(|i| w.get(i).copied().unwrap_or(0.0)).collect();
            let dist = WeightedIndex::new(&w).map_err(|e| Error::config(format!("mask weights: {e}")))?;
            Ok(dist.sample(rng))
        }
    }
}

/// Writes the augmented-set cache: one JSON record per source news.
pub fn save_cache(path: &Path, titles: &[AugmentedTitles]) -> Result<()> {
    crate::data::write_jsonl(path, titles)
}

pub fn load_cache(path: &Path) -> Result<Vec<AugmentedTitles>> {
    crate::data::read_jsonl(path)
}
