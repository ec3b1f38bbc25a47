//! Token-level view of a dataset shared by training, evaluation and export.

use std::collections::HashMap;

use crate::augmentation::{AugmentedNewsSet, AugmentedTitles};
use crate::data::{Dataset, Domain, Impression};
use crate::error::{Error, Result};
use crate::text::{Tokenizer, Vocabulary, UNK};

/// Builds the shared vocabulary over every news title plus the translations
/// (and retrieved titles) of the augmented sets.
pub fn build_vocabulary(
    dataset: &Dataset,
    augmented: &[AugmentedTitles],
    tokenizer: &Tokenizer,
    min_count: usize,
) -> Vocabulary {
    let mut sequences: Vec<Vec<String>> = dataset.news.iter().map(|n| tokenizer.tokenize(&n.title)).collect();
    for a in augmented {
        sequences.push(tokenizer.tokenize(&a.translation));
    }
    Vocabulary::build(sequences.iter().map(|s| s.as_slice()), min_count)
}

#[derive(Clone, Debug)]
pub struct Corpus {
    ids: Vec<String>,
    domains: Vec<Domain>,
    tokens: Vec<Vec<usize>>,
    index: HashMap<(Domain, String), usize>,
    histories: HashMap<(Domain, String), Vec<usize>>,
    forms: HashMap<usize, Vec<Vec<usize>>>,
    classes: Vec<usize>,
    max_history_len: usize,
}

impl Corpus {
    /// Tokenizes every title. Alignment classes are the source news in
    /// dataset order; `augmented` must reference source news only.
    pub fn build(
        dataset: &Dataset,
        vocab: &Vocabulary,
        tokenizer: &Tokenizer,
        max_title_len: usize,
        max_history_len: usize,
        augmented: &[AugmentedNewsSet],
    ) -> Result<Self> {
        let mut c = Corpus {
            ids: Vec::with_capacity(dataset.news.len()),
            domains: Vec::with_capacity(dataset.news.len()),
            tokens: Vec::with_capacity(dataset.news.len()),
            index: HashMap::with_capacity(dataset.news.len()),
            histories: HashMap::new(),
            forms: HashMap::new(),
            classes: Vec::new(),
            max_history_len,
        };
        for n in &dataset.news {
            let i = c.ids.len();
            if c.index.insert((n.domain, n.news_id.clone()), i).is_some() {
                return Err(Error::contract(format!("duplicate {} news id {}", n.domain, n.news_id)));
            }
            let mut t = vocab.lookup(&tokenizer.tokenize(&n.title), max_title_len);
            if t.is_empty() {
                t.push(UNK);
            }
            c.ids.push(n.news_id.clone());
            c.domains.push(n.domain);
            c.tokens.push(t);
            if n.domain == Domain::Source {
                c.classes.push(i);
            }
        }
        for u in &dataset.users {
            let h = c.resolve(u.domain, &u.history)?;
            c.histories.insert((u.domain, u.user_id.clone()), h);
        }
        for a in augmented {
            let i = c
                .news_index(Domain::Source, &a.news_id)
                .ok_or_else(|| Error::contract(format!("augmented set for unknown source news {}", a.news_id)))?;
            if a.forms.is_empty() || a.forms.iter().any(|f| f.is_empty() || f.len() > max_title_len) {
                return Err(Error::contract(format!("augmented set for {} has an unusable form", a.news_id)));
            }
            c.forms.insert(i, a.forms.clone());
        }
        Ok(c)
    }

    fn resolve(&self, domain: Domain, ids: &[String]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.news_index(domain, id)
                    .ok_or_else(|| Error::contract(format!("unknown {domain} news {id}")))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn news_index(&self, domain: Domain, id: &str) -> Option<usize> {
        self.index.get(&(domain, id.to_string())).copied()
    }

    pub fn news_id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn domain(&self, i: usize) -> Domain {
        self.domains[i]
    }

    pub fn tokens(&self, i: usize) -> &[usize] {
        &self.tokens[i]
    }

    /// Augmented title forms of a source news, if any were built.
    pub fn forms(&self, i: usize) -> Option<&[Vec<usize>]> {
        self.forms.get(&i).map(Vec::as_slice)
    }

    pub fn has_forms(&self) -> bool {
        !self.forms.is_empty()
    }

    /// News indices of each alignment class, i.e. of every source news.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn class_ids(&self) -> Vec<String> {
        self.classes.iter().map(|&i| self.ids[i].clone()).collect()
    }

    pub fn news_in(&self, domain: Domain) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.domains[i] == domain).collect()
    }

    /// The reading history behind an impression: its own snapshot when it
    /// carries one, else the user's, keeping the most recent
    /// `max_history_len` entries.
    pub fn history(&self, imp: &Impression) -> Result<Vec<usize>> {
        let full = match &imp.history {
            Some(h) => self.resolve(imp.domain, h)?,
            None => self.histories.get(&(imp.domain, imp.user_id.clone())).cloned().unwrap_or_default(),
        };
        let skip = full.len().saturating_sub(self.max_history_len);
        Ok(full[skip..].to_vec())
    }

    pub fn candidates(&self, imp: &Impression) -> Result<Vec<usize>> {
        self.resolve(imp.domain, &imp.candidates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{News, Split, User};

    fn dataset() -> Dataset {
        Dataset {
            news: vec![
                News::new("N1", Domain::Source, "a b"),
                News::new("N2", Domain::Source, "c"),
                News::new("N1", Domain::Target, "x y z"),
            ],
            users: vec![User { user_id: "U".into(), domain: Domain::Source, history: vec!["N1".into(), "N2".into()] }],
            impressions: vec![Impression {
                impression_id: None,
                user_id: "U".into(),
                domain: Domain::Source,
                time: None,
                candidates: vec!["N2".into()],
                labels: vec![1],
                split: Split::Train,
                history: None,
            }],
        }
    }

    #[test]
    fn domains_are_separate_namespaces() {
        let d = dataset();
        let tok = Tokenizer::Whitespace;
        let vocab = build_vocabulary(&d, &[], &tok, 1);
        let c = Corpus::build(&d, &vocab, &tok, 2, 1, &[]).unwrap();
        assert_eq!(c.news_index(Domain::Target, "N1"), Some(2));
        assert_eq!(c.tokens(2).len(), 2, "truncated to max_title_len");
        assert_eq!(c.classes(), &[0, 1]);
        // Only the most recent history entry is kept.
        assert_eq!(c.history(&d.impressions[0]).unwrap(), vec![1]);
    }

    #[test]
    fn augmented_sets_must_reference_source_news() {
        let d = dataset();
        let tok = Tokenizer::Whitespace;
        let vocab = build_vocabulary(&d, &[], &tok, 1);
        let bad = AugmentedNewsSet { news_id: "nope".into(), forms: vec![vec![2]] };
        assert!(Corpus::build(&d, &vocab, &tok, 30, 50, &[bad]).is_err());
    }
}
