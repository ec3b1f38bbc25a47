//! Synthetic bilingual corpus.
//!
//! Two pseudo-languages over disjoint alphabets share `topics` topics. Each
//! source topic word has a 1:1 translation; target titles additionally use
//! target-only topic words (content shift). Users follow a persona — an
//! unordered pair of preferred topics — and a fraction of personas is held
//! out: those appear in the source domain and in the target test split only.
//! The generator also emits a word lexicon and per-word "multilingual"
//! vectors (topic centroid plus noise) standing in for a pretrained encoder.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::types::{Dataset, Domain, Impression, News, Split, User};
use crate::error::{Error, Result};

pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const PROVIDER_VECTORS_FILE: &str = "provider_vectors.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub topics: usize,
    pub source_news: usize,
    pub target_news: usize,
    pub source_users: usize,
    /// Pool from which few-shot target training users are drawn.
    pub target_train_users: usize,
    pub target_valid_users: usize,
    pub target_test_users: usize,
    pub history_len: usize,
    pub train_impressions_per_user: usize,
    pub train_negatives: usize,
    pub eval_negatives: usize,
    /// Shared (translatable) words per topic and language.
    pub topic_words: usize,
    /// Target-only words per topic.
    pub novel_words: usize,
    pub filler_words: usize,
    pub title_len: usize,
    pub topic_slots: usize,
    /// Probability that a target topic slot uses a target-only word.
    pub target_novel_ratio: f64,
    /// Probability that a click follows the persona.
    pub click_purity: f64,
    pub heldout_patterns: usize,
    pub vector_dim: usize,
    pub vector_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            topics: 8,
            source_news: 2000,
            target_news: 2000,
            source_users: 1000,
            target_train_users: 200,
            target_valid_users: 100,
            target_test_users: 300,
            history_len: 10,
            train_impressions_per_user: 2,
            train_negatives: 4,
            eval_negatives: 9,
            topic_words: 60,
            novel_words: 30,
            filler_words: 200,
            title_len: 8,
            topic_slots: 4,
            target_novel_ratio: 0.5,
            click_purity: 0.9,
            heldout_patterns: 7,
            vector_dim: 32,
            vector_noise: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topics < 2 {
            return Err(Error::config("synthetic corpus needs at least 2 topics"));
        }
        let patterns = self.topics * (self.topics - 1) / 2;
        if self.heldout_patterns >= patterns {
            return Err(Error::config(format!(
                "heldout_patterns must leave at least one of the {patterns} persona patterns for target training"
            )));
        }
        if self.source_news < self.topics || self.target_news < self.topics {
            return Err(Error::config("every topic needs at least one news per domain"));
        }
        if self.topic_slots == 0 || self.topic_slots > self.title_len {
            return Err(Error::config("topic_slots must be in 1..=title_len"));
        }
        if self.topic_words == 0 || (self.title_len > self.topic_slots && self.filler_words == 0) {
            return Err(Error::config("word lists must not be empty"));
        }
        if self.target_novel_ratio > 0.0 && self.novel_words == 0 {
            return Err(Error::config("target_novel_ratio > 0 requires novel_words > 0"));
        }
        for (name, p) in [("target_novel_ratio", self.target_novel_ratio), ("click_purity", self.click_purity)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must be within [0, 1]")));
            }
        }
        if self.train_negatives == 0 || self.eval_negatives == 0 || self.vector_dim == 0 {
            return Err(Error::config("negatives and vector_dim must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    /// Source word → target word, in generation order.
    pub lexicon: Vec<(String, String)>,
    pub vectors: Vec<(String, Vec<f64>)>,
    /// Topic of every topic word of either language; filler words are absent.
    pub word_topics: HashMap<String, usize>,
    /// Persona patterns held out of target training and validation.
    pub heldout: Vec<(usize, usize)>,
}

impl SyntheticCorpus {
    /// Writes the canonical dataset plus `lexicon.tsv` and
    /// `provider_vectors.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        self.dataset.write_dir(dir)?;
        let mut lex = std::io::BufWriter::new(std::fs::File::create(dir.join(LEXICON_FILE))?);
        for (s, t) in &self.lexicon {
            writeln!(lex, "{s}\t{t}")?;
        }
        lex.flush()?;
        let mut vec = std::io::BufWriter::new(std::fs::File::create(dir.join(PROVIDER_VECTORS_FILE))?);
        for (w, v) in &self.vectors {
            write!(vec, "{w}")?;
            for x in v {
                write!(vec, " {x}")?;
            }
            writeln!(vec)?;
        }
        vec.flush()?;
        Ok(())
    }
}

struct Lang {
    topic: Vec<Vec<String>>,
    novel: Vec<Vec<String>>,
    filler: Vec<String>,
}

struct WordFactory {
    syllables: Vec<String>,
    used: HashSet<String>,
}

impl WordFactory {
    fn new(consonants: &str, vowels: &str) -> Self {
        let syllables = consonants
            .chars()
            .flat_map(|c| vowels.chars().map(move |v| format!("{c}{v}")))
            .collect();
        WordFactory { syllables, used: HashSet::new() }
    }

    fn word<R: Rng + ?Sized>(&mut self, rng: &mut R) -> String {
        loop {
            let w: String = (0..3).map(|_| self.syllables.choose(rng).expect("syllables").as_str()).collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

fn unit_gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x / norm).collect()
}

pub fn generate_synthetic_bilingual<R: Rng + ?Sized>(config: &SynthConfig, rng: &mut R) -> Result<SyntheticCorpus> {
    config.validate()?;
    let t = config.topics;

    // Disjoint alphabets keep the two vocabularies disjoint.
    let mut src_words = WordFactory::new("bdfgklmnprst", "aeiou");
    let mut tgt_words = WordFactory::new("cvwxzhjq", "aeiouy");
    let source = Lang {
        topic: (0..t).map(|_| src_words.words(config.topic_words, rng)).collect(),
        novel: vec![Vec::new(); t],
        filler: src_words.words(config.filler_words, rng),
    };
    let target = Lang {
        topic: (0..t).map(|_| tgt_words.words(config.topic_words, rng)).collect(),
        novel: (0..t).map(|_| tgt_words.words(config.novel_words, rng)).collect(),
        filler: tgt_words.words(config.filler_words, rng),
    };

    let mut lexicon = Vec::new();
    let mut word_topics = HashMap::new();
    for k in 0..t {
        for (s, w) in source.topic[k].iter().zip(&target.topic[k]) {
            lexicon.push((s.clone(), w.clone()));
            word_topics.insert(s.clone(), k);
            word_topics.insert(w.clone(), k);
        }
        for w in &target.novel[k] {
            word_topics.insert(w.clone(), k);
        }
    }
    for (s, w) in source.filler.iter().zip(&target.filler) {
        lexicon.push((s.clone(), w.clone()));
    }

    let centroids: Vec<Vec<f64>> = (0..t).map(|_| unit_gaussian(config.vector_dim, rng)).collect();
    let mut vectors = Vec::new();
    for lang in [&source, &target] {
        for k in 0..t {
            for w in lang.topic[k].iter().chain(&lang.novel[k]) {
                let noise = unit_gaussian(config.vector_dim, rng);
                let v = centroids[k].iter().zip(&noise).map(|(c, n)| c + config.vector_noise * n).collect();
                vectors.push((w.clone(), v));
            }
        }
        for w in &lang.filler {
            vectors.push((w.clone(), unit_gaussian(config.vector_dim, rng)));
        }
    }

    // Personas: every unordered topic pair; the first `heldout_patterns`
    // after a shuffle are withheld from target training and validation.
    let mut patterns: Vec<(usize, usize)> =
        (0..t).flat_map(|a| ((a + 1)..t).map(move |b| (a, b))).collect();
    patterns.shuffle(rng);
    let heldout: Vec<(usize, usize)> = patterns[..config.heldout_patterns].to_vec();
    let seen: Vec<(usize, usize)> = patterns[config.heldout_patterns..].to_vec();

    let mut dataset = Dataset { news: Vec::new(), users: Vec::new(), impressions: Vec::new() };
    let src_by_topic = emit_news(&mut dataset, Domain::Source, &source, config, rng);
    let tgt_by_topic = emit_news(&mut dataset, Domain::Target, &target, config, rng);

    let mut gen = UserGen { config, dataset: &mut dataset, next_impression: 0 };
    let mut all_patterns = heldout.clone();
    all_patterns.extend(&seen);
    gen.users(Domain::Source, "su", 0, config.source_users, &all_patterns, &src_by_topic, Split::Train, rng);
    let mut offset = 0;
    for (n, pats, split) in [
        (config.target_train_users, &seen, Split::Train),
        (config.target_valid_users, &seen, Split::Valid),
        (config.target_test_users, &heldout, Split::Test),
    ] {
        // With no held-out pattern configured the test split falls back to
        // the seen ones.
        let pats = if pats.is_empty() { &seen } else { pats };
        gen.users(Domain::Target, "tu", offset, n, pats, &tgt_by_topic, split, rng);
        offset += n;
    }

    Ok(SyntheticCorpus { dataset, lexicon, vectors, word_topics, heldout })
}

fn emit_news<R: Rng + ?Sized>(
    dataset: &mut Dataset,
    domain: Domain,
    lang: &Lang,
    config: &SynthConfig,
    rng: &mut R,
) -> Vec<Vec<String>> {
    let (count, prefix, novel_ratio) = match domain {
        Domain::Source => (config.source_news, "S", 0.0),
        Domain::Target => (config.target_news, "T", config.target_novel_ratio),
    };
    let mut by_topic = vec![Vec::new(); config.topics];
    for i in 0..count {
        // Round-robin topics keep every topic populated.
        let topic = i % config.topics;
        let mut words: Vec<&str> = (0..config.topic_slots)
            .map(|_| {
                let list = if rng.random_bool(novel_ratio) { &lang.novel[topic] } else { &lang.topic[topic] };
                list.choose(rng).expect("non-empty").as_str()
            })
            .collect();
        words.extend((config.topic_slots..config.title_len).map(|_| lang.filler.choose(rng).expect("filler").as_str()));
        words.shuffle(rng);
        let id = format!("{prefix}{:05}", i + 1);
        let mut news = News::new(id.clone(), domain, words.join(" "));
        news.topic = Some(topic);
        news.category = Some(format!("topic{topic}"));
        news.published = Some(format!("2019-11-{:02}", 1 + i % 12));
        by_topic[topic].push(id);
        dataset.news.push(news);
    }
    by_topic
}

struct UserGen<'c, 'd> {
    config: &'c SynthConfig,
    dataset: &'d mut Dataset,
    next_impression: usize,
}

impl UserGen<'_, '_> {
    #[allow(clippy::too_many_arguments)]
    fn users<R: Rng + ?Sized>(
        &mut self,
        domain: Domain,
        prefix: &str,
        offset: usize,
        count: usize,
        patterns: &[(usize, usize)],
        by_topic: &[Vec<String>],
        split: Split,
        rng: &mut R,
    ) {
        let cfg = self.config;
        let all: Vec<&String> = by_topic.iter().flatten().collect();
        for u in 0..count {
            let user_id = format!("{prefix}{:05}", offset + u + 1);
            let persona = *patterns.choose(rng).expect("patterns");
            let mut clicked = BTreeSet::new();
            let mut history = Vec::new();
            let max_history = cfg.history_len.min(all.len().saturating_sub(1));
            while history.len() < max_history {
                let id = self.click(persona, by_topic, rng);
                if clicked.insert(id.clone()) {
                    history.push(id);
                }
            }
            let (n_impressions, n_negatives, day) = match split {
                Split::Train => (cfg.train_impressions_per_user, cfg.train_negatives, 12),
                Split::Valid => (1, cfg.eval_negatives, 13),
                Split::Test => (1, cfg.eval_negatives, 14),
            };
            for _ in 0..n_impressions {
                let positive = loop {
                    let id = self.click(persona, by_topic, rng);
                    if !clicked.contains(&id) {
                        break id;
                    }
                    if clicked.len() + 1 >= all.len() {
                        break id;
                    }
                };
                let mut candidates = vec![(positive.clone(), 1u8)];
                let mut taken: HashSet<&String> = HashSet::new();
                taken.insert(&positive);
                let pool = all.iter().filter(|id| !clicked.contains(**id) && **id != &positive).count();
                while candidates.len() <= n_negatives.min(pool) {
                    let id = *all.choose(rng).expect("news");
                    if !clicked.contains(id) && taken.insert(id) {
                        candidates.push((id.clone(), 0));
                    }
                }
                candidates.shuffle(rng);
                self.next_impression += 1;
                self.dataset.impressions.push(Impression {
                    impression_id: Some(format!("{}{}", &prefix[..1], self.next_impression)),
                    user_id: user_id.clone(),
                    domain,
                    time: Some(format!("2019-11-{day:02}")),
                    candidates: candidates.iter().map(|(c, _)| c.clone()).collect(),
                    labels: candidates.iter().map(|(_, l)| *l).collect(),
                    split,
                    history: None,
                });
                clicked.insert(positive);
            }
            self.dataset.users.push(User { user_id, domain, history });
        }
    }

    fn click<R: Rng + ?Sized>(&self, persona: (usize, usize), by_topic: &[Vec<String>], rng: &mut R) -> String {
        let topic = if rng.random_bool(self.config.click_purity) {
            if rng.random_bool(0.5) { persona.0 } else { persona.1 }
        } else {
            rng.random_range(0..by_topic.len())
        };
        by_topic[topic].choose(rng).expect("topic news").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> SynthConfig {
        SynthConfig {
            source_news: 80,
            target_news: 64,
            source_users: 30,
            target_train_users: 10,
            target_valid_users: 5,
            target_test_users: 12,
            ..SynthConfig::default()
        }
    }

    fn generate(cfg: &SynthConfig, seed: u64) -> SyntheticCorpus {
        generate_synthetic_bilingual(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn counts_match_config() {
        let cfg = small();
        let c = generate(&cfg, 1);
        c.dataset.validate().unwrap();
        assert_eq!(c.dataset.news_in(Domain::Source).count(), 80);
        assert_eq!(c.dataset.news_in(Domain::Target).count(), 64);
        assert_eq!(c.dataset.users_in(Domain::Source).count(), 30);
        assert_eq!(c.dataset.users_in(Domain::Target).count(), 27);
        for u in &c.dataset.users {
            assert_eq!(u.history.len(), cfg.history_len);
        }
    }

    #[test]
    fn fewer_than_two_topics_is_a_config_error() {
        let cfg = SynthConfig { topics: 1, heldout_patterns: 0, ..small() };
        let r = generate_synthetic_bilingual(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn vocabularies_are_disjoint() {
        let c = generate(&small(), 2);
        let words = |d: Domain| -> HashSet<String> {
            c.dataset.news_in(d).flat_map(|n| n.title.split(' ').map(str::to_string)).collect()
        };
        assert!(words(Domain::Source).is_disjoint(&words(Domain::Target)));
    }

    #[test]
    fn translation_preserves_topic_and_language() {
        let c = generate(&small(), 3);
        let lex: HashMap<&str, &str> = c.lexicon.iter().map(|(s, t)| (s.as_str(), t.as_str())).collect();
        let target_words: HashSet<&str> = c.dataset.news_in(Domain::Target).flat_map(|n| n.title.split(' ')).collect();
        let target_lexicon: HashSet<&str> = c.lexicon.iter().map(|(_, t)| t.as_str()).collect();
        for n in c.dataset.news_in(Domain::Source) {
            let translated: Vec<&str> = n.title.split(' ').map(|w| lex[w]).collect();
            assert!(translated.iter().all(|w| target_lexicon.contains(w)));
            let topics: Vec<usize> = translated.iter().filter_map(|w| c.word_topics.get(*w).copied()).collect();
            assert!(!topics.is_empty());
            assert!(topics.iter().all(|&k| Some(k) == n.topic));
        }
        assert!(!target_words.is_empty());
    }

    #[test]
    fn heldout_patterns_only_in_source_and_target_test() {
        let cfg = SynthConfig { click_purity: 1.0, ..small() };
        let c = generate(&cfg, 4);
        let topic: HashMap<(Domain, &str), usize> =
            c.dataset.news.iter().map(|n| ((n.domain, n.news_id.as_str()), n.topic.unwrap())).collect();
        let heldout: HashSet<(usize, usize)> = c.heldout.iter().copied().collect();
        let split_of: HashMap<&str, Split> =
            c.dataset.impressions.iter().map(|i| (i.user_id.as_str(), i.split)).collect();
        let mut source_heldout = 0;
        for u in &c.dataset.users {
            let topics: BTreeSet<usize> = u.history.iter().map(|h| topic[&(u.domain, h.as_str())]).collect();
            let is_heldout = topics.len() == 2 && {
                let v: Vec<usize> = topics.into_iter().collect();
                heldout.contains(&(v[0], v[1]))
            };
            match (u.domain, split_of[u.user_id.as_str()]) {
                (Domain::Target, Split::Test) => assert!(is_heldout),
                (Domain::Target, _) => assert!(!is_heldout),
                (Domain::Source, _) => source_heldout += is_heldout as usize,
            }
        }
        assert!(source_heldout > 0);
    }

    #[test]
    fn impressions_have_one_positive() {
        let cfg = small();
        let c = generate(&cfg, 5);
        for imp in &c.dataset.impressions {
            assert_eq!(imp.labels.iter().filter(|&&l| l == 1).count(), 1);
            let expected = if imp.split == Split::Train { cfg.train_negatives } else { cfg.eval_negatives };
            assert_eq!(imp.candidates.len(), expected + 1);
        }
    }

    #[test]
    fn deterministic_and_writes_side_files() {
        let a = generate(&small(), 6);
        let b = generate(&small(), 6);
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.lexicon, b.lexicon);
        let dir = tempfile::tempdir().unwrap();
        a.write_dir(dir.path()).unwrap();
        assert_eq!(Dataset::read_dir(dir.path()).unwrap(), a.dataset);
        let lex = std::fs::read_to_string(dir.path().join(LEXICON_FILE)).unwrap();
        assert_eq!(lex.lines().count(), a.lexicon.len());
        assert!(dir.path().join(PROVIDER_VECTORS_FILE).exists());
    }
}
