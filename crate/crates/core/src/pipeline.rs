//! End-to-end runs driven by a [`RunConfig`]: data loading, augmentation,
//! training, evaluation, ablation and embedding export, with a fixed output
//! directory layout.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augmentation::{
    augment_titles, load_cache, save_cache, AugmentedNewsSet, AugmentedTitles, EmbeddingProvider,
    EmbeddingProviderSpec, Translator, TranslatorSpec,
};
use crate::corpus::{build_vocabulary, Corpus};
use crate::data::{few_shot_sample, published_before, Dataset, Domain, Impression, News, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::evaluation::{encode_all, evaluate, MetricReport};
use crate::model::Checkpoint;
use crate::text::{BpeMerges, Tokenizer, Vocabulary};
use crate::training::{stream_rng, train, TrainConfig, TrainInputs, TrainOutcome, TrainReport};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "NEWSBRIDGE_CONFIG";

pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const RUN_LOG_FILE: &str = "run_log.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.tsv";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const AUGMENTED_FILE: &str = "augmented.jsonl";

const FEW_SHOT_STREAM: u64 = 3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TokenizerSpec {
    #[default]
    Whitespace,
    Bpe {
        merges: PathBuf,
    },
}

impl TokenizerSpec {
    pub fn build(&self) -> Result<Tokenizer> {
        Ok(match self {
            TokenizerSpec::Whitespace => Tokenizer::Whitespace,
            TokenizerSpec::Bpe { merges } => Tokenizer::Bpe(BpeMerges::from_file(merges)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub few_shot_users: usize,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    /// Canonical dataset directories, merged in order.
    pub datasets: Vec<PathBuf>,
    /// Reuse (or create) this augmented-set cache instead of the one in `out`.
    pub augmented_cache: Option<PathBuf>,
    /// Target news published on or after this date are never used for
    /// augmentation. Defaults to the earliest target test impression.
    pub test_date: Option<String>,
    pub min_count: usize,
    pub tokenizer: TokenizerSpec,
    pub translator: TranslatorSpec,
    pub embeddings: EmbeddingProviderSpec,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            few_shot_users: 0,
            out: PathBuf::from("runs/default"),
            jobs: None,
            datasets: Vec::new(),
            augmented_cache: None,
            test_date: None,
            min_count: 1,
            tokenizer: TokenizerSpec::default(),
            translator: TranslatorSpec::default(),
            embeddings: EmbeddingProviderSpec::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// The run seed drives training; everything else derives streams from it.
    pub fn resolved(mut self) -> Self {
        self.train.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        for d in &self.datasets {
            if !d.is_dir() {
                return Err(Error::config(format!("dataset directory {} does not exist", d.display())));
            }
        }
        if let TranslatorSpec::Lexicon { path } = &self.translator {
            if !path.is_file() {
                return Err(Error::config(format!("lexicon {} does not exist", path.display())));
            }
        }
        if let EmbeddingProviderSpec::File { path, .. } = &self.embeddings {
            if !path.is_file() {
                return Err(Error::config(format!("embedding file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CONFIG_ECHO_FILE), self.to_toml())?;
        Ok(())
    }

    pub fn load_datasets(&self) -> Result<Dataset> {
        if self.datasets.is_empty() {
            return Err(Error::config("no dataset directories configured"));
        }
        let mut out = Dataset::default();
        for d in &self.datasets {
            out = out.merge(Dataset::read_dir(d)?);
        }
        out.validate()?;
        Ok(out)
    }
}

/// Impressions by role. Few-shot target users are drawn from the target
/// training pool.
pub struct Splits<'a> {
    pub source_train: Vec<&'a Impression>,
    pub target_train: Vec<&'a Impression>,
    pub valid: Vec<&'a Impression>,
    pub test: Vec<&'a Impression>,
    pub few_shot_users: Vec<String>,
}

pub fn split_impressions<'a>(dataset: &'a Dataset, few_shot_users: usize, seed: u64) -> Splits<'a> {
    let of = |domain: Domain, split: Split| -> Vec<&'a Impression> {
        dataset.impressions.iter().filter(|i| i.domain == domain && i.split == split).collect()
    };
    let pool = of(Domain::Target, Split::Train);
    let mut seen = HashSet::new();
    let pool_users: Vec<String> =
        pool.iter().filter(|i| seen.insert(i.user_id.as_str())).map(|i| i.user_id.clone()).collect();
    let chosen = few_shot_sample(&pool_users, few_shot_users, &mut stream_rng(seed, FEW_SHOT_STREAM));
    let chosen_set: HashSet<&str> = chosen.iter().map(String::as_str).collect();
    Splits {
        source_train: of(Domain::Source, Split::Train),
        target_train: pool.into_iter().filter(|i| chosen_set.contains(i.user_id.as_str())).collect(),
        valid: of(Domain::Target, Split::Valid),
        test: of(Domain::Target, Split::Test),
        few_shot_users: chosen,
    }
}

/// Target news eligible for retrieval: published before the test date when
/// both are known.
pub fn retrieval_pool<'a>(dataset: &'a Dataset, test_date: Option<&str>) -> Result<Vec<&'a News>> {
    let earliest_test = dataset
        .impressions_in(Domain::Target)
        .filter(|i| i.split == Split::Test)
        .filter_map(|i| i.time.as_deref())
        .filter_map(|t| crate::data::parse_timestamp(t).map(|v| (v, t)))
        .min()
        .map(|(_, t)| t.to_string());
    let cutoff = test_date.map(str::to_string).or(earliest_test);
    match cutoff {
        Some(c) => published_before(dataset.news_in(Domain::Target), &c),
        None => Ok(dataset.news_in(Domain::Target).collect()),
    }
}

/// Cross-domain extension of every source news. The retrieved form is
/// included whenever `with_target` holds and target news exist, so one
/// cache serves every ablation variant.
pub fn augment(cfg: &RunConfig, dataset: &Dataset, with_target: bool) -> Result<Vec<AugmentedTitles>> {
    let translator = Translator::from_spec(&cfg.translator)?;
    let provider = EmbeddingProvider::from_spec(&cfg.embeddings)?;
    let source: Vec<&News> = dataset.news_in(Domain::Source).collect();
    let pool = retrieval_pool(dataset, cfg.test_date.as_deref())?;
    augment_titles(&source, &translator, &provider, &pool, with_target && !pool.is_empty())
}

/// Loads the configured augmented-set cache or builds (and stores) it.
pub fn augment_cached(cfg: &RunConfig, dataset: &Dataset, cache: &Path) -> Result<Vec<AugmentedTitles>> {
    if cache.is_file() {
        log::info!("reusing augmented sets from {}", cache.display());
        return load_cache(cache);
    }
    let titles = augment(cfg, dataset, true)?;
    if let Some(dir) = cache.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_cache(cache, &titles)?;
    Ok(titles)
}

/// Vocabulary, tokenized corpus and forms, ready for training.
pub struct Prepared {
    pub vocab: Vocabulary,
    pub corpus: Corpus,
    pub tokenizer: Tokenizer,
}

pub fn prepare(cfg: &RunConfig, dataset: &Dataset, titles: &[AugmentedTitles]) -> Result<Prepared> {
    let tokenizer = cfg.tokenizer.build()?;
    let vocab = build_vocabulary(dataset, titles, &tokenizer, cfg.min_count);
    let model = &cfg.train.model;
    let sets: Vec<AugmentedNewsSet> = titles.iter().map(|t| t.tokenize(&vocab, &tokenizer, model.max_title_len)).collect();
    let corpus = Corpus::build(dataset, &vocab, &tokenizer, model.max_title_len, model.max_history_len, &sets)?;
    Ok(Prepared { vocab, corpus, tokenizer })
}

/// Trains on an in-memory dataset and evaluates the selected model on the
/// target test split.
pub fn train_and_evaluate(
    cfg: &RunConfig,
    dataset: &Dataset,
    titles: &[AugmentedTitles],
) -> Result<(Prepared, TrainOutcome, MetricReport)> {
    let prepared = prepare(cfg, dataset, titles)?;
    let splits = split_impressions(dataset, cfg.few_shot_users, cfg.seed);
    let inputs = TrainInputs {
        corpus: &prepared.corpus,
        vocab_size: prepared.vocab.len(),
        source_train: splits.source_train,
        target_train: splits.target_train,
        valid: splits.valid,
    };
    let outcome = train(&inputs, &cfg.train)?;
    let report = evaluate(&outcome.best, &prepared.corpus, &splits.test, false)?;
    Ok((prepared, outcome, report))
}

fn config_echo(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("run config serializes")
}

/// `train`: writes the config echo, augmented cache, vocabulary, best
/// checkpoint and run log into `cfg.out`.
pub fn run_train(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate()?;
    cfg.write_echo(&cfg.out)?;
    let dataset = cfg.load_datasets()?;
    let needs_forms = cfg.train.use_random_mask || cfg.train.use_news_align;
    let titles = if needs_forms {
        let cache = cfg.augmented_cache.clone().unwrap_or_else(|| cfg.out.join(AUGMENTED_FILE));
        augment_cached(cfg, &dataset, &cache)?
    } else {
        Vec::new()
    };
    let prepared = prepare(cfg, &dataset, &titles)?;
    prepared.vocab.save(&cfg.out.join(VOCAB_FILE))?;
    let splits = split_impressions(&dataset, cfg.few_shot_users, cfg.seed);
    log::info!(
        "training on {} source and {} target impressions ({} few-shot users), validating on {}",
        splits.source_train.len(),
        splits.target_train.len(),
        splits.few_shot_users.len(),
        splits.valid.len()
    );
    let inputs = TrainInputs {
        corpus: &prepared.corpus,
        vocab_size: prepared.vocab.len(),
        source_train: splits.source_train,
        target_train: splits.target_train,
        valid: splits.valid,
    };
    let outcome = train(&inputs, &cfg.train)?;
    let checkpoint_path = cfg.out.join(CHECKPOINT_FILE);
    Checkpoint {
        params: outcome.best,
        vocab_hash: prepared.vocab.hash(),
        align_classes: if outcome.last.align_head.is_some() { prepared.corpus.class_ids() } else { Vec::new() },
        config_echo: config_echo(cfg),
    }
    .save(&checkpoint_path)?;
    let mut report = outcome.report;
    report.best_checkpoint = Some(checkpoint_path.display().to_string());
    write_json(&cfg.out.join(RUN_LOG_FILE), &report)?;
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Loads the vocabulary next to `checkpoint` and the checkpoint itself,
/// checking that they belong together.
fn load_trained(cfg: &RunConfig, checkpoint: &Path) -> Result<(Vocabulary, Checkpoint)> {
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    let vocab = Vocabulary::load(&dir.join(VOCAB_FILE)).or_else(|_| Vocabulary::load(&cfg.out.join(VOCAB_FILE)))?;
    let ckpt = Checkpoint::load(checkpoint, Some(&vocab.hash()))?;
    Ok((vocab, ckpt))
}

fn corpus_for(cfg: &RunConfig, dataset: &Dataset, vocab: &Vocabulary, ckpt: &Checkpoint) -> Result<Corpus> {
    let tokenizer = cfg.tokenizer.build()?;
    let m = &ckpt.params.config;
    Corpus::build(dataset, vocab, &tokenizer, m.max_title_len, m.max_history_len, &[])
}

/// `eval`: scores the target test split and writes the metric report.
pub fn run_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<MetricReport> {
    cfg.validate()?;
    cfg.write_echo(&cfg.out)?;
    let dataset = cfg.load_datasets()?;
    let (vocab, ckpt) = load_trained(cfg, checkpoint)?;
    let corpus = corpus_for(cfg, &dataset, &vocab, &ckpt)?;
    let splits = split_impressions(&dataset, cfg.few_shot_users, cfg.seed);
    let report = evaluate(&ckpt.params, &corpus, &splits.test, false)?;
    std::fs::write(cfg.out.join(METRICS_FILE), report.to_json())?;
    Ok(report)
}

/// `dump-embeddings`: one line per news, `id<TAB>domain<TAB>v1 v2 ...`.
pub fn run_dump_embeddings(cfg: &RunConfig, checkpoint: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    cfg.write_echo(&cfg.out)?;
    let dataset = cfg.load_datasets()?;
    let (vocab, ckpt) = load_trained(cfg, checkpoint)?;
    let corpus = corpus_for(cfg, &dataset, &vocab, &ckpt)?;
    let all: Vec<usize> = (0..corpus.len()).collect();
    let vectors = encode_all(&ckpt.params, &corpus, &all)?;
    let path = cfg.out.join(EMBEDDINGS_FILE);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    for (i, v) in vectors.iter().enumerate() {
        let values: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}\t{}\t{}", corpus.news_id(i), corpus.domain(i), values.join(" "))?;
    }
    out.flush()?;
    Ok(path)
}

/// One named method variant: the three ablation switches plus whether the
/// source recommendation loss is used at all.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: &'static str,
    pub use_random_mask: bool,
    pub use_news_align: bool,
    pub use_target_news: bool,
    pub use_source: bool,
}

/// The named configurations of the ablation table. "bilingual" (source,
/// translations and target data without alignment) coincides with random
/// masking without target news.
pub const VARIANTS: &[Variant] = &[
    Variant { name: "target-only", use_random_mask: false, use_news_align: false, use_target_news: false, use_source: false },
    Variant { name: "bilingual", use_random_mask: true, use_news_align: false, use_target_news: false, use_source: true },
    Variant { name: "news-align-without-target-news", use_random_mask: false, use_news_align: true, use_target_news: false, use_source: true },
    Variant { name: "switch-align-without-target-news", use_random_mask: true, use_news_align: true, use_target_news: false, use_source: true },
    Variant { name: "news-switch", use_random_mask: true, use_news_align: false, use_target_news: true, use_source: true },
    Variant { name: "news-align", use_random_mask: false, use_news_align: true, use_target_news: true, use_source: true },
    Variant { name: "switch-align", use_random_mask: true, use_news_align: true, use_target_news: true, use_source: true },
];

pub fn variant(name: &str) -> Option<Variant> {
    VARIANTS.iter().copied().find(|v| v.name == name)
}

impl Variant {
    pub fn apply(&self, cfg: &RunConfig) -> RunConfig {
        let mut c = cfg.clone();
        c.train.use_random_mask = self.use_random_mask;
        c.train.use_news_align = self.use_news_align;
        c.train.use_target_news = self.use_target_news;
        if !self.use_source {
            c.train.beta = 0.0;
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub metrics: MetricReport,
    pub best_epoch: usize,
}

/// `ablate`: trains and evaluates every variant on one shared augmented
/// cache; each variant gets its own sub-directory with the usual layout.
pub fn run_ablate(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    cfg.write_echo(&cfg.out)?;
    let dataset = cfg.load_datasets()?;
    let cache = cfg.augmented_cache.clone().unwrap_or_else(|| cfg.out.join(AUGMENTED_FILE));
    let titles = augment_cached(cfg, &dataset, &cache)?;
    let mut rows = Vec::new();
    for v in VARIANTS {
        let vcfg = v.apply(cfg);
        let dir = cfg.out.join(v.name);
        vcfg.write_echo(&dir)?;
        log::info!("ablation variant {}", v.name);
        let (prepared, outcome, report) = train_and_evaluate(&vcfg, &dataset, &titles)?;
        prepared.vocab.save(&dir.join(VOCAB_FILE))?;
        Checkpoint {
            params: outcome.best,
            vocab_hash: prepared.vocab.hash(),
            align_classes: if outcome.last.align_head.is_some() { prepared.corpus.class_ids() } else { Vec::new() },
            config_echo: config_echo(&vcfg),
        }
        .save(&dir.join(CHECKPOINT_FILE))?;
        write_json(&dir.join(RUN_LOG_FILE), &outcome.report)?;
        std::fs::write(dir.join(METRICS_FILE), report.to_json())?;
        rows.push(AblationRow { variant: v.name.to_string(), metrics: report, best_epoch: outcome.report.best_epoch });
    }
    write_json(&cfg.out.join(METRICS_FILE), &rows)?;
    Ok(rows)
}

/// `synth`: writes a synthetic corpus (dataset, lexicon, provider vectors)
/// into `cfg.out`.
pub fn run_synth(cfg: &RunConfig) -> Result<crate::data::SyntheticCorpus> {
    cfg.synth.validate()?;
    cfg.write_echo(&cfg.out)?;
    let corpus = crate::data::generate_synthetic_bilingual(&cfg.synth, &mut stream_rng(cfg.seed, 0))?;
    corpus.write_dir(&cfg.out)?;
    Ok(corpus)
}

/// `augment`: builds the augmented-set cache.
pub fn run_augment(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    cfg.write_echo(&cfg.out)?;
    let dataset = cfg.load_datasets()?;
    let cache = cfg.augmented_cache.clone().unwrap_or_else(|| cfg.out.join(AUGMENTED_FILE));
    let titles = augment(cfg, &dataset, cfg.train.use_target_news)?;
    if let Some(dir) = cache.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_cache(&cache, &titles)?;
    Ok(cache)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestFormat {
    Mind,
    Adressa,
}

/// `ingest`: converts MIND (`news.tsv` + `behaviors.tsv`) or Adressa
/// (event jsonl in `behaviors`) files into a canonical dataset directory.
pub fn run_ingest(
    format: IngestFormat,
    news: Option<&Path>,
    behaviors: &Path,
    domain: Domain,
    split: Split,
    out: &Path,
    seed: u64,
) -> Result<Dataset> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| Error::config(format!("cannot read {}: {e}", p.display())))
    };
    let dataset = match format {
        IngestFormat::Mind => {
            let news = news.ok_or_else(|| Error::config("MIND ingestion needs a news.tsv file"))?;
            crate::data::ingest_mind(&read(news)?, &read(behaviors)?, domain, split)?
        }
        IngestFormat::Adressa => crate::data::ingest_adressa(
            &read(behaviors)?,
            &crate::data::AdressaOptions { domain, split, negatives: 4, seed },
        )?,
    };
    dataset.validate()?;
    dataset.write_dir(out)?;
    Ok(dataset)
}
