//! Title tokenization and the shared vocabulary.

mod bpe;
mod vocab;

pub use bpe::{apply_bpe, join_bpe, BpeMerges, END_OF_WORD};
pub use vocab::{load_vectors, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

/// How titles are split into vocabulary tokens.
#[derive(Clone, Debug, Default)]
pub enum Tokenizer {
    /// Lowercased whitespace words, one token each.
    #[default]
    Whitespace,
    Bpe(BpeMerges),
}

impl Tokenizer {
    pub fn tokenize(&self, title: &str) -> Vec<String> {
        match self {
            Tokenizer::Whitespace => title.to_lowercase().split_whitespace().map(String::from).collect(),
            Tokenizer::Bpe(m) => apply_bpe(title, m),
        }
    }
}
