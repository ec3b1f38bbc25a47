use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Suffix marking the last symbol of a word.
pub const END_OF_WORD: &str = "</w>";

/// Ordered merge rules; a pair's rank is its position in the list.
#[derive(Clone, Debug, Default)]
pub struct BpeMerges {
    pairs: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl BpeMerges {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut ranks = HashMap::with_capacity(pairs.len());
        for (rank, pair) in pairs.iter().enumerate() {
            if ranks.insert(pair.clone(), rank).is_some() {
                return Err(Error::config(format!(
                    "duplicate merge pair ({:?}, {:?}) at rank {rank}",
                    pair.0, pair.1
                )));
            }
        }
        Ok(BpeMerges { pairs, ranks })
    }

    /// Parses a merges file: one space-separated pair per line. Blank lines
    /// and `#` header lines are skipped and do not consume a rank.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => pairs.push((a.to_string(), b.to_string())),
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected two symbols, got {line:?}"),
                    })
                }
            }
        }
        BpeMerges::new(pairs)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        BpeMerges::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(&(left.to_string(), right.to_string())).copied()
    }

    fn encode_word(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        if let Some(last) = symbols.last_mut() {
            last.push_str(END_OF_WORD);
        }
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.rank(&w[0], &w[1]).map(|r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (left, right) = &self.pairs[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }
}

/// Lowercases, splits on whitespace and greedily applies the lowest-rank merge
/// inside each word until none applies.
pub fn apply_bpe(title: &str, merges: &BpeMerges) -> Vec<String> {
    title
        .to_lowercase()
        .split_whitespace()
        .flat_map(|w| merges.encode_word(w))
        .collect()
}

/// Inverse of [`apply_bpe`] up to case and whitespace.
pub fn join_bpe(tokens: &[String]) -> String {
    let mut out = String::new();
    for t in tokens {
        match t.strip_suffix(END_OF_WORD) {
            Some(stem) => {
                out.push_str(stem);
                out.push(' ');
            }
            None => out.push_str(t),
        }
    }
    out.trim_end().to_string()
}
