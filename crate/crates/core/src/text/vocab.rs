use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

/// Contiguous token indices with `PAD = 0` and `UNK = 1` reserved.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::from_tokens(Vec::<String>::new()).expect("reserved tokens are distinct")
    }
}

impl Vocabulary {
    /// Builds from an ordered token list; the reserved tokens are prepended
    /// and dropped from `tokens` if present.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut index: HashMap<String, usize> =
            all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for t in tokens {
            let t = t.into();
            if t == PAD_TOKEN || t == UNK_TOKEN {
                continue;
            }
            if index.contains_key(&t) {
                return Err(Error::config(format!("duplicate vocabulary token {t:?}")));
            }
            index.insert(t.clone(), all.len());
            all.push(t);
        }
        Ok(Vocabulary { tokens: all, index })
    }

    /// Counts tokens over every sequence and orders them by descending
    /// frequency, then lexicographically. Tokens seen fewer than `min_count`
    /// times are left out.
    pub fn build<'a, I>(sequences: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in sequences {
            for t in seq {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> =
            counts.into_iter().filter(|&(_, c)| c >= min_count.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t))
            .expect("counted tokens are distinct")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to indices, unknown ones (and the literal PAD token) to
    /// `UNK`, keeping at most `max_title_len` of them. No padding is added.
    pub fn lookup<S: AsRef<str>>(&self, tokens: &[S], max_title_len: usize) -> Vec<usize> {
        tokens
            .iter()
            .take(max_title_len)
            .map(|t| match self.index_of(t.as_ref()) {
                Some(PAD) | None => UNK,
                Some(i) => i,
            })
            .collect()
    }

    /// Hex SHA-256 over the newline-joined token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// One token per line, in index order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.tokens {
            writeln!(f, "{t}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut tokens = Vec::new();
        for line in reader.lines() {
            tokens.push(line?);
        }
        if tokens.get(PAD).map(String::as_str) != Some(PAD_TOKEN)
            || tokens.get(UNK).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(Error::config(format!(
                "{}: vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}",
                path.display()
            )));
        }
        Vocabulary::from_tokens(tokens)
    }
}

/// Reads a whitespace-separated vector file (`token v1 ... vN` per line).
/// Every line must carry exactly `dim` values.
pub fn load_vectors(path: &Path, dim: usize) -> Result<HashMap<String, Vec<f64>>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected {dim} values for {token:?}, got {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line: i + 1, msg: format!("non-finite value for {token:?}") });
        }
        out.insert(token.to_string(), values);
    }
    Ok(out)
}
