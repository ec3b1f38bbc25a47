//! Binary checkpoint: magic, a JSON header describing every tensor, then the
//! raw little-endian `f64` data in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdditiveAttention, AlignHead, ModelConfig, ModelParams, SelfAttention};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NBCK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    vocab_hash: String,
    align_classes: Vec<String>,
    config_echo: serde_json::Value,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

/// Trained parameters plus what is needed to use them safely: the hash of
/// the vocabulary they were trained against and the source news id of each
/// alignment class.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab_hash: String,
    pub align_classes: Vec<String>,
    pub config_echo: serde_json::Value,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let named = self.params.named_tensors();
        let header = Header {
            model: self.params.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            align_classes: self.align_classes.clone(),
            config_echo: self.config_echo.clone(),
            tensors: named
                .iter()
                .map(|(n, t)| TensorHeader { name: n.clone(), shape: t.shape().to_vec() })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        for (_, t) in &named {
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Loads a checkpoint, refusing it if `expected_vocab_hash` is given and
    /// differs from the stored one.
    pub fn load(path: &Path, expected_vocab_hash: Option<&str>) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(format!("{}: {m}", path.display()));
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        input.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;

        if let Some(expected) = expected_vocab_hash {
            if expected != header.vocab_hash {
                return Err(bad(format!(
                    "vocabulary hash mismatch: checkpoint {} vs current {expected}",
                    header.vocab_hash
                )));
            }
        }

        let mut tensors = Vec::with_capacity(header.tensors.len());
        for th in &header.tensors {
            let n: usize = th.shape.iter().product();
            let mut raw = vec![0u8; n * 8];
            input.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            tensors.push((th.name.as_str(), Tensor::new(th.shape.clone(), data)?));
        }
        if input.read(&mut [0u8; 1])? != 0 {
            return Err(bad("trailing bytes after tensor data".into()));
        }

        let params = assemble(header.model, tensors).map_err(|e| bad(e.to_string()))?;
        if params.align_classes().unwrap_or(0) != header.align_classes.len() {
            return Err(bad("alignment head width differs from its class list".into()));
        }
        Ok(Checkpoint {
            params,
            vocab_hash: header.vocab_hash,
            align_classes: header.align_classes,
            config_echo: header.config_echo,
        })
    }
}

fn assemble(config: ModelConfig, tensors: Vec<(&str, Tensor)>) -> Result<ModelParams> {
    let mut map: std::collections::HashMap<&str, Tensor> = tensors.into_iter().collect();
    let mut take = |name: &str| {
        map.remove(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    };
    let self_attention = |take: &mut dyn FnMut(&str) -> Result<Tensor>, prefix: &str| {
        Ok::<_, Error>(SelfAttention {
            query: take(&format!("{prefix}.query"))?,
            key: take(&format!("{prefix}.key"))?,
            value: take(&format!("{prefix}.value"))?,
        })
    };
    let pool = |take: &mut dyn FnMut(&str) -> Result<Tensor>, prefix: &str| {
        Ok::<_, Error>(AdditiveAttention {
            projection: take(&format!("{prefix}.projection"))?,
            bias: take(&format!("{prefix}.bias"))?,
            query: take(&format!("{prefix}.query"))?,
        })
    };
    let word_embedding = take("word_embedding")?;
    let news_self_attention = self_attention(&mut take, "news_self_attention")?;
    let news_pool = pool(&mut take, "news_pool")?;
    let user_self_attention = if config.user_self_attention {
        Some(self_attention(&mut take, "user_self_attention")?)
    } else {
        None
    };
    let user_pool = pool(&mut take, "user_pool")?;
    let align_head = match (take("align_head.weight"), take("align_head.bias")) {
        (Ok(weight), Ok(bias)) => Some(AlignHead { weight, bias }),
        _ => None,
    };
    drop(take);
    if let Some(extra) = map.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
    }
    let params = ModelParams {
        config,
        word_embedding,
        news_self_attention,
        news_pool,
        user_self_attention,
        user_pool,
        align_head,
    };
    params.config.validate()?;
    let d = params.config.embedding_dim;
    if params.word_embedding.dims2().1 != d {
        return Err(Error::Checkpoint("embedding width differs from config".into()));
    }
    Ok(params)
}
