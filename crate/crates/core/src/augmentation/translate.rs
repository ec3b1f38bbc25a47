use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

fn default_batch_size() -> usize {
    64
}

fn default_timeout_secs() -> u64 {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TranslatorSpec {
    /// Word-by-word substitution from a `source<TAB>target` file.
    Lexicon { path: PathBuf },
    /// HTTP endpoint accepting `{"texts": [...]}` and answering
    /// `{"translations": [...]}`. Results are cached in `cache`.
    External {
        endpoint: String,
        cache: PathBuf,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    Identity,
}

impl Default for TranslatorSpec {
    fn default() -> Self {
        TranslatorSpec::Identity
    }
}

#[derive(Debug)]
pub enum Translator {
    Lexicon(HashMap<String, String>),
    External(ExternalTranslator),
    Identity,
}

impl Translator {
    pub fn from_spec(spec: &TranslatorSpec) -> Result<Self> {
        Ok(match spec {
            TranslatorSpec::Lexicon { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::config(format!("lexicon {}: {e}", path.display())))?;
                Translator::Lexicon(parse_lexicon(&text)?)
            }
            TranslatorSpec::External { endpoint, cache, batch_size, timeout_secs } => Translator::External(
                ExternalTranslator::new(endpoint, cache, *batch_size, Duration::from_secs(*timeout_secs))?,
            ),
            TranslatorSpec::Identity => Translator::Identity,
        })
    }

    pub fn translate(&self, title: &str) -> Result<String> {
        Ok(self.translate_batch(&[title.to_string()])?.pop().expect("one title in, one out"))
    }

    pub fn translate_batch(&self, titles: &[String]) -> Result<Vec<String>> {
        match self {
            Translator::Lexicon(map) => Ok(titles.iter().map(|t| substitute(map, t)).collect()),
            Translator::External(ext) => ext.translate_batch(titles),
            Translator::Identity => Ok(titles.to_vec()),
        }
    }
}

/// Parses `source<TAB>target` lines; blank lines and `#` comments are skipped.
pub fn parse_lexicon(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split('\t').collect::<Vec<_>>().as_slice() {
            [s, t] if !s.is_empty() && !t.is_empty() => {
                map.insert(s.to_string(), t.to_string());
            }
            _ => return Err(Error::Parse { line: i + 1, msg: "expected source<TAB>target".into() }),
        }
    }
    Ok(map)
}

fn substitute(map: &HashMap<String, String>, title: &str) -> String {
    title
        .split_whitespace()
        .map(|w| {
            map.get(w)
                .or_else(|| map.get(&w.to_lowercase()))
                .map(String::as_str)
                .unwrap_or(w)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn title_key(title: &str) -> String {
    hex::encode(Sha256::digest(title.as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    translation: String,
}

#[derive(Serialize)]
struct Request<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    translations: Vec<String>,
}

#[derive(Debug)]
pub struct ExternalTranslator {
    endpoint: String,
    cache_path: PathBuf,
    batch_size: usize,
    agent: ureq::Agent,
    cache: Mutex<HashMap<String, String>>,
}

impl ExternalTranslator {
    pub fn new(endpoint: &str, cache_path: &Path, batch_size: usize, timeout: Duration) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("translator batch_size must be >= 1"));
        }
        let mut cache = HashMap::new();
        if cache_path.exists() {
            for rec in crate::data::read_jsonl::<CacheRecord>(cache_path)? {
                cache.insert(rec.key, rec.translation);
            }
        }
        let agent = ureq::Agent::new_with_config(ureq::Agent::config_builder().timeout_global(Some(timeout)).build());
        Ok(ExternalTranslator {
            endpoint: endpoint.to_string(),
            cache_path: cache_path.to_path_buf(),
            batch_size,
            agent,
            cache: Mutex::new(cache),
        })
    }

    pub fn translate_batch(&self, titles: &[String]) -> Result<Vec<String>> {
        let mut cache = self.cache.lock().expect("translation cache poisoned");
        let mut missing: Vec<String> = Vec::new();
        for t in titles {
            if !t.is_empty() && !cache.contains_key(&title_key(t)) && !missing.contains(t) {
                missing.push(t.clone());
            }
        }
        for chunk in missing.chunks(self.batch_size) {
            let translated = self.request(chunk)?;
            let mut out = BufWriter::new(
                std::fs::OpenOptions::new().create(true).append(true).open(&self.cache_path)?,
            );
            for (src, dst) in chunk.iter().zip(translated) {
                let rec = CacheRecord { key: title_key(src), translation: dst };
                serde_json::to_writer(&mut out, &rec)?;
                out.write_all(b"\n")?;
                cache.insert(rec.key, rec.translation);
            }
            out.flush()?;
        }
        Ok(titles
            .iter()
            .map(|t| if t.is_empty() { String::new() } else { cache[&title_key(t)].clone() })
            .collect())
    }

    fn request(&self, batch: &[String]) -> Result<Vec<String>> {
        let fail = |msg: String| Error::Transport { msg, batch: batch.to_vec() };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(Request { texts: batch })
            .map_err(|e| fail(format!("{}: {e}", self.endpoint)))?;
        let body: Response = resp.body_mut().read_json().map_err(|e| fail(format!("bad response: {e}")))?;
        if body.translations.len() != batch.len() {
            return Err(fail(format!(
                "endpoint returned {} translations for {} titles",
                body.translations.len(),
                batch.len()
            )));
        }
        Ok(body.translations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;

    #[test]
    fn lexicon_substitutes_and_passes_oov_through() {
        let t = Translator::Lexicon(parse_lexicon("hund\tdog\n").unwrap());
        assert_eq!(t.translate("hund news").unwrap(), "dog news");
        assert_eq!(t.translate("").unwrap(), "");
    }

    #[test]
    fn identity_is_unchanged() {
        assert_eq!(Translator::Identity.translate("Hund  news").unwrap(), "Hund  news");
    }

    #[test]
    fn missing_lexicon_is_config_error() {
        let r = Translator::from_spec(&TranslatorSpec::Lexicon { path: "/nonexistent/lex.tsv".into() });
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn malformed_lexicon_line() {
        assert!(matches!(parse_lexicon("a\tb\nbroken\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn spec_parses_from_toml() {
        let spec: TranslatorSpec = toml::from_str("kind = \"lexicon\"\npath = \"lex.tsv\"").unwrap();
        assert_eq!(spec, TranslatorSpec::Lexicon { path: "lex.tsv".into() });
        let spec: TranslatorSpec = toml::from_str("kind = \"identity\"").unwrap();
        assert_eq!(spec, TranslatorSpec::Identity);
    }

    #[test]
    fn unreachable_endpoint_returns_failed_batch() {
        let dir = tempfile::tempdir().unwrap();
        // Bind then drop to get a port nobody listens on.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let ext = ExternalTranslator::new(
            &format!("http://127.0.0.1:{port}/translate"),
            &dir.path().join("cache.jsonl"),
            8,
            Duration::from_secs(2),
        )
        .unwrap();
        match ext.translate_batch(&["a b".into(), "c".into()]) {
            Err(Error::Transport { batch, .. }) => assert_eq!(batch, vec!["a b".to_string(), "c".to_string()]),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    /// Serves `requests` POSTs, uppercasing every text.
    fn upper_server(requests: usize) -> (String, std::thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/t", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming().take(requests) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let out: Vec<String> =
                    req["texts"].as_array().unwrap().iter().map(|t| t.as_str().unwrap().to_uppercase()).collect();
                let resp = serde_json::json!({ "translations": out }).to_string();
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{resp}",
                    resp.len()
                )
                .unwrap();
            }
        });
        (url, handle)
    }

    #[test]
    fn external_translations_are_cached_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.jsonl");
        let (url, server) = upper_server(1);
        let titles: Vec<String> = vec!["hund news".into(), "".into(), "hund news".into(), "katt".into()];
        let ext = ExternalTranslator::new(&url, &cache, 16, Duration::from_secs(5)).unwrap();
        let out = ext.translate_batch(&titles).unwrap();
        assert_eq!(out, vec!["HUND NEWS", "", "HUND NEWS", "KATT"]);
        server.join().unwrap();
        // The server is gone; a fresh translator must answer from the cache.
        let again = ExternalTranslator::new(&url, &cache, 16, Duration::from_secs(1)).unwrap();
        assert_eq!(again.translate_batch(&titles).unwrap(), out);
    }
}
