use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// A news item. The MIND-specific columns are kept verbatim so exports are
/// lossless.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct News {
    pub news_id: String,
    pub domain: Domain,
    pub title: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<String>,
    /// Ground-truth topic, only known for generated corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcategory: Option<String>,
    #[serde(default, rename = "abstract", skip_serializing_if = "Option::is_none")]
    pub abstract_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_entities: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstract_entities: Option<String>,
}

impl News {
    pub fn new(news_id: impl Into<String>, domain: Domain, title: impl Into<String>) -> Self {
        News {
            news_id: news_id.into(),
            domain,
            title: title.into(),
            tokens: Vec::new(),
            published: None,
            topic: None,
            category: None,
            subcategory: None,
            abstract_text: None,
            url: None,
            title_entities: None,
            abstract_entities: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub user_id: String,
    pub domain: Domain,
    pub history: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Impression {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impression_id: Option<String>,
    pub user_id: String,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<String>,
    pub candidates: Vec<String>,
    pub labels: Vec<u8>,
    pub split: Split,
    /// History shown with this impression when it differs from the user's
    /// stored history.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<String>>,
}

impl Impression {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::contract(format!("impression for {} has no candidates", self.user_id)));
        }
        if self.candidates.len() != self.labels.len() {
            return Err(Error::contract(format!(
                "impression for {}: {} candidates but {} labels",
                self.user_id,
                self.candidates.len(),
                self.labels.len()
            )));
        }
        if self.labels.iter().any(|&l| l > 1) {
            return Err(Error::contract(format!("impression for {}: labels must be 0/1", self.user_id)));
        }
        Ok(())
    }

    pub fn positives(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().zip(&self.labels).filter(|(_, &l)| l == 1).map(|(c, _)| c.as_str())
    }
}

/// One positive with `k` sampled negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingSample<Id = String> {
    pub user_id: Id,
    pub positive: Id,
    pub negatives: Vec<Id>,
}

/// News, users and impressions of one or both domains.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub news: Vec<News>,
    pub users: Vec<User>,
    pub impressions: Vec<Impression>,
}

pub const NEWS_FILE: &str = "news.jsonl";
pub const USERS_FILE: &str = "users.jsonl";
pub const IMPRESSIONS_FILE: &str = "impressions.jsonl";

impl Dataset {
    pub fn merge(mut self, other: Dataset) -> Self {
        self.news.extend(other.news);
        self.users.extend(other.users);
        self.impressions.extend(other.impressions);
        self
    }

    pub fn news_in(&self, domain: Domain) -> impl Iterator<Item = &News> {
        self.news.iter().filter(move |n| n.domain == domain)
    }

    pub fn users_in(&self, domain: Domain) -> impl Iterator<Item = &User> {
        self.users.iter().filter(move |u| u.domain == domain)
    }

    pub fn impressions_in(&self, domain: Domain) -> impl Iterator<Item = &Impression> {
        self.impressions.iter().filter(move |i| i.domain == domain)
    }

    /// Checks id uniqueness per domain, history resolution and impression
    /// shape.
    pub fn validate(&self) -> Result<()> {
        let mut news_ids: HashSet<(Domain, &str)> = HashSet::new();
        for n in &self.news {
            if !news_ids.insert((n.domain, n.news_id.as_str())) {
                return Err(Error::contract(format!("duplicate {} news id {}", n.domain, n.news_id)));
            }
            if n.title.trim().is_empty() {
                return Err(Error::contract(format!("news {} has an empty title", n.news_id)));
            }
        }
        let mut users: HashMap<(Domain, &str), &User> = HashMap::new();
        for u in &self.users {
            if users.insert((u.domain, u.user_id.as_str()), u).is_some() {
                return Err(Error::contract(format!("duplicate {} user id {}", u.domain, u.user_id)));
            }
            if let Some(bad) = u.history.iter().find(|h| !news_ids.contains(&(u.domain, h.as_str()))) {
                return Err(Error::contract(format!(
                    "user {} history references unknown {} news {bad}",
                    u.user_id, u.domain
                )));
            }
        }
        for imp in &self.impressions {
            imp.validate()?;
            if !users.contains_key(&(imp.domain, imp.user_id.as_str())) {
                return Err(Error::contract(format!("impression references unknown user {}", imp.user_id)));
            }
            let referenced = imp.candidates.iter().chain(imp.history.iter().flatten());
            for c in referenced {
                if !news_ids.contains(&(imp.domain, c.as_str())) {
                    return Err(Error::contract(format!("impression references unknown news {c}")));
                }
            }
        }
        Ok(())
    }

    /// Writes `news.jsonl`, `users.jsonl` and `impressions.jsonl` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&dir.join(NEWS_FILE), &self.news)?;
        write_jsonl(&dir.join(USERS_FILE), &self.users)?;
        write_jsonl(&dir.join(IMPRESSIONS_FILE), &self.impressions)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        Ok(Dataset {
            news: read_jsonl(&dir.join(NEWS_FILE))?,
            users: read_jsonl(&dir.join(USERS_FILE))?,
            impressions: read_jsonl(&dir.join(IMPRESSIONS_FILE))?,
        })
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

/// Parses the timestamp styles found in supported datasets into seconds:
/// plain integers (unix seconds or day numbers), ISO dates with optional
/// time, and MIND's `M/D/YYYY h:mm:ss AM`.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    use chrono::{NaiveDate, NaiveDateTime};
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%m/%d/%Y %I:%M:%S %p"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
}

/// Keeps news published strictly before `cutoff` (a [`parse_timestamp`]
/// string). News without a parseable timestamp are kept.
pub fn published_before<'a>(news: impl IntoIterator<Item = &'a News>, cutoff: &str) -> Result<Vec<&'a News>> {
    let cutoff = parse_timestamp(cutoff).ok_or_else(|| Error::config(format!("unparseable cutoff date {cutoff:?}")))?;
    Ok(news
        .into_iter()
        .filter(|n| n.published.as_deref().and_then(parse_timestamp).is_none_or(|t| t < cutoff))
        .collect())
}
