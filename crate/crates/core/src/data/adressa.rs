//! Adapter for Adressa-style click event streams (one JSON object per line).
//!
//! Grouping rule: events are grouped per user and sorted by time. Users with
//! fewer than two distinct clicked articles are skipped. Every click but the
//! last forms the history; the last click becomes the single positive of one
//! impression, joined by `negatives` articles the user never clicked, drawn
//! uniformly with the supplied seed. Candidate order is shuffled.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::types::{Dataset, Domain, Impression, News, Split, User};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct Event {
    #[serde(rename = "userId")]
    user_id: Option<String>,
    #[serde(alias = "documentId")]
    id: Option<String>,
    title: Option<String>,
    time: Option<i64>,
    #[serde(rename = "publishtime")]
    publish_time: Option<String>,
}

#[derive(Clone, Debug)]
pub struct AdressaOptions {
    pub domain: Domain,
    pub split: Split,
    pub negatives: usize,
    pub seed: u64,
}

pub fn ingest_adressa(events_jsonl: &str, opts: &AdressaOptions) -> Result<Dataset> {
    let mut news: BTreeMap<String, News> = BTreeMap::new();
    let mut clicks: BTreeMap<String, Vec<(i64, String)>> = BTreeMap::new();
    for (i, line) in events_jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ev: Event = serde_json::from_str(line)
            .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        let (Some(user), Some(id), Some(title), Some(time)) = (ev.user_id, ev.id, ev.title, ev.time)
        else {
            continue;
        };
        if title.trim().is_empty() {
            continue;
        }
        news.entry(id.clone()).or_insert_with(|| {
            let mut n = News::new(id.clone(), opts.domain, title);
            n.published = ev.publish_time;
            n
        });
        clicks.entry(user).or_default().push((time, id));
    }

    let all_ids: Vec<String> = news.keys().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut users = Vec::new();
    let mut impressions = Vec::new();
    for (user_id, mut events) in clicks {
        events.sort();
        let mut seen = HashSet::new();
        let ordered: Vec<(i64, String)> = events.into_iter().filter(|(_, id)| seen.insert(id.clone())).collect();
        if ordered.len() < 2 {
            continue;
        }
        let (last_time, positive) = ordered.last().cloned().expect("len >= 2");
        let history: Vec<String> = ordered[..ordered.len() - 1].iter().map(|(_, id)| id.clone()).collect();
        let pool: Vec<&String> = all_ids.iter().filter(|id| !seen.contains(*id)).collect();
        let mut candidates: Vec<(String, u8)> = pool
            .choose_multiple(&mut rng, opts.negatives)
            .map(|id| ((*id).clone(), 0))
            .collect();
        candidates.push((positive, 1));
        candidates.shuffle(&mut rng);
        impressions.push(Impression {
            impression_id: None,
            user_id: user_id.clone(),
            domain: opts.domain,
            time: Some(last_time.to_string()),
            candidates: candidates.iter().map(|(c, _)| c.clone()).collect(),
            labels: candidates.iter().map(|(_, l)| *l).collect(),
            split: opts.split,
            history: None,
        });
        users.push(User { user_id, domain: opts.domain, history });
    }
    Ok(Dataset { news: news.into_values().collect(), users, impressions })
}
