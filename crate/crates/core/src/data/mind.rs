//! MIND-style `behaviors.tsv` / `news.tsv` adapter.
//!
//! behaviors: `impression_id \t user_id \t time \t history \t impressions`,
//! where history is space-separated news ids and impressions are
//! space-separated `newsid-label` pairs.
//!
//! news: `news_id \t category \t subcategory \t title \t abstract \t url \t
//! title_entities \t abstract_entities`.

use std::collections::HashMap;

use super::types::{Dataset, Domain, Impression, News, Split, User};
use crate::error::{Error, Result};

/// One parsed behaviors line.
#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorRecord {
    pub impression: Impression,
    pub history: Vec<String>,
}

pub fn parse_behaviors(line: &str, line_no: usize, domain: Domain, split: Split) -> Result<BehaviorRecord> {
    let err = |msg: String| Error::Parse { line: line_no, msg };
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 tab-separated fields, got {}", fields.len())));
    }
    let history = fields[3].split_whitespace().map(String::from).collect();
    let mut candidates = Vec::new();
    let mut labels = Vec::new();
    for pair in fields[4].split_whitespace() {
        let (id, label) = pair
            .rsplit_once('-')
            .ok_or_else(|| err(format!("impression entry {pair:?} has no label")))?;
        let label = match label {
            "0" => 0,
            "1" => 1,
            other => return Err(err(format!("label {other:?} in {pair:?} is not 0 or 1"))),
        };
        if id.is_empty() {
            return Err(err(format!("impression entry {pair:?} has an empty news id")));
        }
        candidates.push(id.to_string());
        labels.push(label);
    }
    if candidates.is_empty() {
        return Err(err("impression has no candidates".into()));
    }
    let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
    Ok(BehaviorRecord {
        impression: Impression {
            impression_id: opt(fields[0]),
            user_id: fields[1].to_string(),
            domain,
            time: opt(fields[2]),
            candidates,
            labels,
            split,
            history: None,
        },
        history,
    })
}

pub fn parse_news_line(line: &str, line_no: usize, domain: Domain) -> Result<News> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
    if fields.len() < 4 || fields.len() > 8 {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("expected 4 to 8 tab-separated fields, got {}", fields.len()),
        });
    }
    let field = |i: usize| fields.get(i).map(|s| s.to_string());
    let mut news = News::new(fields[0], domain, fields[3]);
    news.category = field(1);
    news.subcategory = field(2);
    news.abstract_text = field(4);
    news.url = field(5);
    news.title_entities = field(6);
    news.abstract_entities = field(7);
    Ok(news)
}

/// Normalizes MIND files into the canonical schema. News with empty titles
/// are dropped. A user's stored history is the one on their first line; later
/// lines with a different history keep it on the impression.
pub fn ingest_mind(news_tsv: &str, behaviors_tsv: &str, domain: Domain, split: Split) -> Result<Dataset> {
    let mut news = Vec::new();
    for (i, line) in news_tsv.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let n = parse_news_line(line, i + 1, domain)?;
        if n.title.trim().is_empty() {
            log::warn!("dropping news {} with empty title", n.news_id);
            continue;
        }
        news.push(n);
    }

    let mut users: Vec<User> = Vec::new();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut impressions = Vec::new();
    for (i, line) in behaviors_tsv.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let BehaviorRecord { mut impression, history } = parse_behaviors(line, i + 1, domain, split)?;
        match user_index.get(&impression.user_id) {
            Some(&u) if users[u].history != history => impression.history = Some(history),
            Some(_) => {}
            None => {
                user_index.insert(impression.user_id.clone(), users.len());
                users.push(User { user_id: impression.user_id.clone(), domain, history });
            }
        }
        impressions.push(impression);
    }
    Ok(Dataset { news, users, impressions })
}

/// Writes one domain of a dataset back as `(news.tsv, behaviors.tsv)`.
pub fn export_mind(dataset: &Dataset, domain: Domain) -> (String, String) {
    let or_empty = |s: &Option<String>| s.clone().unwrap_or_default();
    let mut news_tsv = String::new();
    for n in dataset.news_in(domain) {
        let cols = [
            n.news_id.clone(),
            or_empty(&n.category),
            or_empty(&n.subcategory),
            n.title.clone(),
            or_empty(&n.abstract_text),
            or_empty(&n.url),
            or_empty(&n.title_entities),
            or_empty(&n.abstract_entities),
        ];
        news_tsv.push_str(&cols.join("\t"));
        news_tsv.push('\n');
    }

    let histories: HashMap<&str, &Vec<String>> =
        dataset.users_in(domain).map(|u| (u.user_id.as_str(), &u.history)).collect();
    let mut behaviors_tsv = String::new();
    for imp in dataset.impressions_in(domain) {
        let history = imp
            .history
            .as_ref()
            .or_else(|| histories.get(imp.user_id.as_str()).copied())
            .map(|h| h.join(" "))
            .unwrap_or_default();
        let pairs: Vec<String> = imp
            .candidates
            .iter()
            .zip(&imp.labels)
            .map(|(c, l)| format!("{c}-{l}"))
            .collect();
        let cols = [
            or_empty(&imp.impression_id),
            imp.user_id.clone(),
            or_empty(&imp.time),
            history,
            pairs.join(" "),
        ];
        behaviors_tsv.push_str(&cols.join("\t"));
        behaviors_tsv.push('\n');
    }
    (news_tsv, behaviors_tsv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_line() {
        let r = parse_behaviors("1\tU1\tT\tN1 N2\tN3-1 N4-0", 1, Domain::Target, Split::Test).unwrap();
        assert_eq!(r.history, vec!["N1", "N2"]);
        assert_eq!(r.impression.candidates, vec!["N3", "N4"]);
        assert_eq!(r.impression.labels, vec![1, 0]);
        assert_eq!(r.impression.user_id, "U1");
        assert_eq!(r.impression.time.as_deref(), Some("T"));
    }

    #[test]
    fn empty_history_field() {
        let r = parse_behaviors("7\tU2\t\t\tN3-0 N4-1", 1, Domain::Source, Split::Train).unwrap();
        assert!(r.history.is_empty());
        assert_eq!(r.impression.time, None);
    }

    #[test]
    fn bad_lines_name_their_line_number() {
        let bad_label = parse_behaviors("1\tU1\tT\tN1\tN3-2", 12, Domain::Source, Split::Train);
        assert!(matches!(bad_label, Err(Error::Parse { line: 12, .. })));
        let few = parse_behaviors("1\tU1\tT\tN1", 3, Domain::Source, Split::Train);
        assert!(matches!(few, Err(Error::Parse { line: 3, .. })));
        let no_label = parse_behaviors("1\tU1\tT\tN1\tN3", 4, Domain::Source, Split::Train);
        assert!(matches!(no_label, Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn hyphenated_ids_split_at_last_hyphen() {
        let r = parse_behaviors("1\tU1\tT\t\tN-3-1", 1, Domain::Source, Split::Train).unwrap();
        assert_eq!(r.impression.candidates, vec!["N-3"]);
        assert_eq!(r.impression.labels, vec![1]);
    }

    #[test]
    fn differing_history_is_kept_on_the_impression() {
        let news = "N1\tc\ts\tone\t\t\t\t\nN2\tc\ts\ttwo\t\t\t\t\n";
        let beh = "1\tU1\tT\tN1\tN2-1\n2\tU1\tT\tN1 N2\tN1-0\n";
        let d = ingest_mind(news, beh, Domain::Source, Split::Train).unwrap();
        assert_eq!(d.users.len(), 1);
        assert_eq!(d.impressions[1].history.as_deref(), Some(&["N1".to_string(), "N2".to_string()][..]));
        let (n, b) = export_mind(&d, Domain::Source);
        assert_eq!(n, news);
        assert_eq!(b, beh);
    }
}
