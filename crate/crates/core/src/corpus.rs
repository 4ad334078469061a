//! Broadcast and chat-message ingestion, per-broadcast interaction features
//! and corpus-level distribution summaries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gift {
    pub viewer_id: String,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Broadcast {
    pub id: String,
    pub owner_id: String,
    pub country: String,
    pub duration_s: u64,
    pub total_viewers: u64,
    pub likes: u64,
    pub likers: u64,
    pub new_followers: u64,
    pub gifts: Vec<Gift>,
    pub shares: u64,
    pub blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub broadcast_id: String,
    pub user_id: String,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    pub text: String,
}

/// A parsed line that failed schema or invariant checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

/// Records that can be read from a JSONL file, one per line.
pub trait JsonlRecord: Sized {
    fn parse_line(line: &str) -> Result<Self, String>;
    fn validate(&self) -> Result<(), String>;
}

// Raw mirrors use signed integers so negative values surface as invariant
// violations instead of opaque type errors.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGift {
    viewer_id: String,
    value: i64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBroadcast {
    id: String,
    #[serde(default)]
    owner_id: Option<String>,
    country: String,
    duration_s: i64,
    total_viewers: i64,
    likes: i64,
    likers: i64,
    new_followers: i64,
    gifts: Vec<RawGift>,
    shares: i64,
    blocks: i64,
}

fn non_negative(name: &str, v: i64) -> Result<u64, String> {
    u64::try_from(v).map_err(|_| format!("invariant: {name} ≥ 0"))
}

impl JsonlRecord for Broadcast {
    fn parse_line(line: &str) -> Result<Self, String> {
        let raw: RawBroadcast = serde_json::from_str(line).map_err(|e| format!("schema: {e}"))?;
        let gifts = raw
            .gifts
            .into_iter()
            .map(|g| {
                Ok(Gift {
                    viewer_id: g.viewer_id,
                    value: non_negative("gift value", g.value)?,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let b = Broadcast {
            owner_id: raw.owner_id.unwrap_or_else(|| raw.id.clone()),
            id: raw.id,
            country: raw.country,
            duration_s: non_negative("duration_s", raw.duration_s)?,
            total_viewers: non_negative("total_viewers", raw.total_viewers)?,
            likes: non_negative("likes", raw.likes)?,
            likers: non_negative("likers", raw.likers)?,
            new_followers: non_negative("new_followers", raw.new_followers)?,
            gifts,
            shares: non_negative("shares", raw.shares)?,
            blocks: non_negative("blocks", raw.blocks)?,
        };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("invariant: id non-empty".into());
        }
        if self.country.len() != 2 || !self.country.bytes().all(|c| c.is_ascii_uppercase()) {
            return Err(format!(
                "invariant: country is an ISO-3166 alpha-2 code, got {:?}",
                self.country
            ));
        }
        if self.likers > self.total_viewers {
            return Err("invariant: likers ≤ total_viewers".into());
        }
        Ok(())
    }
}

impl JsonlRecord for ChatMessage {
    fn parse_line(line: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            broadcast_id: String,
            user_id: String,
            ts: i64,
            text: String,
        }
        let raw: Raw = serde_json::from_str(line).map_err(|e| format!("schema: {e}"))?;
        let m = ChatMessage {
            broadcast_id: raw.broadcast_id,
            user_id: raw.user_id,
            timestamp: raw.ts,
            text: raw.text,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), String> {
        if self.broadcast_id.is_empty() {
            return Err("invariant: broadcast_id non-empty".into());
        }
        if self.text.trim().is_empty() {
            return Err("invariant: text non-empty after trimming".into());
        }
        Ok(())
    }
}

/// Streaming reader over a JSONL file. Blank lines are ignored; every other
/// line yields either a record or a [`Rejection`].
pub struct JsonlReader<T> {
    lines: Lines<BufReader<File>>,
    line_no: usize,
    path: PathBuf,
    _marker: PhantomData<T>,
}

impl<T: JsonlRecord> JsonlReader<T> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(JsonlReader {
            lines: BufReader::new(file).lines(),
            line_no: 0,
            path,
            _marker: PhantomData,
        })
    }
}

impl<T: JsonlRecord> Iterator for JsonlReader<T> {
    type Item = Result<Result<T, Rejection>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = self.line_no;
            return Some(Ok(T::parse_line(&line).map_err(|reason| Rejection {
                line: line_no,
                reason,
            })));
        }
    }
}

/// Fully materialised result of reading a JSONL file.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub rejected: Vec<Rejection>,
}

impl<T> Loaded<T> {
    pub fn skipped(&self) -> usize {
        self.rejected.len()
    }
}

fn load_all<T: JsonlRecord>(path: impl AsRef<Path>) -> Result<Loaded<T>> {
    let mut loaded = Loaded {
        records: Vec::new(),
        rejected: Vec::new(),
    };
    for item in JsonlReader::<T>::open(path)? {
        match item? {
            Ok(r) => loaded.records.push(r),
            Err(rej) => {
                log::warn!("line {}: {}", rej.line, rej.reason);
                loaded.rejected.push(rej);
            }
        }
    }
    Ok(loaded)
}

pub fn load_broadcasts(path: impl AsRef<Path>) -> Result<Loaded<Broadcast>> {
    load_all(path)
}

pub fn load_messages(path: impl AsRef<Path>) -> Result<Loaded<ChatMessage>> {
    load_all(path)
}

/// Per-broadcast interaction totals and viewer-normalised ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionFeatures {
    pub total_viewers: u64,
    pub duration_s: u64,
    pub likes: u64,
    pub likers: u64,
    pub new_followers: u64,
    pub gift_count: u64,
    pub gift_value: u64,
    pub shares: u64,
    pub blocks: u64,
    pub total_chat_messages: u64,
    pub chat_messages_per_user: f64,
    pub followers_to_viewers: f64,
    pub likers_to_viewers: f64,
}

/// Column names of [`InteractionFeatures::feature_vector`], in order.
pub const FEATURE_NAMES: [&str; 18] = [
    "total_viewers",
    "duration_s",
    "likes",
    "new_followers",
    "gift_count",
    "gift_value",
    "shares",
    "blocks",
    "total_chat_messages",
    "chat_messages_per_user",
    "followers_to_viewers",
    "likers_to_viewers",
    "likes_to_viewers",
    "gifts_to_viewers",
    "gift_value_to_viewers",
    "shares_to_viewers",
    "blocks_to_viewers",
    "chat_messages_to_viewers",
];

fn ratio(num: f64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

impl InteractionFeatures {
    /// Raw totals followed by every count normalised by total viewers.
    pub fn feature_vector(&self) -> Vec<f64> {
        let v = self.total_viewers;
        vec![
            self.total_viewers as f64,
            self.duration_s as f64,
            self.likes as f64,
            self.new_followers as f64,
            self.gift_count as f64,
            self.gift_value as f64,
            self.shares as f64,
            self.blocks as f64,
            self.total_chat_messages as f64,
            self.chat_messages_per_user,
            self.followers_to_viewers,
            self.likers_to_viewers,
            ratio(self.likes as f64, v),
            ratio(self.gift_count as f64, v),
            ratio(self.gift_value as f64, v),
            ratio(self.shares as f64, v),
            ratio(self.blocks as f64, v),
            ratio(self.total_chat_messages as f64, v),
        ]
    }
}

/// Ratios with a zero denominator are 0.
pub fn interaction_features<'a, I>(b: &Broadcast, messages: I) -> InteractionFeatures
where
    I: IntoIterator<Item = &'a ChatMessage>,
{
    let mut total = 0u64;
    let mut users = HashSet::new();
    for m in messages {
        debug_assert_eq!(m.broadcast_id, b.id);
        total += 1;
        users.insert(m.user_id.as_str());
    }
    InteractionFeatures {
        total_viewers: b.total_viewers,
        duration_s: b.duration_s,
        likes: b.likes,
        likers: b.likers,
        new_followers: b.new_followers,
        gift_count: b.gifts.len() as u64,
        gift_value: b.gifts.iter().map(|g| g.value).sum(),
        shares: b.shares,
        blocks: b.blocks,
        total_chat_messages: total,
        chat_messages_per_user: ratio(total as f64, users.len() as u64),
        followers_to_viewers: ratio(b.new_followers as f64, b.total_viewers),
        likers_to_viewers: ratio(b.likers as f64, b.total_viewers),
    }
}

/// Groups messages by broadcast id, preserving file order within each group.
pub fn messages_by_broadcast(messages: &[ChatMessage]) -> HashMap<&str, Vec<&ChatMessage>> {
    let mut out: HashMap<&str, Vec<&ChatMessage>> = HashMap::new();
    for m in messages {
        out.entry(m.broadcast_id.as_str()).or_default().push(m);
    }
    out
}

/// Empirical CDF as (distinct value, fraction of sample ≤ value) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    pub points: Vec<(f64, f64)>,
}

pub fn empirical_cdf(values: &[f64]) -> Result<Cdf> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::format("sample", "NaN value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => points.push((v, frac)),
        }
    }
    Ok(Cdf { points })
}

/// Distinct broadcasters per country, descending, ties by country code.
pub fn country_histogram(broadcasts: &[Broadcast], top_n: usize) -> Vec<(String, usize)> {
    let mut owners: BTreeMap<&str, HashSet<&str>> = BTreeMap::new();
    for b in broadcasts {
        owners
            .entry(b.country.as_str())
            .or_default()
            .insert(b.owner_id.as_str());
    }
    let mut counts: Vec<(String, usize)> = owners
        .into_iter()
        .map(|(c, set)| (c.to_string(), set.len()))
        .collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    counts.truncate(top_n.max(1));
    counts
}

/// Fractions of broadcasts with zero and with at least one share / block.
/// Both readings are reported because "rare" is ambiguous in the source
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySummary {
    pub broadcasts: usize,
    pub shared_fraction: f64,
    pub unshared_fraction: f64,
    pub blocked_fraction: f64,
    pub unblocked_fraction: f64,
}

pub fn activity_summary(broadcasts: &[Broadcast]) -> ActivitySummary {
    let n = broadcasts.len();
    let shared = broadcasts.iter().filter(|b| b.shares > 0).count();
    let blocked = broadcasts.iter().filter(|b| b.blocks > 0).count();
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    ActivitySummary {
        broadcasts: n,
        shared_fraction: frac(shared),
        unshared_fraction: frac(n - shared),
        blocked_fraction: frac(blocked),
        unblocked_fraction: frac(n - blocked),
    }
}

/// Total messages sent by each user across the corpus, ordered by user id.
pub fn messages_per_user(messages: &[ChatMessage]) -> Vec<(String, u64)> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for m in messages {
        *counts.entry(m.user_id.as_str()).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(u, c)| (u.to_string(), c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const B1: &str = r#"{"id":"b1","country":"US","duration_s":60,"total_viewers":5,"likes":3,"likers":2,"new_followers":1,"gifts":[],"shares":0,"blocks":0}"#;

    fn broadcast(id: &str, owner: &str, country: &str) -> Broadcast {
        Broadcast {
            id: id.into(),
            owner_id: owner.into(),
            country: country.into(),
            duration_s: 10,
            total_viewers: 10,
            likes: 0,
            likers: 0,
            new_followers: 0,
            gifts: vec![],
            shares: 0,
            blocks: 0,
        }
    }

    fn msg(b: &str, u: &str, text: &str) -> ChatMessage {
        ChatMessage {
            broadcast_id: b.into(),
            user_id: u.into(),
            timestamp: 0,
            text: text.into(),
        }
    }

    #[test]
    fn parses_schema_line() {
        let b = Broadcast::parse_line(B1).unwrap();
        assert_eq!(b.id, "b1");
        assert_eq!(b.owner_id, "b1");
        assert_eq!(b.total_viewers, 5);
        assert_eq!(b.likers, 2);
    }

    #[test]
    fn negative_duration_is_rejected() {
        let line = B1.replace("\"duration_s\":60", "\"duration_s\":-1");
        let err = Broadcast::parse_line(&line).unwrap_err();
        assert_eq!(err, "invariant: duration_s ≥ 0");
    }

    #[test]
    fn likers_above_viewers_rejected() {
        let line = B1.replace("\"likers\":2", "\"likers\":9");
        assert!(Broadcast::parse_line(&line).unwrap_err().contains("likers"));
    }

    #[test]
    fn unknown_key_rejected() {
        let line = B1.replace("\"blocks\":0", "\"blocks\":0,\"extra\":1");
        assert!(Broadcast::parse_line(&line)
            .unwrap_err()
            .starts_with("schema"));
    }

    #[test]
    fn empty_message_text_rejected() {
        let line = r#"{"broadcast_id":"b1","user_id":"u1","ts":5,"text":"   "}"#;
        assert!(ChatMessage::parse_line(line).is_err());
        let ok = r#"{"broadcast_id":"b1","user_id":"u1","ts":5,"text":"hi"}"#;
        assert_eq!(ChatMessage::parse_line(ok).unwrap().timestamp, 5);
    }

    #[test]
    fn loader_counts_skips_and_line_numbers() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for i in 0..10 {
            writeln!(f, "{}", B1.replace("\"b1\"", &format!("\"b{i}\""))).unwrap();
            if i == 3 {
                writeln!(f, "{{not json").unwrap();
            }
        }
        writeln!(f, "{}", B1.replace("\"likes\":3", "\"likes\":-3")).unwrap();
        f.flush().unwrap();
        let loaded = load_broadcasts(f.path()).unwrap();
        assert_eq!(loaded.records.len(), 10);
        assert_eq!(loaded.skipped(), 2);
        assert_eq!(loaded.rejected[0].line, 5);
        assert_eq!(loaded.rejected[1].line, 12);
        assert_eq!(loaded.records[4].id, "b4");
    }

    #[test]
    fn missing_file_is_fatal() {
        assert!(matches!(
            load_messages("/nonexistent/messages.jsonl"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn features_hand_arithmetic() {
        let mut b = broadcast("b", "o", "US");
        b.total_viewers = 10;
        b.new_followers = 5;
        b.likers = 2;
        let msgs: Vec<_> = (0..20)
            .map(|i| msg("b", &format!("u{}", i % 4), "x"))
            .collect();
        let f = interaction_features(&b, &msgs);
        assert_eq!(f.followers_to_viewers, 0.5);
        assert_eq!(f.likers_to_viewers, 0.2);
        assert_eq!(f.chat_messages_per_user, 5.0);
        assert_eq!(f.total_chat_messages, 20);
    }

    #[test]
    fn degenerate_features_are_zero() {
        let mut b = broadcast("b", "o", "US");
        b.total_viewers = 0;
        b.duration_s = 0;
        let f = interaction_features(&b, &[]);
        assert_eq!(f.total_chat_messages, 0);
        assert_eq!(f.chat_messages_per_user, 0.0);
        assert_eq!(f.followers_to_viewers, 0.0);
        assert!(f.feature_vector().iter().all(|&x| x == 0.0));
        assert_eq!(f.feature_vector().len(), FEATURE_NAMES.len());
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(empirical_cdf(&[7.0]).unwrap().points, vec![(7.0, 1.0)]);
        assert_eq!(
            empirical_cdf(&[1.0, 1.0, 2.0, 4.0]).unwrap().points,
            vec![(1.0, 0.5), (2.0, 0.75), (4.0, 1.0)]
        );
        assert_eq!(
            empirical_cdf(&[3.0, 2.0, 1.0]).unwrap(),
            empirical_cdf(&[1.0, 2.0, 3.0]).unwrap()
        );
        assert!(matches!(empirical_cdf(&[]), Err(Error::EmptySample)));
    }

    #[test]
    fn histogram_counts_distinct_broadcasters() {
        let bs = vec![
            broadcast("1", "a", "US"),
            broadcast("2", "b", "US"),
            broadcast("3", "c", "US"),
            broadcast("4", "c", "US"),
            broadcast("5", "d", "GB"),
        ];
        assert_eq!(
            country_histogram(&bs, 2),
            vec![("US".to_string(), 3), ("GB".to_string(), 1)]
        );
        assert_eq!(country_histogram(&bs, 50).len(), 2);
        let single: Vec<_> = (0..5)
            .map(|i| broadcast(&i.to_string(), "z", "CA"))
            .collect();
        assert_eq!(country_histogram(&single, 1), vec![("CA".to_string(), 1)]);
    }

    #[test]
    fn histogram_ties_by_code() {
        let bs = vec![broadcast("1", "a", "NZ"), broadcast("2", "b", "AU")];
        assert_eq!(country_histogram(&bs, 5)[0].0, "AU");
    }

    #[test]
    fn activity_fractions_cover_both_readings() {
        let mut bs = vec![broadcast("1", "a", "US"), broadcast("2", "b", "US")];
        bs[0].shares = 2;
        let s = activity_summary(&bs);
        assert_eq!(s.shared_fraction, 0.5);
        assert_eq!(s.unshared_fraction, 0.5);
        assert_eq!(s.blocked_fraction, 0.0);
        assert_eq!(s.unblocked_fraction, 1.0);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cdf_is_monotone_and_ends_at_one(values in prop::collection::vec(-1e6f64..1e6, 1..200)) {
                let cdf = empirical_cdf(&values).unwrap();
                for w in cdf.points.windows(2) {
                    prop_assert!(w[0].0 < w[1].0);
                    prop_assert!(w[0].1 < w[1].1);
                }
                prop_assert_eq!(cdf.points.last().unwrap().1, 1.0);
            }

            #[test]
            fn features_are_permutation_invariant(users in prop::collection::vec(0u8..6, 0..40), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let b = Broadcast {
                    id: "b".into(), owner_id: "o".into(), country: "US".into(), duration_s: 1,
                    total_viewers: 7, likes: 1, likers: 1, new_followers: 3, gifts: vec![], shares: 0, blocks: 0,
                };
                let mut msgs: Vec<ChatMessage> = users.iter().map(|u| ChatMessage {
                    broadcast_id: "b".into(), user_id: u.to_string(), timestamp: 0, text: "x".into(),
                }).collect();
                let before = interaction_features(&b, &msgs);
                msgs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                prop_assert_eq!(before, interaction_features(&b, &msgs));
            }

            #[test]
            fn histogram_total_equals_distinct_owners(owners in prop::collection::vec((0u8..8, 0u8..4), 1..60)) {
                let countries = ["US", "GB", "CA", "AU"];
                let bs: Vec<Broadcast> = owners.iter().enumerate().map(|(i, &(o, c))| Broadcast {
                    id: i.to_string(), owner_id: format!("o{o}"), country: countries[c as usize].into(),
                    duration_s: 0, total_viewers: 0, likes: 0, likers: 0, new_followers: 0,
                    gifts: vec![], shares: 0, blocks: 0,
                }).collect();
                let hist = country_histogram(&bs, usize::MAX);
                let distinct: HashSet<(&str, &str)> = bs.iter().map(|b| (b.owner_id.as_str(), b.country.as_str())).collect();
                prop_assert_eq!(hist.iter().map(|h| h.1).sum::<usize>(), distinct.len());
            }
        }
    }
}
