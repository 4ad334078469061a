//! Message-local collocations, verb extraction around clothing talk and emoji
//! co-occurrence.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embed::csv_field;
use crate::error::{Error, Result};
use crate::textprep::{emoji_sequences, list_lines, Lemmatizer, Stopwords};

pub const DEFAULT_WINDOW: usize = 5;

const BUNDLED_PARTICLES: &str = include_str!("../data/particles.txt");

/// Verbs too generic to be informative in the simple-verb ranking.
pub const STOP_VERBS: [&str; 12] = [
    "be", "can", "could", "do", "have", "may", "might", "must", "shall", "should", "will", "would",
];

/// Which side of a target occurrence is scanned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collocate {
    pub term: String,
    pub count: u64,
    pub pmi: f64,
    /// Occurrences of the term anywhere in the corpus.
    pub corpus_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationTable {
    pub targets: Vec<String>,
    /// Count descending, ties lexicographic.
    pub rows: Vec<Collocate>,
}

impl CollocationTable {
    /// CSV `term,count,pmi,corpus_count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,count,pmi,corpus_count\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{}\n",
                csv_field(&r.term),
                r.count,
                r.pmi,
                r.corpus_count
            ));
        }
        out
    }
}

/// Raw collocate counts: for every target occurrence, each non-stopword,
/// non-target token within `window` positions on the requested side(s) of
/// the same message counts once.
pub fn collocate_counts<M: AsRef<[String]>>(
    messages: &[M],
    targets: &BTreeSet<String>,
    window: usize,
    side: Side,
    stopwords: &Stopwords,
) -> HashMap<String, u64> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for m in messages {
        let toks = m.as_ref();
        for (i, t) in toks.iter().enumerate() {
            if !targets.contains(t) {
                continue;
            }
            let lo = if side == Side::Right {
                i + 1
            } else {
                i.saturating_sub(window)
            };
            let hi = if side == Side::Left {
                i
            } else {
                (i + window + 1).min(toks.len())
            };
            for (j, other) in toks.iter().enumerate().take(hi).skip(lo) {
                if j == i || targets.contains(other) || stopwords.contains(other) {
                    continue;
                }
                *counts.entry(other.clone()).or_default() += 1;
            }
        }
    }
    counts
}

/// Collocates of `targets` ranked by raw count.
///
/// PMI treats each token position as one window: with `N` tokens, target
/// occurrences `c_t`, term occurrences `c_w` and collocation count `c_tw`,
/// `pmi = ln((c_tw + 1) N / ((c_t + 1)(c_w + 1)))`.
pub fn collocates<M: AsRef<[String]>>(
    messages: &[M],
    targets: &BTreeSet<String>,
    window: usize,
    top_n: usize,
    stopwords: &Stopwords,
) -> Result<CollocationTable> {
    if window == 0 {
        return Err(Error::Config(
            "collocation window must be at least 1".into(),
        ));
    }
    let counts = collocate_counts(messages, targets, window, Side::Both, stopwords);
    let mut freq: HashMap<&str, u64> = HashMap::new();
    let mut n = 0u64;
    for m in messages {
        for t in m.as_ref() {
            *freq.entry(t.as_str()).or_default() += 1;
            n += 1;
        }
    }
    let c_t: u64 = targets
        .iter()
        .map(|t| freq.get(t.as_str()).copied().unwrap_or(0))
        .sum();
    let mut rows: Vec<Collocate> = counts
        .into_iter()
        .map(|(term, count)| {
            let c_w = freq.get(term.as_str()).copied().unwrap_or(0);
            let pmi =
                ((count as f64 + 1.0) * n as f64 / ((c_t as f64 + 1.0) * (c_w as f64 + 1.0))).ln();
            Collocate {
                term,
                count,
                pmi,
                corpus_count: c_w,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.term.cmp(&b.term)));
    rows.truncate(top_n);
    Ok(CollocationTable {
        targets: targets.iter().cloned().collect(),
        rows,
    })
}

/// Particles that turn a preceding verb into a phrasal verb.
#[derive(Debug, Clone)]
pub struct Particles(HashSet<String>);

impl Particles {
    pub fn parse(text: &str) -> Self {
        Particles(list_lines(text).map(str::to_lowercase).collect())
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_PARTICLES)
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbReport {
    /// Count descending, ties lexicographic.
    pub simple: Vec<(String, u64)>,
    pub phrasal: Vec<(String, u64)>,
}

impl VerbReport {
    /// CSV `verb,count,kind`, simple verbs first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("verb,count,kind\n");
        for (v, c) in &self.simple {
            out.push_str(&format!("{},{c},simple\n", csv_field(v)));
        }
        for (v, c) in &self.phrasal {
            out.push_str(&format!("{},{c},phrasal\n", csv_field(v)));
        }
        out
    }
}

fn ranked(counts: HashMap<String, u64>) -> Vec<(String, u64)> {
    let mut v: Vec<(String, u64)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Simple and phrasal verbs in tokenised messages. A token is a verb when
/// its lemma is a known verb; a particle at most two tokens later makes it
/// a phrasal verb `verb_particle`. Stop-verbs are left out of both lists.
pub fn extract_verbs<M: AsRef<[String]>>(
    messages: &[M],
    lemmatizer: &Lemmatizer,
    particles: &Particles,
) -> VerbReport {
    let stop: HashSet<&str> = STOP_VERBS.into_iter().collect();
    let mut simple: HashMap<String, u64> = HashMap::new();
    let mut phrasal: HashMap<String, u64> = HashMap::new();
    for m in messages {
        let toks = m.as_ref();
        for (i, t) in toks.iter().enumerate() {
            let lemma = lemmatizer.lemmatize(t);
            if !lemmatizer.is_verb(&lemma) || stop.contains(lemma.as_str()) {
                continue;
            }
            if let Some(p) = toks
                .iter()
                .skip(i + 1)
                .take(2)
                .find(|w| particles.contains(w))
            {
                *phrasal.entry(format!("{lemma}_{p}")).or_default() += 1;
            }
            *simple.entry(lemma).or_default() += 1;
        }
    }
    VerbReport {
        simple: ranked(simple),
        phrasal: ranked(phrasal),
    }
}

/// Emojis appearing alongside any anchor emoji. Each distinct non-anchor
/// emoji counts at most once per message.
pub fn emoji_cooccurrence<'a, I>(
    messages: I,
    anchors: &BTreeSet<String>,
    top_n: usize,
) -> Result<Vec<(String, u64)>>
where
    I: IntoIterator<Item = &'a str>,
{
    if anchors.is_empty() {
        return Err(Error::Config(
            "emoji co-occurrence needs at least one anchor".into(),
        ));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for text in messages {
        let scan = emoji_sequences(text);
        if !scan.emojis.iter().any(|e| anchors.contains(e)) {
            continue;
        }
        let others: BTreeSet<&String> = scan
            .emojis
            .iter()
            .filter(|e| !anchors.contains(*e))
            .collect();
        for e in others {
            *counts.entry(e.clone()).or_default() += 1;
        }
    }
    let mut v = ranked(counts.into_iter().collect());
    v.truncate(top_n);
    Ok(v)
}

pub fn emoji_csv(rows: &[(String, u64)]) -> String {
    let mut out = String::from("emoji,count\n");
    for (e, c) in rows {
        out.push_str(&format!("{},{c}\n", csv_field(e)));
    }
    out
}
