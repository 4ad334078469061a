//! Chat text normalisation and chat-log document assembly.

mod gibberish;
mod lemma;
mod substitute;
mod tokenize;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gibberish::{
    bundled_model as bundled_gibberish_model, project, GibberishModel, GibberishScore,
    SeparationBounds, ALPHABET, MIN_REFERENCE_CHARS,
};
pub use lemma::Lemmatizer;
pub use substitute::{SubstitutionPlan, CLOTHING_TERM, OPEN_TERM, SEX_TERM, SHOW_TERM};
pub use tokenize::{
    emoji_only_fraction, emoji_sequences, is_emoji_char, is_emoji_grapheme, tokenize, EmojiScan,
    Token, TokenKind, MAX_WORD_LEN, MIN_WORD_LEN,
};

pub(crate) use lemma::list_lines;

use crate::corpus::{Broadcast, ChatMessage};
use crate::error::{Error, Result};

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Countries whose broadcasts are modelled by default.
pub const DEFAULT_COUNTRIES: [&str; 5] = ["US", "GB", "AU", "CA", "NZ"];

/// Broadcasts with fewer raw messages than this are excluded.
pub const DEFAULT_MIN_MESSAGES: usize = 10;

#[derive(Debug, Clone, Default)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// One token per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        Stopwords(list_lines(text).map(|l| l.to_lowercase()).collect())
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Reads a term list: one entry per line, `#` comments, blank lines skipped.
pub fn load_term_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(list_lines(&text).map(|l| l.to_lowercase()).collect())
}

/// All preprocessed tokens of one broadcast's chat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatLogDocument {
    pub broadcast_id: String,
    pub tokens: Vec<String>,
    pub users: usize,
}

pub struct DocumentConfig {
    pub countries: BTreeSet<String>,
    pub min_messages: usize,
    pub stopwords: Stopwords,
    pub plan: SubstitutionPlan,
    pub gibberish: Option<GibberishModel>,
    pub lemmatizer: Lemmatizer,
}

impl DocumentConfig {
    pub fn with_defaults(plan: SubstitutionPlan, gibberish: Option<GibberishModel>) -> Self {
        DocumentConfig {
            countries: DEFAULT_COUNTRIES.iter().map(|c| c.to_string()).collect(),
            min_messages: DEFAULT_MIN_MESSAGES,
            stopwords: Stopwords::bundled(),
            plan,
            gibberish,
            lemmatizer: Lemmatizer::bundled(),
        }
    }

    /// Runs the per-message pipeline; `None` when the message is gibberish.
    ///
    /// Order: tokenize, gibberish check, stopword removal, substitution,
    /// lemmatization. Lemmas are substituted and stop-filtered once more so
    /// that inflected forms of planned terms ("shirts") and lemmas that are
    /// stopwords ("having" -> "have") cannot leak into the document.
    pub fn preprocess_message(&self, text: &str) -> Option<Vec<Token>> {
        if let Some(model) = &self.gibberish {
            if model.is_gibberish(text) {
                return None;
            }
        }
        let tokens: Vec<Token> = tokenize(text)
            .into_iter()
            .filter(|t| t.kind != TokenKind::Word || !self.stopwords.contains(&t.surface))
            .collect();
        let tokens = self.plan.substitute(tokens);
        let tokens: Vec<Token> = tokens
            .into_iter()
            .map(|t| match t.kind {
                TokenKind::Word => Token::word(self.lemmatizer.lemmatize(&t.surface)),
                _ => t,
            })
            .collect();
        let tokens = self
            .plan
            .substitute(tokens)
            .into_iter()
            .filter(|t| t.kind != TokenKind::Word || !self.stopwords.contains(&t.surface))
            .collect();
        Some(tokens)
    }
}

/// Why broadcasts were left out of the document set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentStats {
    pub excluded_country: usize,
    pub excluded_short: usize,
    pub excluded_empty: usize,
    pub gibberish_messages: usize,
    pub documents: usize,
}

pub fn build_documents(
    broadcasts: &[Broadcast],
    messages: &[ChatMessage],
    cfg: &DocumentConfig,
) -> (Vec<ChatLogDocument>, DocumentStats) {
    let mut by_broadcast: HashMap<&str, Vec<&ChatMessage>> = HashMap::new();
    for m in messages {
        by_broadcast
            .entry(m.broadcast_id.as_str())
            .or_default()
            .push(m);
    }
    for msgs in by_broadcast.values_mut() {
        msgs.sort_by_key(|m| m.timestamp);
    }

    let mut stats = DocumentStats::default();
    let mut candidates = Vec::new();
    for b in broadcasts {
        if !cfg.countries.contains(&b.country) {
            stats.excluded_country += 1;
            continue;
        }
        let msgs = by_broadcast
            .get(b.id.as_str())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        if msgs.len() < cfg.min_messages {
            stats.excluded_short += 1;
            continue;
        }
        candidates.push((b, msgs));
    }

    let built: Vec<(Option<ChatLogDocument>, usize)> = candidates
        .par_iter()
        .map(|(b, msgs)| {
            let mut tokens = Vec::new();
            let mut users = HashSet::new();
            let mut dropped = 0;
            for m in msgs.iter() {
                users.insert(m.user_id.as_str());
                match cfg.preprocess_message(&m.text) {
                    Some(toks) => tokens.extend(toks.into_iter().map(|t| t.surface)),
                    None => dropped += 1,
                }
            }
            let doc = (!tokens.is_empty()).then(|| ChatLogDocument {
                broadcast_id: b.id.clone(),
                tokens,
                users: users.len(),
            });
            (doc, dropped)
        })
        .collect();

    let mut docs = Vec::with_capacity(built.len());
    for (doc, dropped) in built {
        stats.gibberish_messages += dropped;
        match doc {
            Some(d) => docs.push(d),
            None => stats.excluded_empty += 1,
        }
    }
    stats.documents = docs.len();
    (docs, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn broadcast(id: &str, country: &str) -> Broadcast {
        Broadcast {
            id: id.into(),
            owner_id: id.into(),
            country: country.into(),
            duration_s: 0,
            total_viewers: 0,
            likes: 0,
            likers: 0,
            new_followers: 0,
            gifts: vec![],
            shares: 0,
            blocks: 0,
        }
    }

    fn messages(b: &str, texts: &[&str]) -> Vec<ChatMessage> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| ChatMessage {
                broadcast_id: b.into(),
                user_id: format!("u{}", i % 3),
                timestamp: i as i64,
                text: t.to_string(),
            })
            .collect()
    }

    fn plan() -> SubstitutionPlan {
        SubstitutionPlan::new(vec![
            (SEX_TERM, vec!["boobs", "boobz"]),
            (CLOTHING_TERM, vec!["shirt", "👗"]),
            (SHOW_TERM, vec!["show"]),
            (OPEN_TERM, vec!["open"]),
        ])
        .unwrap()
    }

    #[test]
    fn bundled_stopwords_match_reference_list() {
        let s = Stopwords::bundled();
        assert_eq!(s.len(), 179);
        assert!(s.contains("off") && s.contains("don't") && !s.contains("show"));
    }

    #[test]
    fn short_broadcast_excluded() {
        let (model, _) = bundled_gibberish_model().unwrap();
        let cfg = DocumentConfig::with_defaults(plan(), Some(model));
        let msgs = messages("b1", &["hello there friend"; 9]);
        let (docs, stats) = build_documents(&[broadcast("b1", "US")], &msgs, &cfg);
        assert!(docs.is_empty());
        assert_eq!(stats.excluded_short, 1);
    }

    #[test]
    fn foreign_broadcast_excluded() {
        let cfg = DocumentConfig::with_defaults(plan(), None);
        let msgs = messages("b1", &["hello there friend"; 12]);
        let (docs, stats) = build_documents(&[broadcast("b1", "DE")], &msgs, &cfg);
        assert!(docs.is_empty());
        assert_eq!(stats.excluded_country, 1);
    }

    #[test]
    fn planted_gibberish_message_is_dropped() {
        let (model, _) = bundled_gibberish_model().unwrap();
        let cfg = DocumentConfig::with_defaults(plan(), Some(model));
        let mut texts = vec!["nice song today"; 11];
        texts.insert(5, "xqzvkw jrtpq zzkvq");
        let msgs = messages("b1", &texts);
        let (docs, stats) = build_documents(&[broadcast("b1", "US")], &msgs, &cfg);
        assert_eq!(docs.len(), 1);
        assert_eq!(stats.gibberish_messages, 1);
        // "nice song today" contributes three tokens per kept message
        assert_eq!(docs[0].tokens.len(), 33);
        assert_eq!(docs[0].users, 3);
    }

    #[test]
    fn pipeline_substitutes_lemmatizes_and_filters() {
        let cfg = DocumentConfig::with_defaults(plan(), None);
        let toks = cfg
            .preprocess_message("Show me your BOOBZ and open those shirts 👗 having fun")
            .unwrap();
        let surf: Vec<&str> = toks.iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(
            surf,
            vec![
                "SHOW_TERM",
                "SEX_TERM",
                "OPEN_TERM",
                "CLOTHING_TERM",
                "CLOTHING_TERM",
                "fun"
            ]
        );
    }

    #[test]
    fn documents_have_no_stopwords_or_planned_terms() {
        let cfg = DocumentConfig::with_defaults(plan(), None);
        let texts = [
            "i will show you my shirts",
            "you are having boobs lol",
            "open it up now please",
            "doing the show again",
            "wearing a shirt 👗",
            "what is that",
            "so cute",
            "hello hello",
            "having fun",
            "the boobz",
        ];
        let msgs = messages("b1", &texts);
        let (docs, _) = build_documents(&[broadcast("b1", "GB")], &msgs, &cfg);
        let sw = Stopwords::bundled();
        for t in &docs[0].tokens {
            assert!(!sw.contains(t), "stopword {t}");
            assert!(!cfg.plan.contains_term(t), "raw planned term {t}");
        }
    }
}
