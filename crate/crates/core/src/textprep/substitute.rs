use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::textprep::tokenize::{Token, TokenKind};

pub const SEX_TERM: &str = "SEX_TERM";
pub const CLOTHING_TERM: &str = "CLOTHING_TERM";
pub const SHOW_TERM: &str = "SHOW_TERM";
pub const OPEN_TERM: &str = "OPEN_TERM";

/// Ordered mapping from placeholder name to the surface terms it replaces.
///
/// Term sets are disjoint: a term requested by several placeholders belongs
/// to the first one listed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubstitutionPlan {
    entries: Vec<(String, BTreeSet<String>)>,
    lookup: HashMap<String, usize>,
}

fn valid_placeholder(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_uppercase() || b == b'_')
}

impl SubstitutionPlan {
    pub fn new<I, N, T, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (N, T)>,
        N: Into<String>,
        T: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut plan = SubstitutionPlan::default();
        for (name, terms) in entries {
            let name = name.into();
            if !valid_placeholder(&name) {
                return Err(Error::Config(format!(
                    "placeholder {name:?} must be uppercase letters and underscores"
                )));
            }
            if plan.entries.iter().any(|(n, _)| *n == name) {
                return Err(Error::Config(format!("placeholder {name} listed twice")));
            }
            let idx = plan.entries.len();
            let mut set = BTreeSet::new();
            for t in terms {
                let t = t.as_ref().trim().to_lowercase();
                if t.is_empty() || plan.lookup.contains_key(&t) {
                    continue;
                }
                plan.lookup.insert(t.clone(), idx);
                set.insert(t);
            }
            plan.entries.push((name, set));
        }
        Ok(plan)
    }

    pub fn is_empty(&self) -> bool {
        self.lookup.is_empty()
    }

    pub fn entries(&self) -> &[(String, BTreeSet<String>)] {
        &self.entries
    }

    pub fn placeholder_names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn placeholder_for(&self, term: &str) -> Option<&str> {
        self.lookup.get(term).map(|&i| self.entries[i].0.as_str())
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.lookup.contains_key(term)
    }

    pub fn substitute(&self, tokens: Vec<Token>) -> Vec<Token> {
        tokens
            .into_iter()
            .map(|t| match (t.kind, self.placeholder_for(&t.surface)) {
                (TokenKind::Placeholder, _) | (_, None) => t,
                (_, Some(p)) => Token::placeholder(p),
            })
            .collect()
    }

    /// `placeholder<TAB>term` per line, placeholders in plan order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (name, terms) in &self.entries {
            if terms.is_empty() {
                let _ = writeln!(out, "{name}\t");
            }
            for t in terms {
                let _ = writeln!(out, "{name}\t{t}");
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (name, term) = line
                .split_once('\t')
                .ok_or_else(|| Error::format("substitution plan", format!("no tab in {line:?}")))?;
            match entries.last_mut() {
                Some((n, terms)) if n == name => terms.push(term.to_string()),
                _ => entries.push((name.to_string(), vec![term.to_string()])),
            }
        }
        Self::new(entries)
    }
}
