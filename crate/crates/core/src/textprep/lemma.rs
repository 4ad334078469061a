use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

const BUNDLED_EXCEPTIONS: &str = include_str!("../../data/lemma_exceptions.tsv");
const BUNDLED_VERBS: &str = include_str!("../../data/verbs_en.txt");

/// Minimum stem length a suffix rule may leave behind.
const MIN_STEM: usize = 3;

/// Dictionary-backed lemmatizer: irregular forms come from an exception
/// table, everything else goes through longest-match suffix rules applied
/// until no rule fires. Table lemmas and known base verbs are terminal, which
/// makes the mapping idempotent.
#[derive(Debug, Clone)]
pub struct Lemmatizer {
    exceptions: HashMap<String, String>,
    terminal: HashSet<String>,
    verbs: HashSet<String>,
}

pub(crate) fn list_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
}

fn has_vowel(s: &str) -> bool {
    s.chars()
        .any(|c| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y'))
}

fn ends_with_double_consonant(s: &str) -> bool {
    let mut it = s.chars().rev();
    match (it.next(), it.next()) {
        (Some(a), Some(b)) => a == b && matches!(a, 'b' | 'd' | 'g' | 'm' | 'n' | 'p' | 'r' | 't'),
        _ => false,
    }
}

impl Lemmatizer {
    pub fn new(exceptions_tsv: &str, verbs: &str) -> Result<Self> {
        let mut exceptions = HashMap::new();
        for line in list_lines(exceptions_tsv) {
            let (form, lemma) = line
                .split_once('\t')
                .ok_or_else(|| Error::format("lemma exceptions", format!("no tab in {line:?}")))?;
            exceptions.insert(form.to_string(), lemma.to_string());
        }
        for (form, lemma) in &exceptions {
            if let Some(again) = exceptions.get(lemma) {
                if again != lemma {
                    return Err(Error::format(
                        "lemma exceptions",
                        format!("{form} -> {lemma} -> {again} is not terminal"),
                    ));
                }
            }
        }
        let verbs: HashSet<String> = list_lines(verbs).map(str::to_string).collect();
        let mut terminal: HashSet<String> = exceptions.values().cloned().collect();
        terminal.extend(
            verbs
                .iter()
                .filter(|v| !exceptions.contains_key(*v))
                .cloned(),
        );
        Ok(Lemmatizer {
            exceptions,
            terminal,
            verbs,
        })
    }

    pub fn bundled() -> Self {
        Self::new(BUNDLED_EXCEPTIONS, BUNDLED_VERBS).expect("bundled lemma tables are consistent")
    }

    pub fn is_verb(&self, lemma: &str) -> bool {
        self.verbs.contains(lemma)
    }

    pub fn lemmatize(&self, word: &str) -> String {
        let mut w = word.to_string();
        loop {
            if let Some(l) = self.exceptions.get(&w) {
                return l.clone();
            }
            if self.terminal.contains(&w) {
                return w;
            }
            match self.strip_once(&w) {
                Some(next) => w = next,
                None => return w,
            }
        }
    }

    fn stem_ok(stem: &str) -> bool {
        stem.chars().count() >= MIN_STEM && has_vowel(stem)
    }

    /// Repairs the stem left by removing -ing / -ed.
    fn verb_stem(&self, stem: &str) -> Option<String> {
        if !Self::stem_ok(stem) {
            return None;
        }
        if ends_with_double_consonant(stem) {
            let mut s = stem.to_string();
            s.pop();
            return Some(s);
        }
        let with_e = format!("{stem}e");
        if self.verbs.contains(&with_e) && !self.verbs.contains(stem) {
            return Some(with_e);
        }
        Some(stem.to_string())
    }

    fn strip_once(&self, w: &str) -> Option<String> {
        let replace = |suffix: &str, with: &str| -> Option<String> {
            let stem = w.strip_suffix(suffix)?;
            Self::stem_ok(stem).then(|| format!("{stem}{with}"))
        };
        if let Some(s) = replace("iest", "y") {
            return Some(s);
        }
        if let Some(s) = replace("sses", "ss") {
            return Some(s);
        }
        for suffix in ["ches", "shes", "xes", "zzes"] {
            if w.ends_with(suffix) {
                if let Some(s) = replace("es", "") {
                    return Some(s);
                }
            }
        }
        for suffix in ["ies", "ied", "ier"] {
            if let Some(s) = replace(suffix, "y") {
                return Some(s);
            }
        }
        if let Some(stem) = w.strip_suffix("ing") {
            if let Some(s) = self.verb_stem(stem) {
                return Some(s);
            }
        }
        if let Some(stem) = w.strip_suffix("ed") {
            if !stem.ends_with('e') {
                if let Some(s) = self.verb_stem(stem) {
                    return Some(s);
                }
            }
        }
        if let Some(s) = replace("'s", "") {
            return Some(s);
        }
        if w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
            return replace("s", "");
        }
        None
    }
}
