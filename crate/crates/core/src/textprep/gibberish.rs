//! Character-bigram Markov model for spotting keyboard-mash spam.
//!
//! Text is projected onto a 27-symbol alphabet (`a`-`z` plus space): letters
//! are lowercased, everything else becomes a space, and runs of spaces are
//! collapsed. A string's score is the mean log-probability of its
//! character transitions under the model.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const ALPHABET: usize = 27;
const SPACE: usize = 26;

/// Recommended minimum size of the training reference text.
pub const MIN_REFERENCE_CHARS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GibberishModel {
    /// Row-normalised transition log-probabilities, `log_prob[from][to]`.
    pub log_prob: Vec<[f64; ALPHABET]>,
    pub threshold: f64,
}

/// Score bounds observed on the training lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationBounds {
    pub min_good: f64,
    pub max_bad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibberishScore {
    /// `None` when the projected text has no transitions.
    pub score: Option<f64>,
    pub is_gibberish: bool,
}

fn symbol(c: char) -> usize {
    if c.is_ascii_lowercase() {
        (c as u8 - b'a') as usize
    } else {
        SPACE
    }
}

/// Projects text onto the model alphabet as symbol indices.
pub fn project(text: &str) -> Vec<usize> {
    let mut out = Vec::with_capacity(text.len());
    for c in text.chars().flat_map(char::to_lowercase) {
        let s = symbol(c);
        if s == SPACE && out.last().is_none_or(|&l| l == SPACE) {
            continue;
        }
        out.push(s);
    }
    if out.last() == Some(&SPACE) {
        out.pop();
    }
    out
}

fn transition_counts(reference: &str) -> Vec<[f64; ALPHABET]> {
    // add-one smoothing
    let mut counts = vec![[1.0f64; ALPHABET]; ALPHABET];
    for line in reference.lines() {
        let symbols = project(line);
        for w in symbols.windows(2) {
            counts[w[0]][w[1]] += 1.0;
        }
    }
    counts
}

fn mean_log_prob(log_prob: &[[f64; ALPHABET]], text: &str) -> Option<f64> {
    let symbols = project(text);
    if symbols.len() < 2 {
        return None;
    }
    let total: f64 = symbols.windows(2).map(|w| log_prob[w[0]][w[1]]).sum();
    Some(total / (symbols.len() - 1) as f64)
}

impl GibberishModel {
    /// Fits transition probabilities on `reference` and places the threshold
    /// midway between the lowest-scoring good line and the highest-scoring
    /// bad line.
    pub fn train<G, B>(
        reference: &str,
        good_lines: &[G],
        bad_lines: &[B],
    ) -> Result<(Self, SeparationBounds)>
    where
        G: AsRef<str>,
        B: AsRef<str>,
    {
        if good_lines.is_empty() || bad_lines.is_empty() {
            return Err(Error::Config(
                "gibberish training needs good and bad lines".into(),
            ));
        }
        if reference.chars().count() < MIN_REFERENCE_CHARS {
            log::warn!("gibberish reference text has fewer than {MIN_REFERENCE_CHARS} characters");
        }
        let log_prob: Vec<[f64; ALPHABET]> = transition_counts(reference)
            .into_iter()
            .map(|row| {
                let total: f64 = row.iter().sum();
                row.map(|c| (c / total).ln())
            })
            .collect();

        let scores = |lines: &mut dyn Iterator<Item = &str>| -> Vec<f64> {
            lines.filter_map(|l| mean_log_prob(&log_prob, l)).collect()
        };
        let good = scores(&mut good_lines.iter().map(|l| l.as_ref()));
        let bad = scores(&mut bad_lines.iter().map(|l| l.as_ref()));
        if good.is_empty() || bad.is_empty() {
            return Err(Error::Config(
                "gibberish training lines have no scorable characters".into(),
            ));
        }
        let min_good = good.iter().copied().fold(f64::INFINITY, f64::min);
        let max_bad = bad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min_good <= max_bad {
            return Err(Error::NotSeparable { min_good, max_bad });
        }
        let model = GibberishModel {
            log_prob,
            threshold: (min_good + max_bad) / 2.0,
        };
        Ok((model, SeparationBounds { min_good, max_bad }))
    }

    pub fn score(&self, text: &str) -> GibberishScore {
        match mean_log_prob(&self.log_prob, text) {
            Some(s) => GibberishScore {
                score: Some(s),
                is_gibberish: s < self.threshold,
            },
            None => GibberishScore {
                score: None,
                is_gibberish: false,
            },
        }
    }

    pub fn is_gibberish(&self, text: &str) -> bool {
        self.score(text).is_gibberish
    }

    /// TSV: a version line, 27 rows of 27 log-probabilities, then the
    /// threshold line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# gibberish-model v1\n");
        for row in &self.log_prob {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        let _ = writeln!(out, "threshold\t{}", self.threshold);
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let bad = |d: &str| Error::format("gibberish model", d.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("# gibberish-model v1") {
            return Err(bad("missing version header"));
        }
        let mut log_prob = Vec::with_capacity(ALPHABET);
        for _ in 0..ALPHABET {
            let line = lines.next().ok_or_else(|| bad("truncated matrix"))?;
            let vals: Vec<f64> = line
                .split('\t')
                .map(|c| c.parse::<f64>().map_err(|e| bad(&e.to_string())))
                .collect::<Result<_>>()?;
            let row: [f64; ALPHABET] = vals
                .try_into()
                .map_err(|_| bad("row does not have 27 columns"))?;
            log_prob.push(row);
        }
        let threshold = lines
            .next()
            .and_then(|l| l.strip_prefix("threshold\t"))
            .ok_or_else(|| bad("missing threshold line"))?
            .parse::<f64>()
            .map_err(|e| bad(&e.to_string()))?;
        Ok(GibberishModel {
            log_prob,
            threshold,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }
}

pub(crate) const BUNDLED_REFERENCE: &str = include_str!("../../data/reference_en.txt");
pub(crate) const BUNDLED_GOOD: &str = include_str!("../../data/gibberish_good.txt");
pub(crate) const BUNDLED_BAD: &str = include_str!("../../data/gibberish_bad.txt");

fn data_lines(text: &str) -> Vec<&str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Trains on the bundled public-domain reference text and labelled lines.
pub fn bundled_model() -> Result<(GibberishModel, SeparationBounds)> {
    GibberishModel::train(
        BUNDLED_REFERENCE,
        &data_lines(BUNDLED_GOOD),
        &data_lines(BUNDLED_BAD),
    )
}
