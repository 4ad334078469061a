//! Subword skip-gram embeddings with negative sampling, nearest-neighbour
//! search and seed-lexicon expansion.
//!
//! A word is represented by its own input row plus one row per hashed
//! character n-gram of `<word>`; its vector is the mean of those rows. Unknown
//! words fall back to the mean of whichever of their n-grams were seen during
//! training.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CSEM";
const VERSION: u32 = 1;

/// Below this many training tokens the vectors are mostly noise.
pub const MIN_USEFUL_TOKENS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dimension: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub minn: usize,
    pub maxn: usize,
    pub buckets: u32,
    pub learning_rate: f64,
    /// Frequent-token subsampling threshold; `None` disables subsampling.
    pub subsample: Option<f64>,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dimension: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 5,
            minn: 3,
            maxn: 6,
            buckets: 2_000_000,
            learning_rate: 0.05,
            subsample: None,
            seed: 1,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dimension < 8 {
            problems.push("dimension must be at least 8".to_string());
        }
        if self.minn == 0 || self.minn > self.maxn {
            problems.push(format!(
                "n-gram range {}..{} is empty",
                self.minn, self.maxn
            ));
        }
        if self.window == 0
            || self.negatives == 0
            || self.epochs == 0
            || self.min_count == 0
            || self.buckets == 0
        {
            problems
                .push("window, negatives, epochs, min_count and buckets must be positive".into());
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            problems.push("learning rate must be positive".into());
        }
        if let Some(t) = self.subsample {
            if t.is_nan() || t <= 0.0 {
                problems.push("subsample threshold must be positive".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

fn fnv1a(s: &str) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for b in s.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(16_777_619);
    }
    h
}

/// Hashed buckets of every character n-gram of `<word>` with length in
/// `minn..=maxn`.
pub fn ngram_buckets(word: &str, minn: usize, maxn: usize, buckets: u32) -> Vec<u32> {
    let marked: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    let mut gram = String::new();
    for start in 0..marked.len() {
        for n in minn..=maxn {
            let end = start + n;
            if end > marked.len() {
                break;
            }
            gram.clear();
            gram.extend(&marked[start..end]);
            out.push(fnv1a(&gram) % buckets);
        }
    }
    out
}

/// How a term's vector was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Vocabulary,
    Subwords,
    /// No trained n-gram covers the term; the vector is all zeros.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub term: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborList {
    pub query: String,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub cfg: EmbeddingConfig,
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    /// Input row of each bucket seen during training.
    bucket_rows: HashMap<u32, u32>,
    /// Input rows making up each vocabulary word (own row first).
    subwords: Vec<Vec<u32>>,
    input: Vec<f32>,
    output: Vec<f32>,
    /// Unit-normalised composed vectors of the vocabulary, for kNN.
    unit: Vec<f32>,
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Cosine distance `1 - cos(a, b)`; 1 when either vector is zero.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 1.0;
    }
    (1.0 - ab / (aa.sqrt() * bb.sqrt())).clamp(0.0, 2.0)
}

struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

fn build_vocab<S: AsRef<[String]>>(sentences: &[S], min_count: u64) -> Vocab {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for t in s.as_ref() {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let words: Vec<String> = kept.iter().map(|(w, _)| w.to_string()).collect();
    let counts = kept.iter().map(|&(_, c)| c).collect();
    let index = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i as u32))
        .collect();
    Vocab {
        words,
        counts,
        index,
    }
}

/// Trains skip-gram with negative sampling over `sentences`; context windows
/// never cross sentence boundaries. Training is single-worker, so the result
/// is a pure function of the input and `cfg.seed`.
pub fn train_embeddings<S: AsRef<[String]>>(
    sentences: &[S],
    cfg: &EmbeddingConfig,
) -> Result<EmbeddingModel> {
    cfg.validate()?;
    let vocab = build_vocab(sentences, cfg.min_count);
    if vocab.words.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dim = cfg.dimension;
    let nwords = vocab.words.len();

    let mut bucket_rows = HashMap::new();
    let mut subwords = Vec::with_capacity(nwords);
    for (i, w) in vocab.words.iter().enumerate() {
        let mut rows = vec![i as u32];
        for b in ngram_buckets(w, cfg.minn, cfg.maxn, cfg.buckets) {
            let next = (nwords + bucket_rows.len()) as u32;
            rows.push(*bucket_rows.entry(b).or_insert(next));
        }
        subwords.push(rows);
    }
    let nrows = nwords + bucket_rows.len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 1.0 / dim as f32;
    let mut input: Vec<f32> = (0..nrows * dim)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    let mut output = vec![0.0f32; nwords * dim];

    let stream: Vec<Vec<u32>> = sentences
        .iter()
        .map(|s| {
            s.as_ref()
                .iter()
                .filter_map(|t| vocab.index.get(t).copied())
                .collect()
        })
        .collect();
    let total_tokens: usize = stream.iter().map(Vec::len).sum();
    if total_tokens < MIN_USEFUL_TOKENS {
        log::warn!(
            "embedding corpus has only {total_tokens} tokens; neighbours will be unreliable"
        );
    }

    let weights: Vec<f64> = vocab.counts.iter().map(|&c| (c as f64).sqrt()).collect();
    let negative_dist =
        WeightedAliasIndex::new(weights).map_err(|e| Error::Config(e.to_string()))?;
    let discard: Option<Vec<f64>> = cfg.subsample.map(|t| {
        vocab
            .counts
            .iter()
            .map(|&c| {
                let f = c as f64 / total_tokens as f64;
                (t / f).sqrt() + t / f
            })
            .collect()
    });

    let mut hidden = vec![0.0f32; dim];
    let mut grad = vec![0.0f32; dim];
    let planned = (cfg.epochs * total_tokens).max(1) as f64;
    let mut processed = 0usize;
    let mut kept = Vec::new();
    for _ in 0..cfg.epochs {
        for sentence in &stream {
            kept.clear();
            match &discard {
                Some(keep_p) => kept.extend(
                    sentence
                        .iter()
                        .copied()
                        .filter(|&w| rng.random::<f64>() <= keep_p[w as usize]),
                ),
                None => kept.extend_from_slice(sentence),
            }
            let lr = (cfg.learning_rate * (1.0 - processed as f64 / planned))
                .max(cfg.learning_rate * 1e-4) as f32;
            processed += sentence.len();
            for (pos, &center) in kept.iter().enumerate() {
                let reach = rng.random_range(1..=cfg.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(kept.len() - 1);
                let rows = &subwords[center as usize];
                for (cpos, &context) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    hidden.fill(0.0);
                    for &r in rows {
                        let row = &input[r as usize * dim..(r as usize + 1) * dim];
                        hidden.iter_mut().zip(row).for_each(|(h, v)| *h += v);
                    }
                    let inv = 1.0 / rows.len() as f32;
                    hidden.iter_mut().for_each(|h| *h *= inv);
                    grad.fill(0.0);

                    let mut step = |target: u32, label: f32, output: &mut [f32]| {
                        let out = &mut output[target as usize * dim..(target as usize + 1) * dim];
                        let g = lr * (label - sigmoid(dot(&hidden, out)));
                        grad.iter_mut()
                            .zip(out.iter())
                            .for_each(|(a, o)| *a += g * o);
                        out.iter_mut().zip(&hidden).for_each(|(o, h)| *o += g * h);
                    };
                    step(context, 1.0, &mut output);
                    for _ in 0..cfg.negatives {
                        let neg = loop {
                            let n = negative_dist.sample(&mut rng) as u32;
                            if n != context || nwords == 1 {
                                break n;
                            }
                        };
                        if neg != context {
                            step(neg, 0.0, &mut output);
                        }
                    }
                    for &r in rows {
                        let row = &mut input[r as usize * dim..(r as usize + 1) * dim];
                        row.iter_mut().zip(&grad).for_each(|(v, g)| *v += g);
                    }
                }
            }
        }
    }

    let mut model = EmbeddingModel {
        cfg: cfg.clone(),
        words: vocab.words,
        counts: vocab.counts,
        index: vocab.index,
        bucket_rows,
        subwords,
        input,
        output,
        unit: Vec::new(),
    };
    model.refresh_unit();
    Ok(model)
}

impl EmbeddingModel {
    pub fn dimension(&self) -> usize {
        self.cfg.dimension
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, term: &str) -> Option<u64> {
        self.index.get(term).map(|&i| self.counts[i as usize])
    }

    fn mean_rows(&self, rows: &[u32]) -> Vec<f32> {
        let dim = self.cfg.dimension;
        let mut v = vec![0.0f32; dim];
        if rows.is_empty() {
            return v;
        }
        for &r in rows {
            let row = &self.input[r as usize * dim..(r as usize + 1) * dim];
            v.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / rows.len() as f32;
        v.iter_mut().for_each(|a| *a *= inv);
        v
    }

    fn refresh_unit(&mut self) {
        let dim = self.cfg.dimension;
        let mut unit = Vec::with_capacity(self.words.len() * dim);
        for rows in &self.subwords {
            let v = self.mean_rows(rows);
            let norm = dot(&v, &v).sqrt();
            let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            unit.extend(v.iter().map(|x| x * scale));
        }
        self.unit = unit;
    }

    pub fn vector(&self, term: &str) -> (Vec<f32>, Representation) {
        if let Some(&i) = self.index.get(term) {
            return (
                self.mean_rows(&self.subwords[i as usize]),
                Representation::Vocabulary,
            );
        }
        let rows: Vec<u32> = ngram_buckets(term, self.cfg.minn, self.cfg.maxn, self.cfg.buckets)
            .into_iter()
            .filter_map(|b| self.bucket_rows.get(&b).copied())
            .collect();
        if rows.is_empty() {
            (vec![0.0; self.cfg.dimension], Representation::Missing)
        } else {
            (self.mean_rows(&rows), Representation::Subwords)
        }
    }

    /// The `n` vocabulary terms closest to `term` by cosine distance,
    /// ascending, ties broken lexicographically; the query itself is excluded.
    pub fn nearest_neighbors(&self, term: &str, n: usize) -> Result<NeighborList> {
        let (v, rep) = self.vector(term);
        let norm = dot(&v, &v).sqrt();
        if rep == Representation::Missing || norm == 0.0 {
            return Err(Error::NoRepresentation(term.to_string()));
        }
        let dim = self.cfg.dimension;
        let q: Vec<f64> = v.iter().map(|&x| (x / norm) as f64).collect();
        let mut scored: Vec<(f64, usize)> = (0..self.words.len())
            .filter(|&i| self.words[i] != term)
            .map(|i| {
                let u = &self.unit[i * dim..(i + 1) * dim];
                let cos: f64 = q.iter().zip(u).map(|(a, &b)| a * b as f64).sum();
                let d = if u.iter().all(|&x| x == 0.0) {
                    1.0
                } else {
                    (1.0 - cos).clamp(0.0, 2.0)
                };
                (d, i)
            })
            .collect();
        scored.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| self.words[a.1].cmp(&self.words[b.1]))
        });
        scored.truncate(n);
        Ok(NeighborList {
            query: term.to_string(),
            neighbors: scored
                .into_iter()
                .map(|(distance, i)| Neighbor {
                    term: self.words[i].clone(),
                    distance,
                })
                .collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, inner: W) -> std::io::Result<()> {
        let c = &self.cfg;
        let mut w = BinWriter::new(inner, MAGIC, VERSION)?;
        for v in [c.dimension, c.window, c.negatives, c.epochs, c.minn, c.maxn] {
            w.u64(v as u64)?;
        }
        w.u64(c.min_count)?;
        w.u32(c.buckets)?;
        w.f64(c.learning_rate)?;
        w.f64(c.subsample.unwrap_or(0.0))?;
        w.u64(c.seed)?;
        w.u64(self.words.len() as u64)?;
        for (word, &count) in self.words.iter().zip(&self.counts) {
            w.str(word)?;
            w.u64(count)?;
        }
        let mut buckets: Vec<(u32, u32)> = self.bucket_rows.iter().map(|(&b, &r)| (b, r)).collect();
        buckets.sort_unstable_by_key(|&(_, r)| r);
        w.u32s(&buckets.iter().map(|&(b, _)| b).collect::<Vec<_>>())?;
        w.f32s(&self.input)?;
        w.f32s(&self.output)?;
        w.into_inner().flush()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn read_from<R: Read>(inner: R) -> Result<Self> {
        let (mut r, version) = BinReader::open(inner, MAGIC, "embedding model")?;
        if version != VERSION {
            return Err(Error::format(
                "embedding model",
                format!("unsupported version {version}"),
            ));
        }
        let mut next = || r.u64().map(|v| v as usize);
        let (dimension, window, negatives, epochs, minn, maxn) =
            (next()?, next()?, next()?, next()?, next()?, next()?);
        let min_count = r.u64()?;
        let buckets = r.u32()?;
        let learning_rate = r.f64()?;
        let subsample = Some(r.f64()?).filter(|&t| t > 0.0);
        let seed = r.u64()?;
        let cfg = EmbeddingConfig {
            dimension,
            window,
            negatives,
            epochs,
            min_count,
            minn,
            maxn,
            buckets,
            learning_rate,
            subsample,
            seed,
        };
        cfg.validate()?;
        let nwords = r.u64()? as usize;
        let mut words = Vec::with_capacity(nwords.min(1 << 20));
        let mut counts = Vec::with_capacity(nwords.min(1 << 20));
        for _ in 0..nwords {
            words.push(r.str()?);
            counts.push(r.u64()?);
        }
        let bucket_ids = r.u32s()?;
        let bucket_rows: HashMap<u32, u32> = bucket_ids
            .iter()
            .enumerate()
            .map(|(i, &b)| (b, (nwords + i) as u32))
            .collect();
        let input = r.f32s()?;
        let output = r.f32s()?;
        if input.len() != (nwords + bucket_ids.len()) * dimension
            || output.len() != nwords * dimension
        {
            return Err(Error::format(
                "embedding model",
                "matrix sizes do not match header",
            ));
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let subwords = words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut rows = vec![i as u32];
                rows.extend(
                    ngram_buckets(w, minn, maxn, buckets)
                        .into_iter()
                        .filter_map(|b| bucket_rows.get(&b).copied()),
                );
                rows
            })
            .collect();
        let mut model = EmbeddingModel {
            cfg,
            words,
            counts,
            index,
            bucket_rows,
            subwords,
            input,
            output,
            unit: Vec::new(),
        };
        model.refresh_unit();
        Ok(model)
    }

    /// `term\tv1\t...\tvd`, one vocabulary word per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for x in self.mean_rows(&self.subwords[i]) {
                out.push('\t');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Corpus occurrence statistics for a term.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCount {
    pub count: u64,
    pub broadcasts: u64,
    pub users: u64,
}

#[derive(Debug, Clone, Default)]
pub struct TermStats(HashMap<String, TermCount>);

impl TermStats {
    /// Builds statistics from `(broadcast_id, user_id, tokens)` triples.
    pub fn from_messages<'a, I, T>(messages: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, T)>,
        T: IntoIterator<Item = &'a str>,
    {
        let mut acc: HashMap<String, (u64, HashSet<&'a str>, HashSet<&'a str>)> = HashMap::new();
        for (b, u, tokens) in messages {
            for t in tokens {
                let e = acc.entry(t.to_string()).or_default();
                e.0 += 1;
                e.1.insert(b);
                e.2.insert(u);
            }
        }
        TermStats(
            acc.into_iter()
                .map(|(t, (count, bs, us))| {
                    (
                        t,
                        TermCount {
                            count,
                            broadcasts: bs.len() as u64,
                            users: us.len() as u64,
                        },
                    )
                })
                .collect(),
        )
    }

    pub fn get(&self, term: &str) -> TermCount {
        self.0.get(term).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub term: String,
    pub count: u64,
    pub broadcasts: u64,
    pub users: u64,
    /// Seed whose neighbourhood contributed the term (the term itself for seeds).
    pub seed: String,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub rows: Vec<ExpansionRow>,
    /// Seeds without any vector representation.
    pub skipped: Vec<String>,
}

impl Expansion {
    pub fn terms(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.term.as_str()).collect()
    }

    /// CSV `term,count,broadcasts,users,seed,distance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,count,broadcasts,users,seed,distance\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                csv_field(&r.term),
                r.count,
                r.broadcasts,
                r.users,
                csv_field(&r.seed),
                r.distance
            ));
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Union of the seeds and each seed's `n` nearest neighbours, annotated with
/// corpus statistics. A term reached from several seeds keeps its smallest
/// distance (earlier seed on ties). Rows are ordered by term.
pub fn expand_lexicon<S: AsRef<str>>(
    model: &EmbeddingModel,
    seeds: &[S],
    n: usize,
    stats: &TermStats,
) -> Result<Expansion> {
    if seeds.is_empty() {
        return Err(Error::Config(
            "lexicon expansion needs at least one seed".into(),
        ));
    }
    let mut best: BTreeMap<String, (f64, String)> = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut offer = |term: &str, distance: f64, seed: &str| match best.get(term) {
        Some((d, _)) if *d <= distance => {}
        _ => {
            best.insert(term.to_string(), (distance, seed.to_string()));
        }
    };
    for seed in seeds {
        let seed = seed.as_ref();
        offer(seed, 0.0, seed);
        if n == 0 {
            continue;
        }
        match model.nearest_neighbors(seed, n) {
            Ok(list) => list
                .neighbors
                .iter()
                .for_each(|nb| offer(&nb.term, nb.distance, seed)),
            Err(Error::NoRepresentation(_)) => {
                log::warn!("seed {seed:?} has no representation; skipped");
                skipped.push(seed.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    let rows = best
        .into_iter()
        .map(|(term, (distance, seed))| {
            let c = stats.get(&term);
            ExpansionRow {
                term,
                count: c.count,
                broadcasts: c.broadcasts,
                users: c.users,
                seed,
                distance,
            }
        })
        .collect();
    Ok(Expansion { rows, skipped })
}
